"""Critical coupling reached through the ladder ``V_k = (1 - 1/k) V_*``.

Every rung is an ordinary subcritical solve; the critical ground state
energy, ground state and torsion function are first-order extrapolations in
``1/k`` over the last rungs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl

from .doob import build_ledger, minimize_over_t, solve_w
from .errors import ConfigurationError, NumericalError
from .operator import NonlocalForm
from .potential import fractional_truncate, relative_bound
from .spectral import GreenData, SpectralResult, eigensolve, green_matrix, heat_kernel, lambda_from_heat, torsion

__all__ = [
    "CriticalLadder",
    "run_ladder",
    "sign_preservation_check",
    "critical_lower_bound_check",
    "critical_sharp_comparison",
    "limit_heat_lambda",
    "default_critical_r",
]


@dataclass(frozen=True, eq=False)
class CriticalLadder:
    """Per-rung results and extrapolated limits.

    ``phi_diff[i]`` is the ``L^2(m)`` distance between the ground states of
    rungs ``i`` and ``i + 1``. ``stopped`` is the first rung whose relative
    bound reached 1, or ``None`` if the ladder ran to ``k_max``.
    """

    base: np.ndarray = field(repr=False)
    mass: np.ndarray = field(repr=False)
    k: np.ndarray
    lambdas: np.ndarray
    kappas: np.ndarray
    w_constants: np.ndarray
    phis: np.ndarray = field(repr=False)
    xis: np.ndarray = field(repr=False)
    phi_diff: np.ndarray
    lambda_star: float
    fit_residual: float
    phi_star: np.ndarray = field(repr=False)
    xi_star: np.ndarray = field(repr=False)
    last: SpectralResult = field(repr=False)
    stopped: int | None = None

    @property
    def complete(self) -> bool:
        return self.stopped is None

    @property
    def V_last(self) -> np.ndarray:
        return fractional_truncate(self.base, int(self.k[-1]))

    def decay_exponent(self, tail: int = 10) -> float:
        """Slope ``p`` of ``log(lambda_k - lambda_{k+1}) ~ -p log k`` over the tail."""
        dl = -np.diff(self.lambdas)
        k = self.k[:-1]
        sel = slice(max(0, dl.size - tail), dl.size)
        if np.any(dl[sel] <= 0):
            return float("nan")
        return float(-np.polyfit(np.log(k[sel]), np.log(dl[sel]), 1)[0])

    def to_dict(self):
        return {
            "rungs": [{"k": int(k), "lambda0": float(l), "kappa": float(c), "C0": float(w),
                       "phi_diff": (float(d) if d is not None else None)}
                      for k, l, c, w, d in zip(self.k, self.lambdas, self.kappas, self.w_constants,
                                               list(self.phi_diff) + [None])],
            "lambda_star": self.lambda_star,
            "fit_residual": self.fit_residual,
            "stopped": self.stopped,
            "decay_exponent": self.decay_exponent(),
        }


def _fit_limit(k, Y, n_fit):
    # least-squares fit Y = Y* + a/k on the last n_fit rungs; returns (Y*, rms residual)
    sel = slice(max(0, k.size - n_fit), k.size)
    x = 1.0 / k[sel]
    if x.size < 2:
        return Y[-1], 0.0
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, Y[sel], rcond=None)
    res = Y[sel] - X @ coef
    return coef[0], float(np.sqrt(np.mean(res**2)))


def run_ladder(form: NonlocalForm, V_star, k_max: int = 32, *, k_min: int = 2, n_fit: int = 5, S=0.0, F=1.0,
               free_green: GreenData | None = None, eigencount: int = 40) -> CriticalLadder:
    """Run the subcritical pipeline for ``V_k = (1 - 1/k) V_*``, ``k = k_min..k_max``.

    A rung with relative bound ``>= 1`` ends the ladder at the previous rung.
    ``C0`` per rung uses the solution ``w_k`` of ``L_{V_k} w = S w + F``.
    """
    V_star = np.asarray(V_star, dtype=float)
    if V_star.shape != (form.size,) or np.any(V_star < 0):
        raise ConfigurationError("critical base potential must be a nonnegative grid function")
    if not 2 <= k_min < k_max:
        raise ConfigurationError(f"need 2 <= k_min < k_max, got {k_min}, {k_max}")
    if free_green is None:
        free_green = green_matrix(form, None)
    phi0 = free_green.ground_state
    m = form.mass
    S_arr = np.broadcast_to(np.asarray(S, dtype=float), (form.size,))
    F_arr = np.broadcast_to(np.asarray(F, dtype=float), (form.size,))
    eigencount = min(eigencount, form.size)
    ks, lams, kaps, C0s, phis, xis = [], [], [], [], [], []
    last = None
    stopped = None
    for k in range(k_min, k_max + 1):
        Vk = fractional_truncate(V_star, k)
        kappa = relative_bound(form, Vk)
        if kappa >= 1.0:
            stopped = k
            break
        spec = eigensolve(form, Vk, m=eigencount if k == k_max else 2)
        xi = torsion(form, Vk)
        w = xi if (not np.any(S_arr) and np.all(F_arr == 1.0)) else solve_w(form, Vk, S_arr, F_arr)
        C0s.append(free_green.C_G * float(np.sum(m * phi0 * (S_arr * w + F_arr))))
        ks.append(k)
        lams.append(spec.lambda0)
        kaps.append(kappa)
        phis.append(spec.ground_state)
        xis.append(xi)
        last = spec
    if not ks:
        raise NumericalError("first ladder rung is not subcritical", module="critical",
                             diagnostic={"k": k_min})
    if stopped is not None or last.count < eigencount:
        last = eigensolve(form, fractional_truncate(V_star, ks[-1]), m=eigencount)
    k = np.asarray(ks, dtype=float)
    lams = np.asarray(lams)
    phis = np.asarray(phis)
    xis = np.asarray(xis)
    diff = np.sqrt(np.sum(m[None, :] * np.diff(phis, axis=0) ** 2, axis=1))
    lam_star, resid = _fit_limit(k, lams, n_fit)
    phi_star, _ = _fit_limit(k, phis, n_fit)
    xi_star, _ = _fit_limit(k, xis, n_fit)
    phi_star = phi_star / math.sqrt(float(np.sum(m * phi_star**2)))
    return CriticalLadder(base=V_star, mass=m, k=k.astype(int), lambdas=lams, kappas=np.asarray(kaps),
                          w_constants=np.asarray(C0s), phis=phis, xis=xis, phi_diff=diff,
                          lambda_star=float(lam_star), fit_residual=resid, phi_star=phi_star,
                          xi_star=xi_star, last=last, stopped=stopped)


def sign_preservation_check(form: NonlocalForm, V, F) -> np.ndarray | float:
    """Minimum of the solution of ``(E - diag(m V)) f = m F``, per column of ``F``.

    Raises:
        NumericalError: the pencil is not positive definite.
    """
    V = np.asarray(V, dtype=float)
    F = np.asarray(F, dtype=float)
    if np.any(F < 0):
        raise ConfigurationError("sign preservation needs F >= 0")
    P = form.matrix - np.diag(form.mass * V)
    try:
        cho = sl.cho_factor(P, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("pencil is not positive definite", module="critical",
                             diagnostic={"n": form.size}) from exc
    rhs = form.mass[:, None] * F if F.ndim == 2 else form.mass * F
    f = sl.cho_solve(cho, rhs)
    return f.min(axis=0) if f.ndim == 2 else float(f.min())


@dataclass(frozen=True)
class LowerBoundReport:
    """Both readings of the interior lower bound for ``phi*``.

    ``a``: exponent ``alpha/2`` on ``phi0``; ``b``: exponent 1.
    """

    constant_a: float
    fraction_a: float
    margin_a: float
    constant_b: float
    fraction_b: float
    margin_b: float


def critical_lower_bound_check(ladder: CriticalLadder, free_green: GreenData, alpha: float,
                               C_G: float | None = None, rtol: float = 1e-10) -> LowerBoundReport:
    """Evaluate ``phi* >= (C_G lambda* sum m phi0^p phi*) phi0^p`` for ``p = alpha/2`` and ``p = 1``.

    Fractions are of nodes where the bound holds; margins are
    ``min (phi* - bound) / phi*``.
    """
    CG = free_green.C_G if C_G is None else C_G
    phi0, phis, m = free_green.ground_state, ladder.phi_star, ladder.mass
    out = []
    for p in (0.5 * alpha, 1.0):
        c = CG * ladder.lambda_star * float(np.sum(m * phi0**p * phis))
        rel = (phis - c * phi0**p) / phis
        out += [c, float(np.mean(rel >= -rtol)), float(rel.min())]
    return LowerBoundReport(*out)


def default_critical_r(d: int, alpha: float) -> float:
    """Midpoint of ``(1, d/(d - alpha))``."""
    if not alpha < d:
        raise ConfigurationError(f"no Sobolev exponent for alpha={alpha} >= d={d}")
    return 0.5 * (1.0 + d / (d - alpha))


@dataclass(frozen=True)
class SharpComparison:
    """Two-sided envelope ``lower * xi* <= phi* <= upper * xi*`` at the ladder limit."""

    ratio_min: float
    ratio_max: float
    lower: float
    upper: float
    t_upper: float
    t_lower: float
    r: float
    lower_ok: bool
    upper_ok: bool
    ledger: dict = field(repr=False)


def critical_sharp_comparison(ladder: CriticalLadder, form: NonlocalForm, r: float | None = None,
                              exclude=None, **ledger_kw) -> SharpComparison:
    """Envelopes built from the last rung's constants with ``lambda*`` in the exponentials.

    ``upper = C1 inf_t t^{-s/2} e^{t lambda*}`` and
    ``lower = 1 / (A C0 C_H C1^2 inf_t t^{-s} e^{2 t lambda*} + 1)``.
    ``exclude`` masks nodes (e.g. the singular cell) out of the ratio extremes.
    """
    if r is None:
        r = default_critical_r(form.grid.dim, form.alpha)
    led, _, _ = build_ledger(form, ladder.V_last, r=r, **ledger_kw)
    lam = ladder.lambda_star
    tu, lu = minimize_over_t(lambda t: math.log(led.C1) - 0.5 * led.s * math.log(t) + t * lam, lam)
    tl, ll = minimize_over_t(lambda t: -led.s * math.log(t) + 2.0 * t * lam, lam)
    upper = math.exp(lu)
    lower = 1.0 / (led.A * led.C0 * led.C_H * led.C1**2 * math.exp(ll) + 1.0)
    ratio = ladder.phi_star / ladder.xi_star
    if exclude is not None:
        ratio = ratio[~np.asarray(exclude, dtype=bool)]
    return SharpComparison(ratio_min=float(ratio.min()), ratio_max=float(ratio.max()), lower=lower, upper=upper,
                           t_upper=tu, t_lower=tl, r=led.r, lower_ok=bool(ratio.min() >= lower),
                           upper_ok=bool(ratio.max() <= upper), ledger=led.to_dict())


def limit_heat_lambda(ladder: CriticalLadder, t: float | None = None):
    """``lambda`` recovered from ``p_t / (xi* xi*)`` with the last rung's heat kernel.

    ``t`` defaults to ``30 / lambda*``. Returns ``(t, estimate)``.
    """
    if t is None:
        t = 30.0 / ladder.lambda_star
    p = heat_kernel(ladder.last, t)
    return t, lambda_from_heat(p, ladder.xi_star, t)
