"""Doob w-transform of ``L_V - S`` and the constants of the comparison chain.

Given a positive solution ``w`` of ``L_V w = S w + F`` the transformed form

    Q^w[f] = A/2 sum (f_i - f_j)^2 K_ij w_i w_j + sum m_i F_i w_i f_i^2

lives on ``L^2(w^2 m)`` and satisfies ``Q^w[f] + sum m S w^2 f^2 =
E_V[w f]`` exactly. Everything downstream (Sobolev, ultracontractivity and
comparison constants) is measured from the discrete data; inequality
checks are evaluated on probe sets and report relative violations.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sl
from scipy import optimize
from scipy.special import logsumexp

from .errors import AssemblyError, ConfigurationError, NumericalError
from .operator import NonlocalForm, _laplacian
from .spectral import SpectralResult, eigensolve, green_matrix

__all__ = [
    "DoobForm",
    "ConstantLedger",
    "ComparisonReport",
    "ProbeCheck",
    "exponents",
    "solve_w",
    "build_doob",
    "conjugated_spectrum_error",
    "sobolev_ratio",
    "sobolev_constant",
    "ultracontractivity_norm",
    "ultracontractivity_log_norm",
    "ultracontractivity_constant",
    "build_ledger",
    "doob_probes",
    "hardy_check",
    "w_lower_bound_check",
    "l2_estimate_check",
    "lambda_check",
    "is1_check",
    "minimize_over_t",
    "compare",
    "moser_ladder",
    "moser_step_check",
]


def exponents(d: int, alpha: float, r: float | None = None):
    """Return ``(r, q, s)`` with ``q = (2r-1)/r`` and ``s = 2r/(r-1)``.

    ``r`` defaults to the Sobolev exponent ``d/(d-alpha)``; when ``alpha >= d``
    there is none and ``r`` must be given.
    """
    if r is None:
        if not alpha < d:
            raise ConfigurationError(f"no Sobolev exponent for alpha={alpha} >= d={d}; pass r explicitly")
        r = d / (d - alpha)
    r = float(r)
    if not r > 1.0 or not math.isfinite(r):
        raise ConfigurationError(f"Sobolev exponent r must be finite and > 1, got {r}")
    q = (2.0 * r - 1.0) / r
    s = 2.0 * r / (r - 1.0)
    return r, q, s


def _grid_function(form, f, name):
    f = np.broadcast_to(np.asarray(f, dtype=float), (form.size,)).copy()
    if np.any(f < 0) or not np.all(np.isfinite(f)):
        raise ConfigurationError(f"{name} must be finite and nonnegative")
    return f


def _smallest_eigenvalue(form, U):
    s = 1.0 / np.sqrt(form.mass)
    B = (form.matrix - np.diag(form.mass * U)) * s[:, None] * s[None, :]
    return float(sl.eigh(0.5 * (B + B.T), eigvals_only=True, subset_by_index=[0, 0])[0])


def solve_w(form: NonlocalForm, V, S=0.0, F=1.0, min_eigenvalue: float = 1e-8) -> np.ndarray:
    """Positive solution of ``L_V w = S w + F``.

    Solves ``(E - diag(m V) - diag(m S)) w = m F`` after checking that
    ``L_V - S`` is positive definite.
    """
    V = _grid_function(form, 0.0 if V is None else V, "V")
    S = _grid_function(form, S, "S")
    F = _grid_function(form, F, "F")
    if not (np.any(S) or np.any(F)):
        raise ConfigurationError("S and F cannot both vanish")
    mu = _smallest_eigenvalue(form, V + S)
    if mu <= min_eigenvalue:
        raise NumericalError(f"L_V - S is not positive definite: smallest eigenvalue {mu:.3g}",
                             module="doob", diagnostic={"smallest_eigenvalue": mu})
    P = form.matrix - np.diag(form.mass * (V + S))
    w = sl.solve(P, form.mass * F, assume_a="pos")
    if np.any(w <= 0):
        raise NumericalError("solution w is not positive", module="doob", diagnostic={"min": float(w.min())})
    return w


@dataclass(frozen=True, eq=False)
class DoobForm:
    """The w-transformed form on ``L^2(w^2 m)``."""

    form: NonlocalForm
    potential: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    S: np.ndarray = field(repr=False)
    F: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    identity_error: float = 0.0

    @property
    def mass(self) -> np.ndarray:
        """Reference measure ``w^2 m``."""
        return self.w**2 * self.form.mass

    @property
    def zero_order(self) -> np.ndarray:
        return self.form.mass * self.F * self.w

    @cached_property
    def interaction_matrix(self) -> np.ndarray:
        return _laplacian(self.weights, self.form.normalization)

    @cached_property
    def matrix(self) -> np.ndarray:
        return self.interaction_matrix + np.diag(self.zero_order)

    def energy(self, f):
        return _quad(self.matrix, f)

    def interaction(self, f):
        return _quad(self.interaction_matrix, f)

    @cached_property
    def spectrum(self):
        """Eigenpairs of the transformed generator, orthonormal in ``L^2(w^2 m)``."""
        s = 1.0 / np.sqrt(self.mass)
        B = self.matrix * s[:, None] * s[None, :]
        mu, Y = sl.eigh(0.5 * (B + B.T))
        return mu, Y * s[:, None]


def _quad(M, f):
    f = np.asarray(f, dtype=float)
    return np.einsum("i...,i...->...", f, M @ f)


def _random_probes(n, count, seed):
    return np.random.default_rng(seed).standard_normal((n, count))


def _identity_error(doob, probes):
    form = doob.form
    lhs = doob.energy(probes) + np.sum((form.mass * doob.S * doob.w**2)[:, None] * probes**2, axis=0)
    g = doob.w[:, None] * probes
    rhs = form.energy(g, doob.potential)
    return float(np.max(np.abs(lhs - rhs) / form.energy(g)))


def build_doob(form: NonlocalForm, V, w, S=0.0, F=1.0, n_probes: int = 100, seed: int = 0,
               rtol: float = 1e-8) -> DoobForm:
    """Build ``Q^w`` and verify ``Q^w[f] + sum m S w^2 f^2 = E_V[w f]``.

    Raises:
        AssemblyError: the identity fails on the random probes, which means
            ``w`` does not solve ``L_V w = S w + F``.
    """
    V = _grid_function(form, 0.0 if V is None else V, "V")
    S = _grid_function(form, S, "S")
    F = _grid_function(form, F, "F")
    w = np.asarray(w, dtype=float)
    if w.shape != (form.size,) or np.any(w <= 0):
        raise ConfigurationError("w must be a positive grid function")
    Kw = form.weights * np.outer(w, w)
    doob = DoobForm(form=form, potential=V, w=w, S=S, F=F, weights=Kw)
    err = _identity_error(doob, _random_probes(form.size, n_probes, seed))
    if err > rtol:
        raise AssemblyError(f"conjugation identity violated (relative error {err:.3g}); w is not a solution",
                            module="doob", diagnostic={"relative_error": err})
    return DoobForm(form=form, potential=V, w=w, S=S, F=F, weights=Kw, identity_error=err)


def conjugated_spectrum_error(doob: DoobForm) -> float:
    """Max relative gap between the spectra of ``w^{-1}(L_V - S) w`` and ``L_V - S``."""
    form = doob.form
    mu = doob.spectrum[0]
    s = 1.0 / np.sqrt(form.mass)
    B = (form.matrix - np.diag(form.mass * (doob.potential + doob.S))) * s[:, None] * s[None, :]
    nu = sl.eigh(0.5 * (B + B.T), eigvals_only=True)
    return float(np.max(np.abs(mu - nu) / np.maximum(1.0, np.abs(nu))))


def sobolev_ratio(form: NonlocalForm, V, r: float, g) -> np.ndarray:
    """``(sum m |g|^{2r})^{1/r} / E_V[g]`` per probe column."""
    g = np.asarray(g, dtype=float)
    m = form.mass[:, None] if g.ndim == 2 else form.mass
    num = np.sum(m * np.abs(g) ** (2.0 * r), axis=0) ** (1.0 / r)
    return num / form.energy(g, V)


def sobolev_constant(form: NonlocalForm, V=None, r: float | None = None, *, n_random: int = 1000,
                     seed: int = 0, safety: float = 1.5, ascent_steps: int = 30) -> float:
    """Empirical Sobolev constant ``C_S`` for ``E_V``, times ``safety``.

    Probes: every eigenvector of ``L_V``, ``n_random`` Gaussian vectors and
    the nodal bump at every node. The best probe is then pushed uphill with
    the fixed-point map ``g <- (L_V)^{-1} |g|^{2r-2} g``; only improvements
    are kept.
    """
    V = np.zeros(form.size) if V is None else np.asarray(V, dtype=float)
    if r is None:
        r = exponents(form.grid.dim, form.alpha)[0]
    P = form.matrix - np.diag(form.mass * V)
    s = 1.0 / np.sqrt(form.mass)
    _, Y = sl.eigh(0.5 * (P + P.T) * s[:, None] * s[None, :])
    candidates = [Y * s[:, None], _random_probes(form.size, n_random, seed)]
    best_val, best_g = -np.inf, None
    for C in candidates:
        vals = sobolev_ratio(form, V, r, C)
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val, best_g = float(vals[k]), C[:, k].copy()
    bumps = form.mass ** (1.0 / r) / np.diag(P)
    k = int(np.argmax(bumps))
    if bumps[k] > best_val:
        best_val = float(bumps[k])
        best_g = np.zeros(form.size)
        best_g[k] = 1.0
    cho = sl.cho_factor(P, lower=True)
    g = best_g
    for _ in range(ascent_steps):
        g = sl.cho_solve(cho, form.mass * np.abs(g) ** (2.0 * r - 2.0) * g)
        g /= np.max(np.abs(g))
        val = float(sobolev_ratio(form, V, r, g))
        if not val > best_val * (1.0 + 1e-12):
            best_val = max(best_val, val)
            break
        best_val = val
    return safety * best_val


def ultracontractivity_norm(doob: DoobForm, t) -> np.ndarray:
    """``||T_t^w||_{L^1(w^2 m) -> L^inf}`` = max kernel diagonal, for each ``t``."""
    return np.exp(ultracontractivity_log_norm(doob, t))


def ultracontractivity_log_norm(doob: DoobForm, t) -> np.ndarray:
    """Logarithm of :func:`ultracontractivity_norm`, safe for large ``t``."""
    mu, Y = doob.spectrum
    t = np.atleast_1d(np.asarray(t, dtype=float))
    Y2 = Y**2
    return np.array([np.max(logsumexp(-mu[None, :] * tk, b=Y2, axis=1)) for tk in t])


def ultracontractivity_constant(doob: DoobForm, S=None, t_list=None, r: float | None = None,
                                guard: bool = True) -> float:
    """``C1 = max_t ||T_t^w||_{1->inf} t^{s/2} exp(-||S||_inf t)``.

    The maximum runs over ``t_list`` and, with ``guard``, over a log grid on
    ``[1e-3, 1e3] / mu_0`` refined by golden-section search, so that the
    bound also holds between the listed times.
    """
    if t_list is None or len(t_list) == 0:
        raise ConfigurationError("ultracontractivity_constant needs a nonempty t_list")
    S = doob.S if S is None else np.broadcast_to(np.asarray(S, dtype=float), (doob.form.size,))
    _, _, s = exponents(doob.form.grid.dim, doob.form.alpha, r)
    smax = float(np.max(S))

    def log_val(t):
        return float(ultracontractivity_log_norm(doob, t)[0]) + 0.5 * s * math.log(t) - smax * t

    vals = [log_val(float(t)) for t in t_list]
    best = max(vals)
    if guard:
        mu0 = float(doob.spectrum[0][0])
        t_opt, v_opt = minimize_over_t(lambda t: -log_val(t), mu0)
        best = max(best, -v_opt)
    return math.exp(best)


def minimize_over_t(log_objective, lam: float, lo: float = 1e-3, hi: float = 1e3, n: int = 200):
    """Minimize a smooth unimodal function of ``t`` on ``[lo, hi] / lam``.

    Log-spaced scan of ``n`` points, then golden-section search in ``log t``
    around the best grid point. Returns ``(t, value)``.
    """
    u = np.linspace(math.log(lo / lam), math.log(hi / lam), n)
    vals = np.array([log_objective(math.exp(x)) for x in u])
    k = int(np.argmin(vals))
    if 0 < k < n - 1 and vals[k] < min(vals[k - 1], vals[k + 1]):
        res = optimize.minimize_scalar(lambda x: log_objective(math.exp(x)), bracket=(u[k - 1], u[k], u[k + 1]),
                                       method="golden")
        if res.fun <= vals[k]:
            return math.exp(float(res.x)), float(res.fun)
    return math.exp(float(u[k])), float(vals[k])


@dataclass(frozen=True)
class ConstantLedger:
    """Named constants of the comparison chain for one ``(V, w, S, F)``.

    ``lambda0`` is the free ground state energy (it enters the Hardy-based
    L^2 estimate); ``lambda0_V`` is the ground state energy of ``L_V``.
    """

    C_G: float
    C_H: float
    C0: float
    Lambda1: float
    Lambda2: float
    C_S: float
    r: float
    q: float
    s: float
    A: float
    C1: float
    lambda0: float
    lambda0_V: float
    volume: float
    S_sup: float
    F_sup: float
    notes: tuple = ()

    def log_C(self, t):
        return math.log(self.C1) - 0.5 * self.s * math.log(t) + t * self.lambda0_V

    def C(self, t):
        """``C(V, t) = C1 t^{-s/2} exp(t lambda0_V)``."""
        return math.exp(self.log_C(t))

    def log_M(self, t):
        return float(np.logaddexp(math.log(self.A * self.C0 * self.C_H) + 2.0 * self.log_C(t),
                                  math.log(2.0 * self.lambda0_V)))

    def M(self, t):
        """``M(V, t) = A C0 C_H C(V, t)^2 + 2 lambda0_V``."""
        return math.exp(self.log_M(t))

    def C_inf(self):
        t, v = minimize_over_t(self.log_C, self.lambda0_V)
        return t, math.exp(v)

    def M_inf(self):
        t, v = minimize_over_t(self.log_M, self.lambda0_V)
        return t, math.exp(v)

    def to_dict(self):
        out = asdict(self)
        out["notes"] = list(self.notes)
        return out


def build_ledger(form: NonlocalForm, V=None, S=0.0, F=1.0, *, w=None, r: float | None = None,
                 t_list=None, n_random: int = 1000, seed: int = 0, safety: float = 1.5,
                 free_green=None, doob: DoobForm | None = None):
    """Compute every constant for the transform of ``L_V - S`` by ``w``.

    ``w`` defaults to the solution of ``L_V w = S w + F``; with ``S = 0``,
    ``F = 1`` it is the torsion function. Returns ``(ledger, doob, free_green)``.
    """
    V = np.zeros(form.size) if V is None else np.asarray(V, dtype=float)
    notes = []
    d, alpha = form.grid.dim, form.alpha
    if r is None and not alpha < d:
        r = 2.0
        notes.append(f"alpha >= d: no Sobolev exponent d/(d-alpha); using r = {r}")
    r, q, s = exponents(d, alpha, r)
    if d < 3:
        notes.append("d < 3: outside the dimension range assumed for Hardy potentials")
    if free_green is None:
        free_green = green_matrix(form, None)
    lam_V = eigensolve(form, V, m=2).lambda0
    if doob is None:
        if w is None:
            w = solve_w(form, V, S, F)
        doob = build_doob(form, V, w, S, F, seed=seed)
    phi0 = free_green.ground_state
    m = form.mass
    C_G, C_H, lam0 = free_green.C_G, free_green.C_H, free_green.lambda0
    C0 = C_G * (float(np.sum(m * phi0 * doob.S * doob.w)) + float(np.sum(m * phi0 * doob.F)))
    F_sup = float(np.max(doob.F))
    L1 = 1.0 + 0.5 * C_H * C0
    L2 = 0.5 * F_sup**2 + 0.5 * C_H * C0 * lam0
    C_S = sobolev_constant(form, V, r, n_random=n_random, seed=seed, safety=safety)
    vol = form.grid.volume
    A = (C0 * C_H + C_S) * (1.0 + lam0 * C_S * vol ** (1.0 - 1.0 / r))
    if t_list is None:
        t_list = [c / lam_V for c in (0.1, 0.5, 1.0, 2.0, 5.0)]
    C1 = ultracontractivity_constant(doob, doob.S, t_list, r=r)
    ledger = ConstantLedger(C_G=C_G, C_H=C_H, C0=C0, Lambda1=L1, Lambda2=L2, C_S=C_S, r=r, q=q, s=s, A=A,
                            C1=C1, lambda0=lam0, lambda0_V=lam_V, volume=vol, S_sup=float(np.max(doob.S)),
                            F_sup=F_sup, notes=tuple(notes))
    return ledger, doob, free_green


@dataclass(frozen=True)
class ProbeCheck:
    """Outcome of an inequality ``lhs <= rhs`` evaluated on a probe set."""

    name: str
    max_violation: float
    probes: int
    tol: float = 1e-10

    @property
    def violations(self) -> int:
        return int(self._count)

    @property
    def passed(self) -> bool:
        return self.max_violation <= self.tol

    _count: int = 0

    def to_dict(self):
        return {"name": self.name, "max_violation": self.max_violation, "probes": self.probes,
                "violations": self.violations, "tol": self.tol, "passed": self.passed}


def _check(name, lhs, rhs, tol):
    lhs = np.asarray(lhs, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    scale = np.maximum(np.abs(rhs), np.finfo(float).tiny)
    rel = np.where((lhs == 0) & (rhs == 0), 0.0, (lhs - rhs) / scale)
    return ProbeCheck(name=name, max_violation=float(np.max(rel)), probes=int(rel.size), tol=tol,
                      _count=int(np.sum(rel > tol)))


def doob_probes(doob: DoobForm, n_random: int = 100, seed: int = 0, extra=(), bumps: bool = True):
    """Eigenvectors of ``Q^w``, Gaussian vectors, nodal bumps, the constant 1 and ``extra``."""
    n = doob.form.size
    cols = [doob.spectrum[1], _random_probes(n, n_random, seed + 1), np.ones((n, 1))]
    if bumps:
        cols.append(np.eye(n))
    cols += [np.asarray(e, dtype=float).reshape(-1, 1) for e in extra]
    return np.hstack(cols)


def hardy_check(form: NonlocalForm, phi0, C_H: float, probes, tol: float = 1e-10) -> ProbeCheck:
    """``sum m f^2 / phi0^2 <= C_H E[f]``."""
    lhs = np.sum((form.mass / np.asarray(phi0) ** 2)[:, None] * probes**2, axis=0)
    return _check("hardy", lhs, C_H * form.energy(probes), tol)


def w_lower_bound_check(doob: DoobForm, ledger: ConstantLedger, phi0, tol: float = 1e-10) -> ProbeCheck:
    """Pointwise ``w >= C0 phi0`` (one probe per node)."""
    return _check("w_lower_bound", ledger.C0 * np.asarray(phi0), doob.w, tol)


def l2_estimate_check(doob: DoobForm, ledger: ConstantLedger, probes, tol: float = 1e-10,
                      constant: float | None = None) -> ProbeCheck:
    """``sum m f^2 <= C (I_w[f] + lambda0 sum m w^2 f^2)``.

    ``C`` defaults to ``C0 C_H``; the chain ``w >= C0 phi0`` plus Hardy
    yields ``C_H / C0^2``, available through ``constant``.
    """
    m = doob.form.mass[:, None]
    C = ledger.C0 * ledger.C_H if constant is None else constant
    lhs = np.sum(m * probes**2, axis=0)
    rhs = C * (doob.interaction(probes) + ledger.lambda0 * np.sum(doob.mass[:, None] * probes**2, axis=0))
    return _check("l2_estimate" if constant is None else "l2_estimate_alt", lhs, rhs, tol)


def lambda_check(doob: DoobForm, ledger: ConstantLedger, probes, tol: float = 1e-10) -> ProbeCheck:
    """``Q^w[f] <= Lambda1 I_w[f] + Lambda2 sum m w^2 f^2``."""
    lhs = doob.energy(probes)
    rhs = ledger.Lambda1 * doob.interaction(probes) + ledger.Lambda2 * np.sum(doob.mass[:, None] * probes**2, axis=0)
    return _check("lambda_bound", lhs, rhs, tol)


def is1_check(doob: DoobForm, ledger: ConstantLedger, probes, tol: float = 1e-10) -> ProbeCheck:
    """``||f^2||_{L^q(w^2 m)} <= A (Q^w[f] + sum m S w^2 f^2)``."""
    wm = doob.mass[:, None]
    lhs = np.sum(wm * np.abs(probes) ** (2.0 * ledger.q), axis=0) ** (1.0 / ledger.q)
    rhs = ledger.A * (doob.energy(probes) + np.sum((doob.S[:, None] * wm) * probes**2, axis=0))
    return _check("is1", lhs, rhs, tol)


@dataclass(frozen=True)
class ComparisonReport:
    """Empirical ``phi0 / xi`` extremes against the two theoretical envelopes."""

    rho_plus: float
    rho_minus: float
    C_inf: float
    t_C: float
    M_inf: float
    t_M: float
    upper_ok: bool
    lower_ok: bool
    eigen_envelope: float | None = None
    ratio: np.ndarray = field(repr=False, compare=False, default=None)

    def to_dict(self):
        out = asdict(self)
        out.pop("ratio")
        return out


def compare(spec: SpectralResult, xi, ledger: ConstantLedger, doob: DoobForm | None = None) -> ComparisonReport:
    """Check ``phi0 <= inf_t C(V,t) xi`` and ``xi <= inf_t M(V,t) phi0``.

    With ``doob`` (the transform by ``xi``) the report also carries
    ``inf_t exp(t lambda0_V) ||T_t^xi||_{L^2 -> L^inf}``, the envelope the
    eigenfunction argument gives before the prefactor is replaced by ``C1``.
    """
    ratio = spec.ground_state / np.asarray(xi)
    tC, Cinf = ledger.C_inf()
    tM, Minf = ledger.M_inf()
    rp, rm = float(ratio.max()), float(ratio.min())
    env = None
    if doob is not None:
        lam = ledger.lambda0_V
        env = math.exp(minimize_over_t(
            lambda t: lam * t + 0.5 * float(ultracontractivity_log_norm(doob, 2.0 * t)[0]), lam)[1])
    return ComparisonReport(rho_plus=rp, rho_minus=rm, C_inf=Cinf, t_C=tC, M_inf=Minf, t_M=tM,
                            upper_ok=bool(rp <= Cinf), lower_ok=bool(1.0 / rm <= Minf), eigen_envelope=env,
                            ratio=ratio)


def moser_ladder(rho, phi0, q: float, k_max: int, mass) -> np.ndarray:
    """``Theta_k = (sum m rho^{j_k} phi0^2)^{1/j_k}`` with ``j_k = 2 q^k``.

    Evaluated in log space; returns ``Theta_0 .. Theta_{k_max}``.
    """
    rho = np.asarray(rho, dtype=float)
    if np.any(rho <= 0):
        raise ConfigurationError("Moser ladder needs a positive ratio")
    if not q > 1:
        raise ConfigurationError(f"Moser exponent q must be > 1, got {q}")
    b = np.asarray(mass) * np.asarray(phi0) ** 2
    lr = np.log(rho)
    out = np.empty(k_max + 1)
    for k in range(k_max + 1):
        j = 2.0 * q**k
        out[k] = math.exp(logsumexp(j * lr, b=b) / j)
    return out


def moser_step_check(theta, q: float, M: float):
    """Per-step test of ``Theta_{k+1} <= (M q^{2k})^{1/(2 q^k)} Theta_k``.

    Returns ``(ok, factor)`` arrays of length ``len(theta) - 1``.
    """
    theta = np.asarray(theta)
    k = np.arange(theta.size - 1)
    log_factor = (math.log(M) + 2.0 * k * math.log(q)) / (2.0 * q**k)
    ok = np.log(theta[1:]) <= np.log(theta[:-1]) + log_factor + 1e-12
    return ok, np.exp(log_factor)
