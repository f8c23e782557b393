"""Ground states, torsion, Green matrices and heat kernels of ``L0 - V``.

All grid functions live in the discrete ``L^2(m)`` pairing ``<f, g> = sum
m_i f_i g_i``. Integral kernels (Green matrix, heat kernel) are taken with
respect to the same measure, so ``(G f)_i = sum_j G_ij f_j m_j``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl

from .errors import ConfigurationError, NotSubcriticalError, NumericalError
from .operator import NonlocalForm
from .potential import relative_bound

__all__ = [
    "SpectralResult",
    "GreenData",
    "eigensolve",
    "torsion",
    "green_matrix",
    "hardy_constant",
    "ground_state_representation_residual",
    "heat_kernel",
    "semigroup_residual",
    "iuc_ratio",
    "lambda_from_heat",
    "lambda_from_heat_bound",
    "boundary_lower_bound",
    "distance_hardy_constant",
]


def _potential(form, V):
    if V is None:
        return np.zeros(form.size)
    V = np.asarray(V, dtype=float)
    if V.shape != (form.size,):
        raise ConfigurationError(f"potential has shape {V.shape}, grid has {form.size} nodes")
    return V


def _pencil(form, V):
    return form.matrix - np.diag(form.mass * V)


@dataclass(frozen=True, eq=False)
class SpectralResult:
    """Lowest eigenpairs of the pencil ``(E - diag(m V), diag(m))``.

    ``eigenvectors[:, k]`` is ``L^2(m)``-normalized; the ground state is
    positive.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = field(repr=False)
    mass: np.ndarray = field(repr=False)
    potential: np.ndarray = field(repr=False)
    relative_bound: float
    max_residual: float
    indefinite: bool = False

    @property
    def lambda0(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def ground_state(self) -> np.ndarray:
        return self.eigenvectors[:, 0]

    @property
    def gap(self) -> float:
        return float(self.eigenvalues[1] - self.eigenvalues[0])

    @property
    def count(self) -> int:
        return self.eigenvalues.size


def eigensolve(form: NonlocalForm, V=None, m: int | None = None, *, critical: bool = False,
               tol: float = 1e-9) -> SpectralResult:
    """Dense symmetric eigensolve of ``L_V = L0 - V``.

    Args:
        form: Assembled free form.
        V: Potential values (``None`` means ``V = 0``).
        m: Number of eigenpairs, all of them when ``None``.
        critical: Skip the subcriticality gate (``kappa < 1``).
        tol: Residual tolerance ``||L_V phi - lambda phi|| <= tol max(1, |lambda|)``.

    Raises:
        NotSubcriticalError: ``kappa >= 1`` and ``critical`` is false.
        NumericalError: residual too large, nonpositive ground state or a
            degenerate ground state energy.
    """
    V = _potential(form, V)
    n = form.size
    m = n if m is None else int(m)
    if not 2 <= m <= n:
        raise ConfigurationError(f"eigencount must lie in [2, {n}], got {m}")
    kappa = relative_bound(form, V)
    if kappa >= 1.0 and not critical:
        raise NotSubcriticalError(f"potential is not subcritical: relative bound {kappa:.6g} >= 1",
                                  module="spectral", diagnostic={"relative_bound": kappa})
    s = 1.0 / np.sqrt(form.mass)
    B = _pencil(form, V) * s[:, None] * s[None, :]
    B = 0.5 * (B + B.T)
    lam, Y = sl.eigh(B, subset_by_index=[0, m - 1])
    phi = Y * s[:, None]

    k = np.argmax(np.abs(phi[:, 0]))
    if phi[k, 0] < 0:
        phi[:, 0] = -phi[:, 0]

    R = _pencil(form, V) @ phi / form.mass[:, None] - phi * lam
    res = np.sqrt(np.sum(form.mass[:, None] * R * R, axis=0)) / np.maximum(1.0, np.abs(lam))
    if np.max(res) > tol:
        raise NumericalError(f"eigen residual {np.max(res):.3g} exceeds tolerance {tol:.3g}",
                             module="spectral", diagnostic={"residual": float(np.max(res))})

    indefinite = bool(lam[0] < -tol * max(1.0, abs(lam[-1])))
    if indefinite:
        warnings.warn(f"indefinite form: lowest eigenvalue {lam[0]:.6g} < 0", RuntimeWarning, stacklevel=2)
    if not critical or not indefinite:
        if np.any(phi[:, 0] <= 0):
            raise NumericalError("ground state is not strictly positive",
                                 module="spectral", diagnostic={"min": float(phi[:, 0].min())})
        if lam[1] - lam[0] <= tol * max(1.0, abs(lam[0])):
            raise NumericalError("lowest eigenvalue is not simple", module="spectral",
                                 diagnostic={"gap": float(lam[1] - lam[0])})
    for a in (lam, phi):
        a.setflags(write=False)
    return SpectralResult(eigenvalues=lam, eigenvectors=phi, mass=form.mass, potential=V,
                          relative_bound=kappa, max_residual=float(np.max(res)), indefinite=indefinite)


def _cholesky(form, V, what):
    try:
        return sl.cho_factor(_pencil(form, V), lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"{what}: form pencil is not positive definite", module="spectral",
                             diagnostic={"error": str(exc)}) from exc


def torsion(form: NonlocalForm, V=None) -> np.ndarray:
    """Solve ``L_V xi = 1``, i.e. ``(E - diag(m V)) xi = m``."""
    V = _potential(form, V)
    xi = sl.cho_solve(_cholesky(form, V, "torsion"), form.mass)
    if np.any(xi <= 0):
        raise NumericalError("torsion function is not positive", module="spectral",
                             diagnostic={"min": float(xi.min())})
    return xi


def hardy_constant(form: NonlocalForm, phi0) -> float:
    """Best ``C_H`` in ``sum m f^2 / phi0^2 <= C_H E[f]`` (free form ``E``)."""
    n = form.size
    top = sl.eigh(np.diag(form.mass / np.asarray(phi0) ** 2), form.matrix, eigvals_only=True,
                  subset_by_index=[n - 1, n - 1])
    return float(top[0])


def distance_hardy_constant(form: NonlocalForm) -> float:
    """Best constant in ``sum m f^2 / delta^alpha <= C E[f]``."""
    n = form.size
    w = form.mass / form.grid.delta ** form.alpha
    return float(sl.eigh(np.diag(w), form.matrix, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0])


@dataclass(frozen=True, eq=False)
class GreenData:
    """Green matrix of ``L_V`` and the constants read off it.

    ``intrinsic_constant`` is ``C_G = min G_ij / (phi0_i phi0_j)`` with the
    ground state of the same operator; ``hardy`` is ``C_H`` measured against
    the free form.
    """

    G: np.ndarray = field(repr=False)
    torsion: np.ndarray = field(repr=False)
    ground_state: np.ndarray = field(repr=False)
    potential: np.ndarray = field(repr=False)
    lambda0: float
    intrinsic_constant: float
    hardy: float

    @property
    def C_G(self) -> float:
        return self.intrinsic_constant

    @property
    def C_H(self) -> float:
        return self.hardy


def green_matrix(form: NonlocalForm, V=None, spectral: SpectralResult | None = None,
                 min_lambda0: float = 1e-8) -> GreenData:
    """Full inverse of the pencil, ``G = (E - diag(m V))^{-1}``."""
    V = _potential(form, V)
    if spectral is None:
        spectral = eigensolve(form, V, m=2)
    if spectral.lambda0 <= min_lambda0:
        raise NumericalError(f"pencil is near singular: lambda0 = {spectral.lambda0:.3g}",
                             module="spectral", diagnostic={"lambda0": spectral.lambda0})
    G = sl.cho_solve(_cholesky(form, V, "green_matrix"), np.eye(form.size))
    G = 0.5 * (G + G.T)
    phi = spectral.ground_state
    CG = float(np.min(G / np.outer(phi, phi)))
    xi = G @ form.mass
    G.setflags(write=False)
    return GreenData(G=G, torsion=xi, ground_state=phi, potential=V, lambda0=spectral.lambda0,
                     intrinsic_constant=CG, hardy=hardy_constant(form, phi))


def ground_state_representation_residual(form: NonlocalForm, V, spec: SpectralResult,
                                         green: GreenData) -> float:
    """``L^2(m)`` norm of ``phi - G[(V - U) phi] - lambda G[phi]``.

    ``U`` is the potential the Green data was built for; with free Green
    data this is the ground-state representation ``phi = K(V phi) + lambda K phi``.
    """
    V = _potential(form, V)
    phi = spec.ground_state
    rhs = form.mass * ((V - green.potential) * phi + spec.lambda0 * phi)
    r = phi - green.G @ rhs
    return float(np.sqrt(np.sum(form.mass * r * r)))


def heat_kernel(spec: SpectralResult, t: float, tol: float = 1e-10) -> np.ndarray:
    """``p_t(i, j) = sum_k exp(-lambda_k t) phi_k(i) phi_k(j)``.

    With a partial spectrum the tail is bounded by
    ``exp(-(lambda_{m-1} - lambda_0) t) / (min m * min phi0^2)`` relative to
    the leading term; above ``tol`` more eigenpairs are required.
    """
    if not t > 0:
        raise ConfigurationError(f"heat kernel needs t > 0, got {t}")
    lam, phi = spec.eigenvalues, spec.eigenvectors
    if phi.shape[1] < phi.shape[0]:
        est = np.exp(-(lam[-1] - lam[0]) * t) / (spec.mass.min() * spec.ground_state.min() ** 2)
        if est > tol:
            raise NumericalError(
                f"spectral truncation error {est:.3g} above {tol:.3g} at t={t:.4g}; request more eigenpairs",
                module="spectral", diagnostic={"estimate": float(est), "m": int(lam.size)})
    return (phi * np.exp(-lam * t)) @ phi.T


def semigroup_residual(spec: SpectralResult, t: float, s: float) -> float:
    """Relative max-norm defect of ``p_{t+s} = p_t o p_s`` in the ``m`` pairing."""
    a = heat_kernel(spec, t)
    b = heat_kernel(spec, s)
    c = heat_kernel(spec, t + s)
    comp = (a * spec.mass[None, :]) @ b
    return float(np.max(np.abs(c - comp)) / np.max(np.abs(c)))


def iuc_ratio(p_t, phi0, lam0: float, t: float):
    """Extremes of ``exp(lam0 t) p_t(i, j) / (phi0_i phi0_j)`` over all pairs."""
    R = np.exp(lam0 * t) * p_t / np.outer(phi0, phi0)
    return float(R.min()), float(R.max())


def _pair(xi, pair):
    if pair is None:
        c = int(np.argmax(xi))
        return c, c
    return pair


def lambda_from_heat(p_t, xi, t: float, pair=None) -> float:
    """``-(1/t) ln(p_t(i0, j0) / (xi_i0 xi_j0))``.

    ``pair`` defaults to the node where ``xi`` peaks twice over, which is
    the domain center for symmetric problems.
    """
    i, j = _pair(xi, pair)
    p = p_t[i, j]
    if not p > np.finfo(float).tiny * 1e3:
        raise NumericalError(f"heat kernel underflow at t={t:.4g} (p={p:.3g}); use a smaller t",
                             module="spectral", diagnostic={"p": float(p)})
    return float(-np.log(p / (xi[i] * xi[j])) / t)


def lambda_from_heat_bound(p_t, phi0, xi, lam0: float, t: float, pair=None) -> float:
    """Error bound for :func:`lambda_from_heat` from the ratio band and ``phi0 / xi``."""
    i, j = _pair(xi, pair)
    lo, hi = iuc_ratio(p_t, phi0, lam0, t)
    band = max(abs(np.log(lo)), abs(np.log(hi)))
    scale = abs(np.log(phi0[i] * phi0[j] / (xi[i] * xi[j])))
    return float((band + scale) / t)


def boundary_lower_bound(form: NonlocalForm, phi0) -> float:
    """``min_i phi0_i / delta_i^(alpha/2)``."""
    return float(np.min(np.asarray(phi0) / form.grid.delta ** (0.5 * form.alpha)))
