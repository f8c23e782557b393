"""Discrete Dirichlet form of the restricted fractional Laplacian.

The form is stored as pair weights ``K`` and a killing vector ``kappa`` so
that

    E[f] = A/2 * sum_{i != j} (f_i - f_j)**2 K_ij + sum_i kappa_i f_i**2

with ``A = A(d, alpha)``. The generator ``L0`` is fixed by the pairing
``E[f] = sum_i m_i f_i (L0 f)_i``.

Weights are point-to-cell integrals of ``|x - y|**(-d-alpha)`` from each
node to every other cell, plus a second-order correction for the removed
self cell that is spread over the axis neighbours (neighbours outside the
domain are zero and feed the killing term). The exterior interaction is the
exact integral over the complement evaluated at the node.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, special

from .domain import Grid
from .errors import AssemblyError, ConfigurationError

__all__ = [
    "NonlocalForm",
    "normalization_constant",
    "assemble",
    "apply_generator",
    "exterior_integral",
    "export_form",
    "load_form_matrix",
]


def normalization_constant(d: int, alpha: float) -> float:
    """Constant ``A(d, alpha)`` in front of the singular kernel.

    ``alpha * Gamma((d+alpha)/2) / (2**(1-alpha) * pi**(d/2) * Gamma(1-alpha/2))``

    The closed formula is valid for every ``0 < alpha < 2``; runs with
    ``alpha >= d`` are allowed and left to callers to flag.
    """
    if d not in (1, 2, 3):
        raise ConfigurationError(f"dimension must be 1, 2 or 3, got {d}")
    if not (0.0 < alpha < 2.0) or not np.isfinite(alpha):
        raise ConfigurationError(f"alpha must lie in (0, 2), got {alpha}")
    return float(
        alpha
        * special.gamma(0.5 * (d + alpha))
        / (2.0 ** (1.0 - alpha) * np.pi ** (0.5 * d) * special.gamma(1.0 - 0.5 * alpha))
    )


def _check_alpha(alpha):
    alpha = float(alpha)
    if not (0.0 < alpha < 2.0):
        raise ConfigurationError(f"alpha must lie in (0, 2), got {alpha}")
    return alpha


def _cos_power_integral(phi, alpha):
    # int_0^phi cos(t)**alpha dt for phi in [0, pi/2]
    a, b = 0.5, 0.5 * (alpha + 1.0)
    return 0.5 * special.beta(a, b) * special.betainc(a, b, np.sin(phi) ** 2)


def exterior_integral(grid: Grid, alpha: float) -> np.ndarray:
    """``int_{complement} |x_i - y|**(-d-alpha) dy`` at every node (no ``A``).

    Uses the polar identity ``(1/alpha) * int_{S^{d-1}} R(theta)**(-alpha)``
    where ``R`` is the distance to the boundary along ``theta``; the domain is
    convex so each ray leaves it once.
    """
    alpha = _check_alpha(alpha)
    lo = np.asarray(grid.lo)
    hi = np.asarray(grid.hi)
    x = grid.coords
    if grid.dim == 1:
        return ((hi[0] - x[:, 0]) ** (-alpha) + (x[:, 0] - lo[0]) ** (-alpha)) / alpha
    if grid.dim != 2:
        raise ConfigurationError("only 1D and 2D grids are supported")
    dl, dr = x[:, 0] - lo[0], hi[0] - x[:, 0]
    db, dt = x[:, 1] - lo[1], hi[1] - x[:, 1]

    def side(dn, da, db_):
        # side at normal distance dn, corners at tangential offsets da, db_
        return dn ** (-alpha) * (
            _cos_power_integral(np.arctan(da / dn), alpha) + _cos_power_integral(np.arctan(db_ / dn), alpha)
        )

    total = side(dr, dt, db) + side(dl, dt, db) + side(dt, dr, dl) + side(db, dr, dl)
    return total / alpha


def _near_field_1d(h, alpha):
    # int_{-h/2}^{h/2} t^2 |t|^{-1-alpha} dt, spread by a second difference
    moment = 2.0 * (0.5 * h) ** (2.0 - alpha) / (2.0 - alpha)
    return (moment / (2.0 * h * h),)


def _near_field_2d(spacing, alpha):
    a, b = 0.5 * spacing[0], 0.5 * spacing[1]
    tc = np.arctan2(b, a)
    p = 2.0 - alpha

    def moment(trig):
        # int over [-a,a]x[-b,b] of t_k^2 |t|^{-2-alpha}, in polar coordinates
        f1 = lambda t: trig(t) ** 2 * (a / np.cos(t)) ** p / p  # noqa: E731
        f2 = lambda t: trig(t) ** 2 * (b / np.sin(t)) ** p / p  # noqa: E731
        return 4.0 * (integrate.quad(f1, 0.0, tc, epsabs=0, epsrel=1e-13)[0]
                      + integrate.quad(f2, tc, 0.5 * np.pi, epsabs=0, epsrel=1e-13)[0])

    ix = moment(np.cos)
    iy = moment(np.sin)
    return (ix / (2.0 * spacing[0] ** 2), iy / (2.0 * spacing[1] ** 2))


def _offset_weights_1d(n, h, alpha):
    k = np.arange(n, dtype=float)
    w = np.zeros(n)
    k = k[1:]
    w[1:] = ((k - 0.5) ** (-alpha) - (k + 0.5) ** (-alpha)) * h ** (-alpha) / alpha
    return w


def _cell_quadrature(cx, cy, hx, hy, alpha, order, nsub):
    g, wg = np.polynomial.legendre.leggauss(order)
    s = (np.arange(nsub) + 0.5) / nsub - 0.5
    # sub-cell centers + Gauss points, relative to the cell center
    ux = (s[:, None] + 0.5 * g[None, :] / nsub).ravel() * hx
    uy = (s[:, None] + 0.5 * g[None, :] / nsub).ravel() * hy
    wx = np.tile(wg, nsub) * 0.5 * hx / nsub
    wy = np.tile(wg, nsub) * 0.5 * hy / nsub
    X = np.asarray(cx)[..., None, None] + ux[:, None]
    Y = np.asarray(cy)[..., None, None] + uy[None, :]
    f = (X * X + Y * Y) ** (-(2.0 + alpha) / 2.0)
    return np.einsum("...ij,i,j->...", f, wx, wy)


def _offset_weights_2d(shape, spacing, alpha, order=6, rtol=1e-11, max_sub=256):
    nx, ny = shape
    hx, hy = spacing
    P, Q = np.meshgrid(np.arange(nx) * hx, np.arange(ny) * hy, indexing="ij")
    W = _cell_quadrature(P, Q, hx, hy, alpha, order, 1)
    W[0, 0] = 0.0
    for p, q in ((1, 0), (0, 1), (1, 1)):
        if p >= nx or q >= ny:
            continue
        nsub, prev = 2, _cell_quadrature(p * hx, q * hy, hx, hy, alpha, order, 1)
        while True:
            cur = _cell_quadrature(p * hx, q * hy, hx, hy, alpha, order, nsub)
            if abs(cur - prev) <= rtol * abs(cur):
                break
            if nsub >= max_sub:
                raise AssemblyError(
                    f"adjacent-cell quadrature did not converge for offset {(p, q)}",
                    module="operator",
                    diagnostic={"offset": (p, q), "change": abs(cur - prev) / abs(cur)},
                )
            nsub, prev = 2 * nsub, cur
        W[p, q] = cur
    return W


@dataclass(frozen=True, eq=False)
class NonlocalForm:
    """Assembled discrete form; immutable.

    Attributes:
        grid: The underlying grid.
        alpha: Order of the operator.
        normalization: ``A(d, alpha)``.
        weights: Symmetric pair weights ``K`` with zero diagonal.
        killing: Killing vector ``kappa``, already in form units (includes ``A``).
    """

    grid: Grid
    alpha: float
    normalization: float
    weights: np.ndarray = field(repr=False)
    killing: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.grid.size

    @property
    def mass(self) -> np.ndarray:
        return self.grid.cell_measure

    @cached_property
    def matrix(self) -> np.ndarray:
        """Symmetric form matrix ``E`` with ``E[f] = f @ E @ f``."""
        return _laplacian(self.weights, self.normalization) + np.diag(self.killing)

    @cached_property
    def generator(self) -> np.ndarray:
        return self.matrix / self.mass[:, None]

    def energy(self, f, V=None):
        """``E[f] - sum m V f^2``; ``f`` may hold probes as columns."""
        f = np.asarray(f, dtype=float)
        ef = self.matrix @ f
        if V is not None:
            ef = ef - (self.mass * V)[:, None] * f if f.ndim == 2 else ef - self.mass * V * f
        return np.einsum("i...,i...->...", f, ef)

    def interaction(self, f, weight=None):
        """``A/2 sum (f_i-f_j)^2 K_ij w_i w_j``; no killing part."""
        K = self.weights if weight is None else self.weights * np.outer(weight, weight)
        f = np.asarray(f, dtype=float)
        return np.einsum("i...,i...->...", f, _laplacian(K, self.normalization) @ f)

    def is_markov(self) -> bool:
        off = self.generator - np.diag(np.diag(self.generator))
        return bool(np.all(off <= 0.0))


def _laplacian(K, A):
    return A * (np.diag(K.sum(axis=1)) - K)


def assemble(grid: Grid, alpha: float) -> NonlocalForm:
    """Assemble pair weights and killing vector on ``grid``.

    In 1D the point-to-cell weights are closed form; in 2D they use tensor
    Gauss-Legendre quadrature (6 points per axis), with adaptive subdivision
    for the eight cells touching the node's own cell.
    """
    alpha = _check_alpha(alpha)
    d = grid.dim
    A = normalization_constant(d, alpha)
    m = grid.cell_measure
    idx = grid.index
    if d == 1:
        W = _offset_weights_1d(grid.shape[0], grid.spacing[0], alpha)
        near = _near_field_1d(grid.spacing[0], alpha)
        off = np.abs(idx[:, 0][:, None] - idx[:, 0][None, :])
        K = W[off]
        K[off == 1] += near[0]
    elif d == 2:
        W = _offset_weights_2d(grid.shape, grid.spacing, alpha)
        near = _near_field_2d(grid.spacing, alpha)
        ox = np.abs(idx[:, 0][:, None] - idx[:, 0][None, :])
        oy = np.abs(idx[:, 1][:, None] - idx[:, 1][None, :])
        K = W[ox, oy]
        K[(ox == 1) & (oy == 0)] += near[0]
        K[(ox == 0) & (oy == 1)] += near[1]
        del ox, oy
    else:
        raise ConfigurationError("only 1D and 2D grids are supported")
    K *= m[:, None]
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 0.0)

    # axis neighbours that fall outside the domain carry the exterior value 0
    missing = np.zeros(grid.size)
    for k in range(d):
        edge = (idx[:, k] == 0).astype(float) + (idx[:, k] == grid.shape[k] - 1).astype(float)
        missing += edge * near[k]
    killing = m * A * (exterior_integral(grid, alpha) + missing)

    K.setflags(write=False)
    killing.setflags(write=False)
    return NonlocalForm(grid=grid, alpha=alpha, normalization=A, weights=K, killing=killing)


def apply_generator(form: NonlocalForm, f) -> np.ndarray:
    """``(L0 f)_i = A sum_j (f_i - f_j) K_ij / m_i + kappa_i f_i / m_i``."""
    f = np.asarray(f, dtype=float)
    if f.shape[0] != form.size:
        raise ConfigurationError(f"grid function has {f.shape[0]} entries, grid has {form.size}")
    out = form.matrix @ f
    return out / form.mass[:, None] if out.ndim == 2 else out / form.mass


def export_form(form: NonlocalForm, path) -> None:
    """Write the form matrix as little-endian float64.

    Layout: header ``[d, alpha, N]`` (three float64), then ``E`` row-major.
    """
    header = np.array([form.grid.dim, form.alpha, form.size], dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.ascontiguousarray(form.matrix, dtype="<f8").tobytes())


def load_form_matrix(path):
    """Read a file written by :func:`export_form`; returns ``(d, alpha, E)``."""
    raw = np.fromfile(path, dtype="<f8")
    d, alpha, n = int(raw[0]), float(raw[1]), int(raw[2])
    if raw.size != 3 + n * n:
        raise ConfigurationError(f"form dump {path} is truncated: expected {3 + n * n} values, got {raw.size}")
    return d, alpha, raw[3:].reshape(n, n)
