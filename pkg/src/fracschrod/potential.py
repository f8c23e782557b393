"""Hardy-type and bounded potentials, truncations and relative form bounds."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sl
from scipy import integrate, special

from .domain import Grid
from .errors import ConfigurationError, NumericalError
from .operator import NonlocalForm

__all__ = [
    "KINDS",
    "PotentialSpec",
    "critical_constant",
    "evaluate",
    "truncate",
    "fractional_truncate",
    "relative_bound",
    "load_tabulated",
]

KINDS = ("hardy_origin", "hardy_boundary", "bounded_constant", "tabulated")


def critical_constant(kind: str, d: int, alpha: float):
    """Sharp Hardy constant for ``kind``, or ``None`` when there is none.

    ``hardy_origin``: ``2**alpha Gamma((d+alpha)/4)**2 / Gamma((d-alpha)/4)**2``
    (needs ``alpha < d``); ``hardy_boundary``: ``Gamma((alpha+1)/2)**2 / pi``.
    """
    if kind == "hardy_origin":
        if not alpha < d:
            raise ConfigurationError(f"hardy_origin needs alpha < d, got alpha={alpha}, d={d}")
        return float(2.0**alpha * special.gamma((d + alpha) / 4.0) ** 2 / special.gamma((d - alpha) / 4.0) ** 2)
    if kind == "hardy_boundary":
        return float(special.gamma((alpha + 1.0) / 2.0) ** 2 / np.pi)
    if kind in ("bounded_constant", "tabulated"):
        return None
    raise ConfigurationError(f"unknown potential kind {kind!r}; expected one of {KINDS}")


@dataclass(frozen=True)
class PotentialSpec:
    """Description of a nonnegative potential.

    ``strength`` is the coupling ``c``; ``critical`` is populated for the two
    Hardy kinds. ``values`` holds node values for ``tabulated``.
    """

    kind: str
    strength: float = 1.0
    alpha: float | None = None
    critical: float | None = None
    truncation: float | None = None
    values: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")
        if not np.isfinite(self.strength) or self.strength < 0:
            raise ConfigurationError(f"potential strength must be finite and >= 0, got {self.strength}")
        if self.kind in ("hardy_origin", "hardy_boundary") and self.alpha is None:
            raise ConfigurationError(f"{self.kind} needs alpha")
        if self.kind == "tabulated" and self.values is None:
            raise ConfigurationError("tabulated potential needs values")
        if self.truncation is not None and not self.truncation > 0:
            raise ConfigurationError(f"truncation level must be > 0, got {self.truncation}")

    @classmethod
    def hardy(cls, kind, d, alpha, fraction, truncation=None):
        """Hardy potential with ``c = fraction * c*``."""
        cs = critical_constant(kind, d, alpha)
        if cs is None:
            raise ConfigurationError(f"{kind} has no critical constant")
        return cls(kind=kind, strength=fraction * cs, alpha=alpha, critical=cs, truncation=truncation)

    @property
    def fraction(self):
        if not self.critical:
            return None
        return self.strength / self.critical

    def scaled(self, factor):
        return replace(self, strength=self.strength * factor)


def _rect_power_integral(a, b, alpha):
    # int_0^a int_0^b |x|^{-alpha} dy dx for a, b >= 0 (d = 2), polar split
    if a <= 0 or b <= 0:
        return 0.0
    p = 2.0 - alpha
    tc = np.arctan2(b, a)
    f1 = lambda t: (a / np.cos(t)) ** p / p  # noqa: E731
    f2 = lambda t: (b / np.sin(t)) ** p / p  # noqa: E731
    return (integrate.quad(f1, 0.0, tc, epsabs=0, epsrel=1e-13)[0]
            + integrate.quad(f2, tc, 0.5 * np.pi, epsabs=0, epsrel=1e-13)[0])


def _origin_cell_average(x, spacing, alpha):
    d = len(x)
    if d == 1:
        lo, hi = x[0] - 0.5 * spacing[0], x[0] + 0.5 * spacing[0]
        F = lambda t: np.sign(t) * abs(t) ** (1.0 - alpha) / (1.0 - alpha)  # noqa: E731
        return (F(hi) - F(lo)) / spacing[0]
    lo = np.asarray(x) - 0.5 * np.asarray(spacing)
    hi = np.asarray(x) + 0.5 * np.asarray(spacing)
    total = 0.0
    # inclusion-exclusion over corners of G(x, y) = int_0^x int_0^y |t|^-alpha
    for ex, ax in ((-1.0, lo[0]), (1.0, hi[0])):
        for ey, ay in ((-1.0, lo[1]), (1.0, hi[1])):
            total += ex * ey * np.sign(ax) * np.sign(ay) * _rect_power_integral(abs(ax), abs(ay), alpha)
    return total / float(np.prod(spacing))


def evaluate(spec: PotentialSpec, grid: Grid) -> np.ndarray:
    """Node values of the potential on ``grid``.

    Hardy potentials are evaluated at cell centers; a node within ``h/10`` of
    the origin takes the exact cell average of ``c |x|**(-alpha)`` instead.
    """
    alpha = spec.alpha
    if spec.kind == "hardy_origin":
        lo, hi = np.asarray(grid.lo), np.asarray(grid.hi)
        if not (np.all(lo < 0) and np.all(hi > 0)):
            raise ConfigurationError("hardy_origin needs the origin inside the domain")
        r = np.linalg.norm(grid.coords, axis=1)
        V = np.empty(grid.size)
        close = r < grid.h / 10.0
        V[~close] = spec.strength * r[~close] ** (-alpha)
        for i in np.flatnonzero(close):
            V[i] = spec.strength * _origin_cell_average(grid.coords[i], grid.spacing, alpha)
    elif spec.kind == "hardy_boundary":
        V = spec.strength * grid.delta ** (-alpha)
    elif spec.kind == "bounded_constant":
        V = np.full(grid.size, float(spec.strength))
    else:
        V = np.asarray(spec.values, dtype=float)
        if V.shape != (grid.size,):
            raise ConfigurationError(f"tabulated potential has {V.size} values, grid has {grid.size} nodes")
        if np.any(V < 0) or not np.all(np.isfinite(V)):
            raise ConfigurationError("tabulated potential must be finite and nonnegative")
        V = spec.strength * V
    if spec.truncation is not None:
        V = truncate(V, spec.truncation)
    return V


def truncate(V, k: float) -> np.ndarray:
    """Pointwise ``min(V, k)``."""
    if not k > 0:
        raise ConfigurationError(f"truncation level must be > 0, got {k}")
    return np.minimum(np.asarray(V, dtype=float), k)


def fractional_truncate(V, k: int) -> np.ndarray:
    """``(1 - 1/k) V``, the ladder approximation of a critical potential."""
    if k < 2:
        raise ConfigurationError(f"ladder index must be >= 2, got {k}")
    return (1.0 - 1.0 / k) * np.asarray(V, dtype=float)


def relative_bound(form: NonlocalForm, V) -> float:
    """Best ``kappa`` with ``sum m V f^2 <= kappa E[f]``.

    Largest eigenvalue of the pencil ``(diag(m V), E)``.
    """
    V = np.asarray(V, dtype=float)
    if np.any(V < 0):
        raise ConfigurationError("relative_bound needs a nonnegative potential")
    if not np.any(V):
        return 0.0
    n = form.size
    try:
        top = sl.eigh(np.diag(form.mass * V), form.matrix, eigvals_only=True, subset_by_index=[n - 1, n - 1])
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"generalized eigensolve for the relative bound failed: {exc}",
                             module="potential", diagnostic={"n": n}) from exc
    return float(top[0])


def load_tabulated(path, grid: Grid) -> np.ndarray:
    """Read a two-column text file ``node_index value`` (``#`` comments)."""
    data = np.loadtxt(path, comments="#", ndmin=2)
    if data.shape[1] != 2:
        raise ConfigurationError(f"{path}: expected two columns (node index, value)")
    idx = data[:, 0]
    if np.any(idx != np.round(idx)):
        raise ConfigurationError(f"{path}: node indices must be integers")
    idx = idx.astype(int)
    if sorted(idx.tolist()) != list(range(grid.size)):
        raise ConfigurationError(f"{path}: every node index 0..{grid.size - 1} must appear exactly once")
    V = np.empty(grid.size)
    V[idx] = data[:, 1]
    return V
