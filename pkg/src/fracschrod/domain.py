"""Cell-centered grids on intervals and axis-aligned boxes.

Every node is the center of a cell that lies inside the domain, so no node
sits on the boundary and the boundary distance is strictly positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

__all__ = ["Grid", "build_interval", "build_box"]


def _readonly(a, dtype=float):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform cell-centered grid on ``prod_k [lo_k, hi_k]``.

    Attributes:
        lo, hi: Domain corners, one entry per axis.
        shape: Number of cells per axis.
        spacing: Cell width per axis.
        coords: Node coordinates, shape ``(N, d)``.
        cell_measure: Cell volume ``m_i`` per node.
        delta: Euclidean distance from each node to the complement.
        index: Integer cell index per node, shape ``(N, d)``.
    """

    lo: tuple
    hi: tuple
    shape: tuple
    spacing: tuple
    coords: np.ndarray = field(repr=False)
    cell_measure: np.ndarray = field(repr=False)
    delta: np.ndarray = field(repr=False)
    index: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return self.coords.shape[0]

    @property
    def h(self) -> float:
        """Largest cell width."""
        return max(self.spacing)

    @property
    def volume(self) -> float:
        return float(np.prod(np.subtract(self.hi, self.lo)))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))

    @property
    def interior(self) -> np.ndarray:
        # cell-centered: every node is interior
        return np.arange(self.size)

    @property
    def x(self) -> np.ndarray:
        """Node coordinates of a 1D grid as a flat array."""
        if self.dim != 1:
            raise AttributeError("x is only defined for 1D grids")
        return self.coords[:, 0]

    def center_index(self) -> int:
        """Index of the node closest to the domain center (lowest index on ties)."""
        c = 0.5 * (np.asarray(self.lo) + np.asarray(self.hi))
        return int(np.argmin(np.linalg.norm(self.coords - c, axis=1)))

    def to_dict(self) -> dict:
        kind = "interval" if self.dim == 1 else "box"
        return {"kind": kind, "lo": list(self.lo), "hi": list(self.hi), "n": list(self.shape)}


def _check_bounds(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise ConfigurationError(f"non-finite domain bounds {lo}, {hi}")
    if np.any(hi <= lo):
        raise ConfigurationError(f"degenerate domain: lo={lo.tolist()} hi={hi.tolist()}")
    return lo, hi


def _build(lo, hi, n):
    lo, hi = _check_bounds(lo, hi)
    n = tuple(int(k) for k in n)
    h = (hi - lo) / np.asarray(n)
    axes = [lo[k] + (np.arange(n[k]) + 0.5) * h[k] for k in range(len(n))]
    idx = np.stack(np.meshgrid(*[np.arange(k) for k in n], indexing="ij"), axis=-1).reshape(-1, len(n))
    coords = np.stack([axes[k][idx[:, k]] for k in range(len(n))], axis=1)
    side = np.minimum(coords - lo, hi - coords)
    delta = side.min(axis=1)
    m = np.full(coords.shape[0], float(np.prod(h)))
    return Grid(
        lo=tuple(lo.tolist()),
        hi=tuple(hi.tolist()),
        shape=n,
        spacing=tuple(h.tolist()),
        coords=_readonly(coords),
        cell_measure=_readonly(m),
        delta=_readonly(delta),
        index=_readonly(idx, dtype=int),
    )


def build_interval(a: float, b: float, n: int) -> Grid:
    """Grid of ``n`` equal cells on ``(a, b)``; requires ``n >= 4``."""
    if int(n) != n or n < 4:
        raise ConfigurationError(f"interval needs an integer n >= 4, got {n}")
    return _build([a], [b], [n])


def build_box(lo, hi, n) -> Grid:
    """Tensor grid of cell centers on the box ``[lo, hi]`` in 2D."""
    lo = tuple(lo)
    hi = tuple(hi)
    n = tuple(n)
    if len(lo) != 2 or len(hi) != 2 or len(n) != 2:
        raise ConfigurationError("box grids are two-dimensional: lo, hi and n need two entries")
    if any(int(k) != k or k < 2 for k in n):
        raise ConfigurationError(f"box needs integer cell counts >= 2, got {n}")
    return _build(lo, hi, n)
