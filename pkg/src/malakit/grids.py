"""Discretized densities on 1D/2D grids: the desk-scale ground truth.

Everything distribution-level — TV distance, stationarity checks, Cheeger
and conductance computations — is measured against these grids, so masses
are validated to sum to one and grid geometries must match exactly before
two distributions are compared.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .targets import ConstraintSet, TargetModel

__all__ = ["GridDistribution", "EmptySupportError", "grid_truth", "histogram", "tv_distance"]


class EmptySupportError(ValueError):
    """No probability mass landed on the grid."""


@dataclass(frozen=True)
class GridDistribution:
    """Cell masses over a regular 1D or 2D grid.

    ``mass`` has shape ``bins`` and sums to 1 within 1e-12.
    ``out_of_bounds`` counts samples that fell off the grid when the
    distribution came from binning (never silently dropped).
    """

    lower: tuple[float, ...]
    upper: tuple[float, ...]
    bins: tuple[int, ...]
    mass: np.ndarray
    out_of_bounds: int = 0

    def __post_init__(self):
        lower = tuple(float(v) for v in np.atleast_1d(self.lower))
        upper = tuple(float(v) for v in np.atleast_1d(self.upper))
        bins = tuple(int(v) for v in np.atleast_1d(self.bins))
        mass = np.asarray(self.mass, dtype=float)
        if len(bins) not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        if len(lower) != len(bins) or len(upper) != len(bins):
            raise ValueError("lower/upper/bins must have matching lengths")
        if any(b < 2 for b in bins):
            raise ValueError("need at least 2 bins per axis")
        if any(lo >= hi for lo, hi in zip(lower, upper)):
            raise ValueError("each axis needs lower < upper")
        if mass.shape != bins:
            raise ValueError(f"mass must have shape {bins}, got {mass.shape}")
        if np.any(mass < 0):
            raise ValueError("cell masses must be nonnegative")
        total = float(mass.sum())
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"cell masses must sum to 1 (got {total!r})")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "bins", bins)
        object.__setattr__(self, "mass", mass)

    @property
    def dims(self) -> int:
        return len(self.bins)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.mass.shape

    def widths(self) -> tuple[float, ...]:
        return tuple((hi - lo) / b for lo, hi, b in zip(self.lower, self.upper, self.bins))

    def edges(self, axis: int = 0) -> np.ndarray:
        return np.linspace(self.lower[axis], self.upper[axis], self.bins[axis] + 1)

    def midpoints(self, axis: int = 0) -> np.ndarray:
        e = self.edges(axis)
        return 0.5 * (e[:-1] + e[1:])

    def same_geometry(self, other: "GridDistribution") -> bool:
        return (self.lower, self.upper, self.bins) == (other.lower, other.upper, other.bins)

    def cell_centers(self) -> np.ndarray:
        """(n_cells, dims) midpoints in the same order as ``mass.ravel()``."""
        return _midpoint_mesh(self.lower, self.upper, self.bins)

    def sample_midpoints(self, rng: np.random.Generator, n: int) -> np.ndarray:
        """Draw cell midpoints with the cell probabilities (binning-exact)."""
        centers = self.cell_centers()
        idx = rng.choice(centers.shape[0], size=n, p=self.mass.ravel())
        return centers[idx]


def _normalize_geometry(bounds, bins):
    arr = np.asarray(bounds, dtype=float)
    if arr.ndim == 1:
        if arr.shape != (2,):
            raise ValueError("1D bounds must be (lo, hi)")
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] not in (1, 2):
        raise ValueError("bounds must be (lo, hi) or ((lo1, hi1), (lo2, hi2))")
    bins_arr = np.broadcast_to(np.asarray(bins, dtype=int), (arr.shape[0],))
    return tuple(arr[:, 0]), tuple(arr[:, 1]), tuple(int(b) for b in bins_arr)


def _midpoint_mesh(lower, upper, bins):
    axes = [np.linspace(lo, hi, b + 1) for lo, hi, b in zip(lower, upper, bins)]
    mids = [0.5 * (a[:-1] + a[1:]) for a in axes]
    if len(mids) == 1:
        return mids[0][:, None]
    gx, gy = np.meshgrid(mids[0], mids[1], indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def grid_truth(target: TargetModel, bounds, bins, constraint: ConstraintSet | None = None) -> GridDistribution:
    """Normalized midpoint quadrature of e^{-U} (times the constraint).

    Warns when boundary cells carry more than 1e-6 of the mass — the grid
    is then truncating the target.  Raises :class:`EmptySupportError` if
    the constraint misses the grid entirely.
    """
    lower, upper, bins = _normalize_geometry(bounds, bins)
    if target.dimension != len(bins):
        raise ValueError(f"target dimension {target.dimension} does not match {len(bins)}D grid")
    points = _midpoint_mesh(lower, upper, bins)
    if target.vectorized:
        log_w = -np.asarray(target.potential(points), dtype=float)
    else:
        log_w = -np.array([float(target.potential(p)) for p in points])
    if constraint is not None:
        inside = np.asarray(constraint.contains(points), dtype=bool)
        log_w = np.where(inside, log_w, -np.inf)
    finite = np.isfinite(log_w)
    if not np.any(finite):
        raise EmptySupportError("no grid cell carries mass (constraint misses the grid?)")
    peak = np.max(log_w[finite])
    w = np.where(finite, np.exp(log_w - peak), 0.0)
    mass = (w / w.sum()).reshape(bins)
    _warn_boundary_mass(mass)
    return GridDistribution(lower=lower, upper=upper, bins=bins, mass=mass)


def _warn_boundary_mass(mass: np.ndarray) -> None:
    if mass.ndim == 1:
        edge = float(mass[0] + mass[-1])
    else:
        interior = float(mass[1:-1, 1:-1].sum())
        edge = float(mass.sum() - interior)
    if edge > 1e-6:
        warnings.warn(f"boundary cells carry {edge:.3g} of the mass; widen the grid", stacklevel=3)


def histogram(samples, bounds, bins) -> GridDistribution:
    """Bin samples into a grid distribution.

    Out-of-bounds samples are excluded from the normalization but counted
    in ``out_of_bounds``.  Raises :class:`EmptySupportError` when nothing
    lands inside.
    """
    lower, upper, bins = _normalize_geometry(bounds, bins)
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[1] != len(bins):
        raise ValueError(f"samples have dimension {x.shape[1]}, grid is {len(bins)}D")
    inside = np.ones(x.shape[0], dtype=bool)
    for a in range(len(bins)):
        inside &= (x[:, a] >= lower[a]) & (x[:, a] <= upper[a])
    kept = x[inside]
    if kept.shape[0] == 0:
        raise EmptySupportError("no samples fall inside the grid bounds")
    edges = [np.linspace(lower[a], upper[a], bins[a] + 1) for a in range(len(bins))]
    counts, _ = np.histogramdd(kept, bins=edges)
    mass = counts / counts.sum()
    return GridDistribution(lower=lower, upper=upper, bins=bins, mass=mass,
                            out_of_bounds=int(x.shape[0] - kept.shape[0]))


def tv_distance(p: GridDistribution, q: GridDistribution) -> float:
    """Total variation distance (half the L1 gap) on a shared grid."""
    if not p.same_geometry(q):
        raise ValueError("grid geometries differ")
    return 0.5 * float(np.abs(p.mass - q.mass).sum())
