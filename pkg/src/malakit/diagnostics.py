"""Chain measurement at desk scale.

Discretized transition kernels, Cheeger constants and conductance on 1D
grids, replica-based mixing-time estimates, energy-error scaling fits,
acceptance statistics, and the Gaussian-norm tail check.  Conductance
minimization searches prefix cuts (exact for monotone 1D kernels) plus a
randomized subset family, so reported values are upper bounds over the
searched family and are labeled as such.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .chains import ChainTrace, run_ensemble
from .grids import EmptySupportError, GridDistribution, grid_truth, histogram, tv_distance
from .rng import chain_rng, subseed
from .targets import ConstraintSet, TargetModel

__all__ = [
    "ScalingFit",
    "AcceptanceStats",
    "HansonWrightReport",
    "FitFailed",
    "cheeger_1d",
    "restricted_cheeger_1d",
    "transition_matrix_1d",
    "conductance",
    "restricted_conductance",
    "mixing_time_estimate",
    "hitting_time",
    "energy_error_scaling",
    "acceptance_stats",
    "hanson_wright_check",
]

_HALF_TOL = 1e-12


class FitFailed(RuntimeError):
    """Too few usable step sizes survived to fit a scaling exponent."""


def cheeger_1d(pi: GridDistribution, density: Callable[[float], float]) -> float:
    """Isoperimetric constant of a 1D density by exhaustive half-line cuts.

    For each interior cell edge t the candidate ratio is density(t) divided
    by the smaller side mass (only sides with mass in (0, 1/2] compete).
    ``density`` must be the normalized density matching ``pi``.
    """
    if pi.dims != 1:
        raise ValueError("cheeger_1d needs a 1D grid")
    if pi.bins[0] < 2:
        raise ValueError("grid is degenerate")
    edges = pi.edges(0)[1:-1]
    left = np.cumsum(pi.mass)[:-1]
    best = math.inf
    for t, mass_left in zip(edges, left):
        side = min(float(mass_left), float(1.0 - mass_left))
        if side <= 0.0 or side > 0.5 + _HALF_TOL:
            continue
        best = min(best, float(density(float(t))) / side)
    if not math.isfinite(best):
        raise ValueError("no admissible cut found")
    return best


def restricted_cheeger_1d(pi: GridDistribution, density: Callable[[float], float], within) -> float:
    """Cheeger constant restricted to subsets of the cell mask ``within``.

    The cut family is half-lines intersected with the mask; the boundary
    measure of a cut counts every edge where membership flips between two
    grid cells.  Mass condition is pi(S) > 0 (no half cap), per the
    restricted definition.
    """
    if pi.dims != 1:
        raise ValueError("restricted_cheeger_1d needs a 1D grid")
    mask = np.asarray(within, dtype=bool)
    if mask.shape != pi.mass.shape:
        raise ValueError("mask must match the grid shape")
    if not np.any(mask):
        raise ValueError("mask selects no cells")
    edges = pi.edges(0)
    n = pi.bins[0]
    best = math.inf
    for k in range(1, n + 1):
        member = mask.copy()
        member[k:] = False
        mass = float(pi.mass[member].sum())
        if mass <= 0.0:
            continue
        boundary = 0.0
        for e in range(1, n):  # interior edges only: thickening beyond the grid gains no mass
            if member[e - 1] != member[e]:
                boundary += float(density(float(edges[e])))
        best = min(best, boundary / mass)
    if not math.isfinite(best):
        raise ValueError("no admissible restricted cut found")
    return best


def transition_matrix_1d(target: TargetModel, kernel_kind: str, eta: float,
                         grid: GridDistribution) -> np.ndarray:
    """Row-stochastic discretization of the MALA or RWM kernel on a 1D grid.

    Off-diagonal entries are midpoint quadrature of proposal density times
    acceptance probability; rejection mass and any off-grid proposal mass
    are folded into the diagonal (the grid must be wide enough that the
    folded mass is negligible — checked by the row-sum tests).
    """
    if grid.dims != 1:
        raise ValueError("transition_matrix_1d needs a 1D grid")
    if kernel_kind not in ("mala", "rwm"):
        raise ValueError(f"unknown kernel kind {kernel_kind!r}")
    if eta <= 0:
        raise ValueError("eta must be positive")
    mids = grid.midpoints(0)
    width = grid.widths()[0]
    pts = mids[:, None]
    if target.vectorized:
        log_pi = -np.asarray(target.potential(pts), dtype=float)
    else:
        log_pi = -np.array([float(target.potential(np.array([m]))) for m in mids])

    if kernel_kind == "mala":
        if target.vectorized:
            grad = np.asarray(target.gradient(pts), dtype=float)[:, 0]
        else:
            grad = np.array([float(np.asarray(target.gradient(np.array([m])))[0]) for m in mids])
        mean = mids - 0.5 * eta * eta * grad
    else:
        mean = mids
    # log q[i, j]: proposal density from midpoint i to midpoint j
    diff = mids[None, :] - mean[:, None]
    log_q = -(diff * diff) / (2.0 * eta * eta) - math.log(eta * math.sqrt(2.0 * math.pi))
    if kernel_kind == "mala":
        log_ratio = (log_pi[None, :] + log_q.T) - (log_pi[:, None] + log_q)
    else:
        log_ratio = log_pi[None, :] - log_pi[:, None]
    accept = np.exp(np.minimum(0.0, log_ratio))
    kernel = np.exp(log_q) * accept * width
    np.fill_diagonal(kernel, 0.0)
    off_mass = kernel.sum(axis=1)
    if np.any(off_mass > 1.0 + 1e-9):
        raise ValueError("off-diagonal mass exceeds 1; refine the grid or shrink eta")
    np.fill_diagonal(kernel, np.maximum(0.0, 1.0 - off_mass))
    return kernel


def _cut_ratios(flow_out: float, flow_in: float, mass: float, allow_half: bool) -> list[float]:
    out = []
    cap = 0.5 + _HALF_TOL if allow_half else math.inf
    if 0.0 < mass <= cap:
        out.append(flow_out / mass)
    comp = 1.0 - mass
    if 0.0 < comp <= cap:
        out.append(flow_in / comp)
    return out


def conductance(kernel: np.ndarray, pi: GridDistribution,
                random_subsets: int = 10000, seed: int = 0) -> float:
    """Upper bound on the kernel conductance over prefix + random cuts.

    min over evaluated S with 0 < pi(S) <= 1/2 of flow(S, complement) /
    pi(S).  Prefix cuts are exhaustive (and exact for monotone 1D
    kernels); the random-subset family is a safety net against
    non-contiguous minimizers.
    """
    kernel = np.asarray(kernel, dtype=float)
    p = pi.mass.ravel()
    n = p.size
    if kernel.shape != (n, n):
        raise ValueError("kernel and grid sizes differ")
    flux = p[:, None] * kernel

    best = math.inf
    # prefix cuts, incremental flows
    suffix = np.cumsum(flux[:, ::-1], axis=1)[:, ::-1]     # suffix[i, k] = sum_{j >= k} flux[i, j]
    prefix = np.cumsum(flux, axis=1)                       # prefix[i, k] = sum_{j <= k} flux[i, j]
    top = np.cumsum(suffix, axis=0)                        # top[m, k] = sum_{i <= m} suffix[i, k]
    bottom = np.cumsum(prefix[::-1, :], axis=0)[::-1, :]   # bottom[m, k] = sum_{i >= m} prefix[i, k]
    mass_prefix = np.cumsum(p)
    for k in range(1, n):
        flow_out = float(top[k - 1, k])        # i < k, j >= k
        flow_in = float(bottom[k, k - 1])      # i >= k, j < k
        for r in _cut_ratios(flow_out, flow_in, float(mass_prefix[k - 1]), allow_half=True):
            best = min(best, r)

    if random_subsets > 0 and n >= 2:
        rng = chain_rng(seed)
        masks = rng.random((random_subsets, n)) < 0.5
        best = min(best, _subset_min_ratio(flux, p, masks, allow_half=True))
    return best


def restricted_conductance(kernel: np.ndarray, pi: GridDistribution, within,
                           random_subsets: int = 10000, seed: int = 0) -> float:
    """Conductance restricted to subsets of the cell mask ``within``.

    Mass condition is pi(S) > 0; flow still exits to the full complement.
    """
    kernel = np.asarray(kernel, dtype=float)
    p = pi.mass.ravel()
    n = p.size
    mask = np.asarray(within, dtype=bool).ravel()
    if mask.shape != p.shape:
        raise ValueError("mask must match the grid size")
    if not np.any(mask):
        raise ValueError("mask selects no cells")
    flux = p[:, None] * kernel
    cells = np.arange(n)
    best = math.inf
    prefix_masks = []
    for k in range(1, n + 1):
        m = mask & (cells < k)
        if m.any():
            prefix_masks.append(m)
    masks = np.array(prefix_masks, dtype=bool)
    best = min(best, _subset_min_ratio(flux, p, masks, allow_half=False))
    if random_subsets > 0:
        rng = chain_rng(seed)
        rand = (rng.random((random_subsets, n)) < 0.5) & mask[None, :]
        keep = rand.any(axis=1)
        if keep.any():
            best = min(best, _subset_min_ratio(flux, p, rand[keep], allow_half=False))
    return best


def _subset_min_ratio(flux: np.ndarray, p: np.ndarray, masks: np.ndarray, allow_half: bool) -> float:
    m = masks.astype(float)
    mass = m @ p
    row_flow = m @ flux                       # (k, n): sum_{i in S} flux[i, j]
    internal = np.einsum("kj,kj->k", row_flow, m)
    flow_out = row_flow.sum(axis=1) - internal
    col_totals = flux.sum(axis=0)
    flow_in = m @ col_totals - internal
    best = math.inf
    cap = 0.5 + _HALF_TOL if allow_half else math.inf
    for k in range(masks.shape[0]):
        if 0.0 < mass[k] <= cap:
            best = min(best, float(flow_out[k] / mass[k]))
        comp = 1.0 - mass[k]
        if allow_half and 0.0 < comp <= cap:
            best = min(best, float(flow_in[k] / comp))
    return best


def mixing_time_estimate(
    target: TargetModel,
    sampler: str,
    eta: float,
    init: Callable[[np.random.Generator, int], np.ndarray],
    tv_threshold: float,
    replicas: int,
    check_every: int,
    seed: int,
    grid_bounds,
    grid_bins,
    max_iterations: int,
    constraint: ConstraintSet | None = None,
    lazy: bool = False,
    control_draws: int = 3,
) -> int | None:
    """First iteration at which the replica ensemble is TV-close to truth.

    Runs ``replicas`` chains from ``init`` and bins their positions at
    multiples of ``check_every``; the threshold applies to the binned TV
    minus the binning floor (estimated by drawing the same number of exact
    samples from the grid truth — raw TV cannot reach zero under finite
    sampling).  Returns ``None`` when the budget runs out, never raises.
    """
    if replicas < 100:
        raise ValueError("need at least 100 replicas for a TV estimate")
    if check_every < 1 or max_iterations < 1:
        raise ValueError("check_every and max_iterations must be >= 1")
    truth = grid_truth(target, grid_bounds, grid_bins, constraint)
    control_rng = chain_rng(subseed(seed, 0))
    floors = []
    for _ in range(max(1, control_draws)):
        ref = histogram(truth.sample_midpoints(control_rng, replicas), grid_bounds, grid_bins)
        floors.append(tv_distance(ref, truth))
    floor = float(np.mean(floors))

    init_rng = chain_rng(subseed(seed, 1))
    positions = np.asarray(init(init_rng, replicas), dtype=float)
    found: list[int] = []

    def check(step: int, x: np.ndarray) -> bool:
        try:
            emp = histogram(x, grid_bounds, grid_bins)
        except EmptySupportError:
            return False  # every replica off-grid: maximally unmixed, keep going
        if tv_distance(emp, truth) - floor <= tv_threshold:
            found.append(step)
            return True
        return False

    run_ensemble(target, sampler, eta, max_iterations, positions, subseed(seed, 2),
                 constraint=constraint, lazy=lazy, callback=check, callback_every=check_every)
    return found[0] if found else None


def hitting_time(trace: ChainTrace, target_set: ConstraintSet) -> int | None:
    """First chain index whose state lies in the set; 0 when the start does.

    Thinned traces are scanned over recorded states only.
    """
    if bool(target_set.contains(trace.init_state)):
        return 0
    inside = np.asarray(target_set.contains(trace.states), dtype=bool)
    hits = np.flatnonzero(inside)
    return int(trace.indices[hits[0]]) if hits.size else None


@dataclass(frozen=True)
class ScalingFit:
    """OLS fit of log-values against log-step-sizes."""

    log_etas: tuple[float, ...]
    log_values: tuple[float, ...]
    slope: float
    intercept: float
    r_squared: float


def _ols(xs: np.ndarray, ys: np.ndarray) -> tuple[float, float, float]:
    x_mean, y_mean = xs.mean(), ys.mean()
    sxx = float(np.sum((xs - x_mean) ** 2))
    sxy = float(np.sum((xs - x_mean) * (ys - y_mean)))
    slope = sxy / sxx
    intercept = float(y_mean - slope * x_mean)
    resid = ys - (intercept + slope * xs)
    syy = float(np.sum((ys - y_mean) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / syy if syy > 0 else 1.0
    return slope, intercept, r2


def energy_error_scaling(
    target: TargetModel,
    phase_dist: Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray]],
    etas,
    samples_per_eta: int,
    seed: int,
) -> ScalingFit:
    """Fit the order of the one-step energy error in the step size.

    For each eta, draws phase points, runs one leapfrog step on each, and
    averages |dH|; the slope of log-mean against log-eta is the measured
    error order (3 in the generic small-step regime, up to 4 with quadratic
    symmetry).
    """
    etas = [float(e) for e in etas]
    if len(etas) < 3:
        raise ValueError("need at least 3 step sizes")
    if max(etas) / min(etas) < 10.0 * (1.0 - 1e-9):
        raise ValueError("step sizes must span at least one decade")
    k = target.known_constants
    if k is not None and k.gradient_bound:
        if any(e * e * k.gradient_bound >= 2.0 for e in etas):
            raise ValueError("all step sizes must satisfy eta^2 M < 2 (stability)")
    log_e, log_v = [], []
    for idx, eta in enumerate(etas):
        rng = chain_rng(subseed(seed, idx))
        x, v = phase_dist(rng, samples_per_eta)
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        grad = np.asarray(target.gradient(x), dtype=float)
        x_hat = x + eta * v - 0.5 * eta * eta * grad
        grad_hat = np.asarray(target.gradient(x_hat), dtype=float)
        v_hat = v - 0.5 * eta * (grad + grad_hat)
        d_h = (np.asarray(target.potential(x_hat), dtype=float) + 0.5 * np.sum(v_hat**2, axis=1)
               - np.asarray(target.potential(x), dtype=float) - 0.5 * np.sum(v**2, axis=1))
        mean_abs = float(np.mean(np.abs(d_h)))
        if not np.isfinite(mean_abs) or mean_abs <= 0.0:
            warnings.warn(f"dropping eta={eta:g}: non-finite or zero mean energy error", stacklevel=2)
            continue
        log_e.append(math.log(eta))
        log_v.append(math.log(mean_abs))
    if len(log_e) < 3:
        raise FitFailed("fewer than 3 step sizes produced finite energy errors")
    slope, intercept, r2 = _ols(np.asarray(log_e), np.asarray(log_v))
    return ScalingFit(log_etas=tuple(log_e), log_values=tuple(log_v),
                      slope=slope, intercept=intercept, r_squared=r2)


@dataclass(frozen=True)
class AcceptanceStats:
    mean: float
    q05: float
    q50: float
    q95: float
    accepted_fraction: float


def acceptance_stats(trace: ChainTrace) -> AcceptanceStats:
    """Distribution of per-step acceptance probabilities over a trace."""
    probs = np.exp(trace.log_accepts)
    q05, q50, q95 = np.quantile(probs, [0.05, 0.5, 0.95])
    return AcceptanceStats(
        mean=float(probs.mean()),
        q05=float(q05),
        q50=float(q50),
        q95=float(q95),
        accepted_fraction=float(trace.accepted.mean()),
    )


@dataclass(frozen=True)
class HansonWrightReport:
    dimension: int
    xi: float
    empirical: float
    bound: float
    std_error: float
    holds: bool
    draws: int


def hanson_wright_check(d: int, xi: float, n: int, seed: int) -> HansonWrightReport:
    """Empirical P(|Z| > xi) for standard Gaussian Z against e^{-(xi^2-d)/8}.

    Only valid for xi >= sqrt(2d); holds when the empirical tail stays
    within three binomial standard errors of the bound.
    """
    if xi < math.sqrt(2.0 * d) * (1.0 - 1e-12):
        raise ValueError("the bound needs xi >= sqrt(2 d)")
    if n < 10**4:
        raise ValueError("need at least 1e4 draws")
    rng = chain_rng(seed)
    exceed = 0
    remaining = n
    chunk_rows = max(1, 2_000_000 // max(d, 1))
    while remaining > 0:
        rows = min(chunk_rows, remaining)
        z = rng.standard_normal((rows, d))
        exceed += int(np.count_nonzero(np.sum(z * z, axis=1) > xi * xi))
        remaining -= rows
    emp = exceed / n
    bound = math.exp(-(xi * xi - d) / 8.0)
    se = math.sqrt(max(emp * (1.0 - emp), 0.0) / n)
    return HansonWrightReport(dimension=d, xi=float(xi), empirical=float(emp), bound=float(bound),
                              std_error=float(se), holds=bool(emp <= bound + 3.0 * se), draws=n)
