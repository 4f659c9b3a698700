"""Empirical regularity analysis: incoherence, C3/C4, tails, good set.

The probe-based estimators certify *lower* bounds only — a finite probe
family can never certify an upper bound over all of space — and are
reported as such.  Targets that carry closed-form directional derivatives
(the regression family) are probed exactly; everything else goes through
central differences with relative step sizes.

Probes are keyed by ``(seed, point, direction)`` substreams, so enlarging
either probe count extends the probe family without disturbing existing
probes: the running-maximum estimates are monotone in both counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .targets import ConstraintSet, Dataset, TargetModel
from .integrator import PhaseState

__all__ = [
    "EstimationFailed",
    "GoodSetParams",
    "GradientBoundEstimate",
    "TailDecayReport",
    "ExitProbabilityEstimate",
    "RegularityReport",
    "incoherence",
    "theorem3_bounds",
    "estimate_c3",
    "estimate_c4",
    "estimate_gradient_bound",
    "estimate_tail_rate",
    "tail_decay_check",
    "good_set_check",
    "good_set_step_size",
    "constraint_exit_estimate",
    "build_regularity_report",
]


class EstimationFailed(RuntimeError):
    """Every probe was degenerate; no estimate available."""


def _probe_rng(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=tuple(key))
    return np.random.Generator(np.random.Philox(ss))


def incoherence(data: Dataset) -> float:
    """max_i sum_j |x_i . x_j| over the data columns (diagonal included).

    Exact O(r^2 d) computation; with unit columns the diagonal contributes
    exactly 1 to each row sum, so orthonormal data have incoherence 1.
    """
    if data.count < 1:
        raise ValueError("incoherence needs at least one datum")
    gram = np.abs(data.features.T @ data.features)
    return float(np.max(gram.sum(axis=1)))


def theorem3_bounds(r: int, phi: float) -> tuple[float, float]:
    """Closed-form regularity constants for empirical-loss targets.

    Returns ``(sqrt(r * phi), r)``: the third-order constant scales with
    the square root of count times incoherence, the fourth-order constant
    with the count alone.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    if phi < 1:
        raise ValueError("incoherence is never below 1 for unit columns")
    return math.sqrt(r * phi), float(r)


def _bad_direction_projector(target: TargetModel) -> np.ndarray:
    if target.bad_directions is None:
        raise ValueError(f"target {target.name!r} carries no bad-direction matrix")
    return target.bad_directions


def estimate_c3(target: TargetModel, probe_points: int, probe_dirs: int, seed: int,
                center: np.ndarray | None = None) -> float:
    """Probe-based lower bound on the third-order regularity constant.

    Maximizes |D^3 U(x)[u, v, w]| / (|X^T u|_inf |X^T v|_inf |w|_2) over
    random probes; closed-form derivatives are used when the target has
    them, second central differences of the gradient otherwise.
    """
    if probe_points < 1 or probe_dirs < 1:
        raise ValueError("probe counts must be >= 1")
    bd = _bad_direction_projector(target)
    d = target.dimension
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    best = None
    for i in range(probe_points):
        x = c + _probe_rng(seed, i, 0).standard_normal(d)
        h = 1e-3 * (1.0 + float(np.linalg.norm(x)))
        for j in range(1, probe_dirs + 1):
            rng = _probe_rng(seed, i, j)
            u, v, w = rng.standard_normal(d), rng.standard_normal(d), rng.standard_normal(d)
            denom = float(np.max(np.abs(bd.T @ u)) * np.max(np.abs(bd.T @ v)) * np.linalg.norm(w))
            if denom < 1e-12:
                continue
            if target.third_directional is not None:
                value = abs(float(target.third_directional(x, u, v, w)))
            else:
                g = target.gradient
                mixed = (np.asarray(g(x + h * u + h * v)) - np.asarray(g(x + h * u - h * v))
                         - np.asarray(g(x - h * u + h * v)) + np.asarray(g(x - h * u - h * v)))
                value = abs(float(mixed @ w) / (4.0 * h * h))
            ratio = value / denom
            best = ratio if best is None else max(best, ratio)
    if best is None:
        raise EstimationFailed("all third-order probes were degenerate")
    return float(best)


def estimate_c4(target: TargetModel, probe_points: int, probe_dirs: int, seed: int,
                center: np.ndarray | None = None) -> float:
    """Probe-based lower bound on the fourth-order regularity constant.

    Maximizes |D^4 U(x)[u,u,u,u]| / |X^T u|_inf^4; the fallback is the
    five-point fourth difference of the potential along the probe
    direction.
    """
    if probe_points < 1 or probe_dirs < 1:
        raise ValueError("probe counts must be >= 1")
    bd = _bad_direction_projector(target)
    d = target.dimension
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    best = None
    for i in range(probe_points):
        x = c + _probe_rng(seed, i, 0).standard_normal(d)
        h = 3e-3 * (1.0 + float(np.linalg.norm(x)))
        for j in range(1, probe_dirs + 1):
            u = _probe_rng(seed, i, j).standard_normal(d)
            denom = float(np.max(np.abs(bd.T @ u))) ** 4
            if denom < 1e-12:
                continue
            if target.fourth_directional is not None:
                value = abs(float(target.fourth_directional(x, u)))
            else:
                f = lambda p: float(target.potential(p))
                stencil = (f(x + 2 * h * u) - 4.0 * f(x + h * u) + 6.0 * f(x)
                           - 4.0 * f(x - h * u) + f(x - 2 * h * u))
                value = abs(stencil / h**4)
            ratio = value / denom
            best = ratio if best is None else max(best, ratio)
    if best is None:
        raise EstimationFailed("all fourth-order probes were degenerate")
    return float(best)


@dataclass(frozen=True)
class GradientBoundEstimate:
    """Max gradient norm over a sample region, plus the max pairwise
    difference quotient (the Lipschitz-smoothness reading of the same
    constant — the two roles are deliberately reported side by side)."""

    gradient_bound: float
    smoothness: float
    samples: int


def estimate_gradient_bound(target: TargetModel, region_samples) -> GradientBoundEstimate:
    points = [np.asarray(p, dtype=float) for p in region_samples]
    if not points:
        raise ValueError("need at least one sample point")
    grads = [np.asarray(target.gradient(p), dtype=float) for p in points]
    bound = max(float(np.linalg.norm(g)) for g in grads)
    smooth = 0.0
    for a in range(len(points)):
        for b in range(a + 1, len(points)):
            gap = float(np.linalg.norm(points[a] - points[b]))
            if gap > 1e-12:
                smooth = max(smooth, float(np.linalg.norm(grads[a] - grads[b])) / gap)
    return GradientBoundEstimate(gradient_bound=bound, smoothness=smooth, samples=len(points))


@dataclass(frozen=True)
class TailDecayReport:
    """Empirical survival vs the exponential tail bound at distance deciles."""

    deciles: tuple[float, ...]
    empirical: tuple[float, ...]
    bound: tuple[float, ...]
    holds: tuple[bool, ...]
    passed: bool
    rate: float
    samples: int


def tail_decay_check(samples, x_star, a: float, d: int) -> TailDecayReport:
    """Check P(|X - x*| > s) <= e^{-a s / sqrt(d)} at observed deciles.

    Each decile passes when the empirical survival stays within three
    binomial standard errors of the bound.
    """
    if a <= 0:
        raise ValueError("a must be positive")
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    star = np.asarray(x_star, dtype=float)
    dist = np.linalg.norm(x - star, axis=1)
    n = dist.size
    if n == 0:
        raise ValueError("samples must be nonempty")
    qs = np.quantile(dist, np.arange(1, 10) / 10.0)
    empirical, bound, holds = [], [], []
    for s in qs:
        emp = float(np.mean(dist > s))
        b = math.exp(-a * s / math.sqrt(d))
        se = math.sqrt(max(b * (1.0 - b), 0.0) / n)
        ok = emp <= b + 3.0 * se + 1.0 / n
        empirical.append(emp)
        bound.append(b)
        holds.append(bool(ok))
    return TailDecayReport(deciles=tuple(float(s) for s in qs), empirical=tuple(empirical),
                           bound=tuple(bound), holds=tuple(holds), passed=all(holds),
                           rate=float(a), samples=n)


def estimate_tail_rate(samples, x_star, d: int) -> float | None:
    """Largest rate consistent with the empirical survival at deciles."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    dist = np.linalg.norm(x - np.asarray(x_star, dtype=float), axis=1)
    qs = np.quantile(dist, np.arange(1, 10) / 10.0)
    rates = []
    for s in qs:
        emp = float(np.mean(dist > s))
        if s > 1e-12 and emp > 0.0:
            rates.append(-math.sqrt(d) * math.log(emp) / s)
    return min(rates) if rates else None


def good_set_step_size(c3: float, c4: float, gradient_bound: float, alpha: float,
                       radius: float, safety_constant: float = 1.0) -> float:
    """Alternative step-size formula phrased in good-set constants.

    eta = c * min(C3^{-1/3} R^{-1/3}, R^{-2/3}, C4^{-1/4}) * min(1, M^{-1/2}) / alpha.
    This is the radius/threshold-parameterized companion of
    :func:`malakit.chains.theorem1_step_size` (which is phrased in the
    dimension); the two are not reconciled here — the dimension form is
    the primary schedule.
    """
    if gradient_bound <= 0 or alpha <= 0 or radius <= 0 or safety_constant <= 0:
        raise ValueError("gradient_bound, alpha, radius and safety_constant must be positive")
    if c3 < 0 or c4 < 0:
        raise ValueError("c3 and c4 must be nonnegative")
    terms = [radius ** (-2.0 / 3.0)]
    if c3 > 0:
        terms.append(c3 ** (-1.0 / 3.0) * radius ** (-1.0 / 3.0))
    if c4 > 0:
        terms.append(c4 ** (-0.25))
    return safety_constant * min(terms) * min(1.0, gradient_bound ** -0.5) / alpha


@dataclass(frozen=True)
class GoodSetParams:
    """Thresholds for the bounded-trajectory region in phase space."""

    alpha: float
    radius: float
    grad_bound: float
    horizon: float
    substeps: int = 8

    def __post_init__(self):
        if self.alpha <= math.sqrt(2.0):
            raise ValueError("alpha must exceed sqrt(2)")
        if self.radius <= 0 or self.grad_bound <= 0 or self.horizon <= 0:
            raise ValueError("radius, grad_bound and horizon must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")


def good_set_check(target: TargetModel, state: PhaseState, params: GoodSetParams) -> bool:
    """Does the Hamiltonian trajectory from ``state`` stay in the good set?

    Checks, along a fine leapfrog approximation of the flow on
    ``[0, horizon]``: bad-direction velocity components below ``alpha``,
    distance to the minimizer below ``(3/sqrt(2)) radius / sqrt(grad_bound)``,
    and initial speed below ``radius``.  Targets without a bad-direction
    matrix are checked against the coordinate directions.
    """
    d = target.dimension
    bd = target.bad_directions if target.bad_directions is not None else np.eye(d)
    x_star = target.minimizer if target.minimizer is not None else np.zeros(d)
    q = np.asarray(state.position, dtype=float)
    p = np.asarray(state.velocity, dtype=float)
    if float(np.linalg.norm(p)) > params.radius:
        return False
    pos_bound = (3.0 / math.sqrt(2.0)) * params.radius / math.sqrt(params.grad_bound)
    dt = params.horizon / params.substeps

    def ok(qq, pp):
        return (float(np.max(np.abs(bd.T @ pp))) <= params.alpha
                and float(np.linalg.norm(qq - x_star)) <= pos_bound)

    if not ok(q, p):
        return False
    grad = np.asarray(target.gradient(q), dtype=float)
    for _ in range(params.substeps):
        p_half = p - 0.5 * dt * grad
        q = q + dt * p_half
        grad = np.asarray(target.gradient(q), dtype=float)
        p = p_half - 0.5 * dt * grad
        if not ok(q, p):
            return False
    return True


@dataclass(frozen=True)
class ExitProbabilityEstimate:
    estimate: float
    std_error: float
    draws: int


def constraint_exit_estimate(target: TargetModel, constraint: ConstraintSet, eta: float,
                             z: np.ndarray, n: int, seed: int) -> ExitProbabilityEstimate:
    """Monte Carlo estimate of P(one drifted proposal from z stays inside).

    The proposal is z + eta v - (eta^2/2) grad U(z) with standard Gaussian
    v; the constraint-set regularity assumption asks this to be at least
    1/10 everywhere in the set.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    z = np.asarray(z, dtype=float)
    if not bool(constraint.contains(z)):
        raise ValueError("z must lie inside the constraint set")
    rng = _probe_rng(seed, 0)
    grad = np.asarray(target.gradient(z), dtype=float)
    drift = z - 0.5 * eta * eta * grad
    v = rng.standard_normal((n, z.size))
    proposals = drift + eta * v
    inside = np.asarray(constraint.contains(proposals), dtype=bool)
    p = float(np.mean(inside))
    se = math.sqrt(max(p * (1.0 - p), 0.0) / n)
    return ExitProbabilityEstimate(estimate=p, std_error=se, draws=n)


@dataclass(frozen=True)
class RegularityReport:
    """Bounds vs probe estimates for one target/dataset pair.

    Estimates are lower bounds by construction; the closed-form bounds are
    the certified ceilings for empirical-loss targets.
    """

    incoherence: float
    c3_bound: float
    c4_bound: float
    c3_estimate: float
    c4_estimate: float
    gradient_bound_estimate: float
    smoothness_estimate: float
    tail_rate_estimate: float | None
    probe_points: int
    probe_dirs: int
    seed: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    def rows(self) -> list[tuple[str, str, str, str]]:
        """(quantity, bound, estimate, status) rows for table printers."""
        def fmt(v):
            return "-" if v is None else f"{v:.6g}"

        rows = [
            ("incoherence", "-", fmt(self.incoherence), "exact"),
            ("C3", fmt(self.c3_bound), fmt(self.c3_estimate),
             "ok" if self.c3_estimate <= self.c3_bound * 1.05 else "VIOLATED"),
            ("C4", fmt(self.c4_bound), fmt(self.c4_estimate),
             "ok" if self.c4_estimate <= self.c4_bound * 1.05 else "VIOLATED"),
            ("gradient bound", "-", fmt(self.gradient_bound_estimate), "lower bound"),
            ("smoothness", "-", fmt(self.smoothness_estimate), "lower bound"),
            ("tail rate", "-", fmt(self.tail_rate_estimate), "estimate"),
        ]
        return rows


def build_regularity_report(target: TargetModel, data: Dataset, probe_points: int,
                            probe_dirs: int, seed: int, samples=None) -> RegularityReport:
    """Assemble the full report for an empirical-loss target.

    ``samples`` (chain states, say) feed the gradient-bound and tail-rate
    estimates; when omitted, the probe cloud around the origin is reused
    for both.
    """
    phi = incoherence(data)
    c3_bound, c4_bound = theorem3_bounds(data.count, phi)
    c3_est = estimate_c3(target, probe_points, probe_dirs, seed)
    c4_est = estimate_c4(target, probe_points, probe_dirs, seed)
    if samples is None:
        rng = _probe_rng(seed, 10**6)
        samples = rng.standard_normal((max(probe_points, 16), target.dimension))
    samples = np.asarray(samples, dtype=float)
    grad_est = estimate_gradient_bound(target, list(samples))
    center = target.minimizer if target.minimizer is not None else np.zeros(target.dimension)
    tail = estimate_tail_rate(samples, center, target.dimension)
    return RegularityReport(
        incoherence=phi,
        c3_bound=c3_bound,
        c4_bound=c4_bound,
        c3_estimate=c3_est,
        c4_estimate=c4_est,
        gradient_bound_estimate=grad_est.gradient_bound,
        smoothness_estimate=grad_est.smoothness,
        tail_rate_estimate=tail,
        probe_points=probe_points,
        probe_dirs=probe_dirs,
        seed=seed,
    )
