"""Target distributions and the data they are built from.

A target is a potential ``U`` with its gradient; the samplers see nothing
else.  Regression-style targets additionally carry the matrix of unit
"bad directions" (the data vectors), closed-form third/fourth directional
derivatives for the regularity estimators, and whatever constants are known
a priori.  All built-in callables broadcast over leading axes, so an
``(n, d)`` array of positions evaluates ``n`` potentials in one call.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import expit

__all__ = [
    "Dataset",
    "KnownConstants",
    "TargetModel",
    "ConstraintSet",
    "make_gaussian",
    "make_logistic_regression",
    "make_sigmoid_regression",
    "make_smoothed_zero_one",
    "recommended_schedule",
    "sample_sphere_dataset",
    "annulus",
    "full_space",
    "precondition",
    "save_dataset",
    "load_dataset",
    "max_gradient_fd_error",
]

_UNIT_NORM_TOL = 1e-12


@dataclass(frozen=True)
class Dataset:
    """Unit-norm feature columns with binary responses.

    ``features`` is ``d x r`` (column ``i`` is the data vector of datum
    ``i``).  Responses are ``{0, 1}`` for the regression targets or
    ``{-1, +1}`` for the classifier model; factories normalise between the
    two conventions.  ``seed`` records generator provenance when the data
    are synthetic.
    """

    features: np.ndarray
    responses: np.ndarray
    true_param: np.ndarray | None = None
    noise_floor: float = 1.0
    seed: int | None = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=float)
        responses = np.asarray(self.responses, dtype=np.int64)
        if features.ndim != 2:
            raise ValueError("features must be a d x r matrix")
        d, r = features.shape
        if responses.shape != (r,):
            raise ValueError(f"responses must have length r={r}, got {responses.shape}")
        if r > 0:
            norms = np.linalg.norm(features, axis=0)
            if np.any(np.abs(norms - 1.0) > _UNIT_NORM_TOL):
                worst = float(np.max(np.abs(norms - 1.0)))
                raise ValueError(f"feature columns must be unit norm (worst deviation {worst:.3e})")
            values = set(np.unique(responses).tolist())
            if not (values <= {0, 1} or values <= {-1, 1}):
                raise ValueError(f"responses must lie in {{0,1}} or {{-1,+1}}, got {sorted(values)}")
        if not (0.0 < self.noise_floor <= 1.0):
            raise ValueError("noise_floor must lie in (0, 1]")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "responses", responses)
        if self.true_param is not None:
            object.__setattr__(self, "true_param", np.asarray(self.true_param, dtype=float))

    @property
    def dimension(self) -> int:
        return self.features.shape[0]

    @property
    def count(self) -> int:
        return self.features.shape[1]

    def binary_responses(self) -> np.ndarray:
        """Responses mapped to {0, 1} (classifier label -1 maps to 0)."""
        return np.where(self.responses > 0, 1, 0).astype(np.int64)

    def sign_responses(self) -> np.ndarray:
        """Responses mapped to {-1, +1} (regression label 0 maps to -1)."""
        return np.where(self.responses > 0, 1, -1).astype(np.int64)


@dataclass(frozen=True)
class KnownConstants:
    """Constants known for a target a priori; ``None`` means unknown.

    ``gradient_bound`` doubles as the gradient-Lipschitz constant: the two
    roles are carried by a single number throughout (they coincide for the
    built-in targets on the regions we probe).
    """

    gradient_bound: float | None = None
    c3: float | None = None
    c4: float | None = None
    tail_rate: float | None = None


@dataclass(frozen=True)
class TargetModel:
    """A potential with gradient and optional higher-order structure."""

    dimension: int
    potential: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    name: str = "target"
    bad_directions: np.ndarray | None = None
    known_constants: KnownConstants | None = None
    quadratic_precision: np.ndarray | None = None
    log_normalizer: float | None = None
    minimizer: np.ndarray | None = None
    nonconvex: bool = False
    vectorized: bool = True
    third_directional: Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], float] | None = None
    fourth_directional: Callable[[np.ndarray, np.ndarray], float] | None = None

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        if self.bad_directions is not None:
            bd = np.asarray(self.bad_directions, dtype=float)
            if bd.shape[0] != self.dimension:
                raise ValueError("bad_directions must have d rows")
            if bd.shape[1] > 0:
                norms = np.linalg.norm(bd, axis=0)
                if np.any(np.abs(norms - 1.0) > 1e-9):
                    raise ValueError("bad_directions columns must be unit norm")
            object.__setattr__(self, "bad_directions", bd)


@dataclass(frozen=True)
class ConstraintSet:
    """Membership oracle for a constraint region.

    ``membership`` must be pure; the built-in oracles broadcast over
    leading axes and return booleans.
    """

    membership: Callable[[np.ndarray], np.ndarray]
    description: str = "constraint"
    annulus_radii: tuple[float, float] | None = None

    def contains(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.membership(np.asarray(x, dtype=float)))


# ---------------------------------------------------------------------------
# loss functions (value and first/third/fourth derivatives)

def _sigma_derivs(s: np.ndarray, order: int) -> np.ndarray:
    """Derivatives of the standard sigmoid, stable for |s| up to ~700."""
    p = expit(s)
    d1 = p * (1.0 - p)
    if order == 1:
        return d1
    if order == 2:
        return d1 * (1.0 - 2.0 * p)
    if order == 3:
        return d1 * (1.0 - 6.0 * p + 6.0 * p * p)
    if order == 4:
        return d1 * (1.0 - 2.0 * p) * (1.0 - 12.0 * p + 12.0 * p * p)
    raise ValueError(order)


def _logistic_loss():
    # phi(s) = log(1 + e^{-s}); the negative log-likelihood of a correct
    # label at margin s.  phi'' = sigma', so the k-th derivative of phi is
    # the (k-1)-th derivative of the sigmoid.  All derivatives bounded by 1.
    value = lambda t: np.logaddexp(0.0, -t)
    d1 = lambda t: expit(t) - 1.0
    d3 = lambda t: _sigma_derivs(t, 2)
    d4 = lambda t: _sigma_derivs(t, 3)
    return value, d1, d3, d4


def _sigmoid_loss():
    # phi(s) = sigmoid(-s): bounded, nonconvex, robust-to-outliers loss.
    value = lambda t: expit(-t)
    d1 = lambda t: -_sigma_derivs(-t, 1)
    d3 = lambda t: -_sigma_derivs(-t, 3)
    d4 = lambda t: _sigma_derivs(-t, 4)
    return value, d1, d3, d4


def _plain_sigmoid():
    # sigmoid itself; the zero-one surrogate folds the -y sign into its columns.
    value = lambda t: expit(t)
    d1 = lambda t: _sigma_derivs(t, 1)
    d3 = lambda t: _sigma_derivs(t, 3)
    d4 = lambda t: _sigma_derivs(t, 4)
    return value, d1, d3, d4


def _linear_composite(
    d: int,
    prior_precision: float,
    columns: np.ndarray,
    loss,
    weight: float,
    name: str,
    bad_directions: np.ndarray | None,
    nonconvex: bool,
) -> TargetModel:
    """Target of the form (p/2)|x|^2 + weight * sum_i phi(a_i^T x)."""
    value, d1, d3, d4 = loss
    a = np.asarray(columns, dtype=float)  # d x r, signs/scales folded in

    def potential(x):
        x = np.asarray(x, dtype=float)
        quad = 0.5 * prior_precision * np.sum(x * x, axis=-1)
        if a.shape[1] == 0:
            return quad
        t = x @ a
        return quad + weight * np.sum(value(t), axis=-1)

    def gradient(x):
        x = np.asarray(x, dtype=float)
        grad = prior_precision * x
        if a.shape[1] == 0:
            return grad
        t = x @ a
        return grad + weight * (d1(t) @ a.T)

    def third_directional(x, u, v, w):
        if a.shape[1] == 0:
            return 0.0
        t = np.asarray(x, dtype=float) @ a
        return float(weight * np.sum(d3(t) * (u @ a) * (v @ a) * (w @ a)))

    def fourth_directional(x, u):
        if a.shape[1] == 0:
            return 0.0
        t = np.asarray(x, dtype=float) @ a
        return float(weight * np.sum(d4(t) * (u @ a) ** 4))

    return TargetModel(
        dimension=d,
        potential=potential,
        gradient=gradient,
        name=name,
        bad_directions=bad_directions,
        nonconvex=nonconvex,
        third_directional=third_directional,
        fourth_directional=fourth_directional,
    )


# ---------------------------------------------------------------------------
# factories

def make_gaussian(d: int, precision_diag) -> TargetModel:
    """Diagonal Gaussian: U(x) = 1/2 sum_i lambda_i x_i^2.

    The canonical zero-third/fourth-derivative test target.  Carries the
    exact Hamiltonian flow (independent harmonic oscillators) and its log
    normalizer.
    """
    if d < 1:
        raise ValueError("d must be a positive integer")
    lam = np.broadcast_to(np.asarray(precision_diag, dtype=float), (d,)).copy()
    if np.any(lam <= 0.0) or not np.all(np.isfinite(lam)):
        raise ValueError("precision entries must be positive and finite")

    def potential(x):
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(lam * x * x, axis=-1)

    def gradient(x):
        return lam * np.asarray(x, dtype=float)

    log_z = float(0.5 * np.sum(np.log(2.0 * math.pi / lam)))
    return TargetModel(
        dimension=d,
        potential=potential,
        gradient=gradient,
        name=f"gaussian-d{d}",
        known_constants=KnownConstants(gradient_bound=float(np.max(lam)), c3=0.0, c4=0.0),
        quadratic_precision=lam,
        log_normalizer=log_z,
        minimizer=np.zeros(d),
    )


def make_logistic_regression(data: Dataset, prior_precision: float) -> TargetModel:
    """Negative log-posterior of logistic regression with a Gaussian prior.

    U(theta) = (p/2)|theta|^2 + sum_i [y_i phi(theta.x_i) + (1-y_i) phi(-theta.x_i)]
    with phi(s) = log(1 + e^{-s}).  Convex; stable for margins up to ~700.
    """
    return _regression_target(data, prior_precision, _logistic_loss(), "logistic", nonconvex=False)


def make_sigmoid_regression(data: Dataset, prior_precision: float) -> TargetModel:
    """Like :func:`make_logistic_regression` but with the bounded sigmoid loss.

    phi(s) = sigmoid(-s); each datum contributes a loss in (0, 1), so the
    target is nonconvex but has all derivatives bounded by 1.
    """
    return _regression_target(data, prior_precision, _sigmoid_loss(), "sigmoid", nonconvex=True)


def _regression_target(data, prior_precision, loss, label, nonconvex):
    if prior_precision < 0:
        raise ValueError("prior_precision must be nonnegative")
    d, r = data.dimension, data.count
    y = data.binary_responses()
    # Fold the label into the column sign: y=1 contributes phi(+t), y=0 phi(-t).
    signs = np.where(y == 1, 1.0, -1.0)
    columns = data.features * signs
    return _linear_composite(
        d,
        float(prior_precision),
        columns,
        loss,
        weight=1.0,
        name=f"{label}-d{d}-r{r}",
        bad_directions=data.features if r > 0 else None,
        nonconvex=nonconvex,
    )


def make_smoothed_zero_one(data: Dataset, inverse_temperature: float, lam: float) -> TargetModel:
    """Low-temperature smoothed empirical zero-one loss.

    U(x) = T^{-1} * (1/r) sum_i sigmoid(-y_i x_i . x / d^{1/4}); the scaling
    constant ``lam`` cancels inside the composition and only sizes the
    companion annulus constraint.  Steepness therefore comes from evaluating
    on that annulus, whose radius grows as the temperature drops.
    """
    if data.count == 0:
        raise ValueError("smoothed zero-one loss needs at least one datum")
    if inverse_temperature <= 0:
        raise ValueError("inverse_temperature must be positive")
    if lam <= 0:
        raise ValueError("lam must be positive")
    d, r = data.dimension, data.count
    y = data.sign_responses()
    columns = -(data.features * y) / d**0.25
    return _linear_composite(
        d,
        0.0,
        columns,
        _plain_sigmoid(),
        weight=float(inverse_temperature) / r,
        name=f"zero-one-d{d}-r{r}",
        bad_directions=data.features,
        nonconvex=True,
    )


def recommended_schedule(q0: float, epsilon: float, d: int, c1: float = 1.0) -> tuple[float, float]:
    """Inverse temperature and annulus scale for the zero-one pipeline.

    Returns ``(inverse_temperature, lam)`` with
    ``T^{-1} = c1 d^{3/2} / (q0 eps^2)`` and ``lam = 100 sqrt(d) / (T |log T|)``.
    Requires the resulting temperature to be below 1 so the log is nonzero.
    """
    if not (0.0 < q0 <= 1.0):
        raise ValueError("q0 must lie in (0, 1]")
    if not (0.0 < epsilon <= 0.1):
        raise ValueError("epsilon must lie in (0, 0.1]")
    if c1 <= 0:
        raise ValueError("c1 must be positive")
    if d < 1:
        raise ValueError("d must be a positive integer")
    inv_temp = c1 * d**1.5 / (q0 * epsilon**2)
    if inv_temp <= 1.0:
        raise ValueError(f"schedule needs inverse temperature > 1, got {inv_temp:.4g}; increase c1")
    lam = 100.0 * math.sqrt(d) * inv_temp / math.log(inv_temp)
    return inv_temp, lam


def sample_sphere_dataset(d: int, r: int, theta_star, q0: float, seed: int) -> Dataset:
    """Synthetic classifier data: sphere-uniform features, noisy sign labels.

    Label ``i`` equals ``sign(x_i . theta*)`` with probability
    ``(1 + q(x_i)) / 2`` where ``q(x) = min(1, q0 |x . theta*|)`` — the
    minimal noise function compatible with the model's lower bound.
    Deterministic given ``seed``.
    """
    theta = np.asarray(theta_star, dtype=float)
    if theta.shape != (d,):
        raise ValueError("theta_star must have length d")
    norm = np.linalg.norm(theta)
    if abs(norm - 1.0) > 1e-8:
        raise ValueError("theta_star must be a unit vector")
    theta = theta / norm
    if not (0.0 < q0 <= 1.0):
        raise ValueError("q0 must lie in (0, 1]")
    from .rng import chain_rng

    rng = chain_rng(seed)
    features = np.empty((d, r))
    for i in range(r):
        while True:
            g = rng.standard_normal(d)
            n = np.linalg.norm(g)
            if n >= 1e-12:
                break
        features[:, i] = g / n
    ips = features.T @ theta
    base = np.where(ips >= 0.0, 1, -1)
    q = np.minimum(1.0, q0 * np.abs(ips))
    keep = rng.random(r) < (1.0 + q) / 2.0
    responses = np.where(keep, base, -base).astype(np.int64)
    return Dataset(features=features, responses=responses, true_param=theta, noise_floor=q0, seed=seed)


def annulus(inner: float, outer: float) -> ConstraintSet:
    """Closed centered annulus ``inner <= |x|_2 <= outer``."""
    if not (0.0 < inner < outer):
        raise ValueError("need 0 < inner < outer")

    def membership(x):
        norms = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return (norms >= inner) & (norms <= outer)

    return ConstraintSet(membership=membership, description=f"annulus[{inner},{outer}]",
                         annulus_radii=(float(inner), float(outer)))


def full_space() -> ConstraintSet:
    """The vacuous constraint (all of R^d)."""

    def membership(x):
        x = np.asarray(x, dtype=float)
        return np.ones(x.shape[:-1], dtype=bool)

    return ConstraintSet(membership=membership, description="full-space")


def precondition(target: TargetModel, scale: float) -> TargetModel:
    """Rescale the argument: new potential x -> U(scale * x).

    The gradient picks up one factor of ``scale`` by the chain rule; known
    constants rescale accordingly (gradient bound by ``scale`` in the
    gradient-norm reading — the Lipschitz-smoothness reading would scale by
    ``scale**2`` — C3 by ``scale**3``, C4 by ``scale**4``, tail rate by
    ``scale``).  Bad directions are unchanged.
    """
    if scale <= 0:
        raise ValueError("scale must be positive")
    s = float(scale)
    base_pot, base_grad = target.potential, target.gradient

    def potential(x):
        return base_pot(s * np.asarray(x, dtype=float))

    def gradient(x):
        return s * base_grad(s * np.asarray(x, dtype=float))

    third = None
    if target.third_directional is not None:
        base3 = target.third_directional
        third = lambda x, u, v, w: s**3 * base3(s * np.asarray(x, dtype=float), u, v, w)
    fourth = None
    if target.fourth_directional is not None:
        base4 = target.fourth_directional
        fourth = lambda x, u: s**4 * base4(s * np.asarray(x, dtype=float), u)

    constants = None
    if target.known_constants is not None:
        k = target.known_constants
        constants = KnownConstants(
            gradient_bound=None if k.gradient_bound is None else k.gradient_bound * s,
            c3=None if k.c3 is None else k.c3 * s**3,
            c4=None if k.c4 is None else k.c4 * s**4,
            tail_rate=None if k.tail_rate is None else k.tail_rate * s,
        )
    return TargetModel(
        dimension=target.dimension,
        potential=potential,
        gradient=gradient,
        name=f"{target.name}*{s:g}",
        bad_directions=target.bad_directions,
        known_constants=constants,
        quadratic_precision=None if target.quadratic_precision is None else target.quadratic_precision * s * s,
        log_normalizer=None if target.log_normalizer is None else target.log_normalizer - target.dimension * math.log(s),
        minimizer=None if target.minimizer is None else target.minimizer / s,
        nonconvex=target.nonconvex,
        vectorized=target.vectorized,
        third_directional=third,
        fourth_directional=fourth,
    )


# ---------------------------------------------------------------------------
# dataset serialization

def save_dataset(data: Dataset, csv_path) -> tuple[Path, Path]:
    """Write the CSV plus JSON sidecar; returns both paths."""
    csv_path = Path(csv_path)
    d, r = data.dimension, data.count
    header = ",".join([f"feature_{j}" for j in range(d)] + ["response"])
    lines = [header]
    for i in range(r):
        fields = [repr(float(v)) for v in data.features[:, i]] + [str(int(data.responses[i]))]
        lines.append(",".join(fields))
    csv_path.write_text("\n".join(lines) + "\n")
    sidecar = csv_path.with_suffix(".json")
    meta = {
        "d": d,
        "r": r,
        "q0": data.noise_floor,
        "seed": data.seed,
        "theta_star": None if data.true_param is None else [float(v) for v in data.true_param],
    }
    sidecar.write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
    return csv_path, sidecar


def load_dataset(csv_path) -> Dataset:
    """Read a dataset written by :func:`save_dataset`."""
    csv_path = Path(csv_path)
    lines = [ln for ln in csv_path.read_text().splitlines() if ln.strip()]
    header = lines[0].split(",")
    if header[-1] != "response" or not header[0].startswith("feature_"):
        raise ValueError(f"{csv_path} does not look like a dataset CSV")
    d = len(header) - 1
    r = len(lines) - 1
    features = np.empty((d, r))
    responses = np.empty(r, dtype=np.int64)
    for i, line in enumerate(lines[1:]):
        parts = line.split(",")
        features[:, i] = [float(v) for v in parts[:d]]
        responses[i] = int(parts[d])
    sidecar = csv_path.with_suffix(".json")
    true_param, q0, seed = None, 1.0, None
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
        q0 = float(meta.get("q0", 1.0))
        seed = meta.get("seed")
        if meta.get("theta_star") is not None:
            true_param = np.asarray(meta["theta_star"], dtype=float)
    return Dataset(features=features, responses=responses, true_param=true_param,
                   noise_floor=q0, seed=seed)


# ---------------------------------------------------------------------------
# consistency probe

def max_gradient_fd_error(target: TargetModel, points) -> float:
    """Worst relative mismatch between the gradient and central differences.

    The step is ``1e-5 * (1 + |x|)`` per probe; the error is measured as
    ``|fd - grad| / (1 + |grad|)`` so targets with vanishing gradient at a
    probe do not produce spurious blowups.
    """
    worst = 0.0
    for x in points:
        x = np.asarray(x, dtype=float)
        h = 1e-5 * (1.0 + np.linalg.norm(x))
        grad = np.asarray(target.gradient(x), dtype=float)
        fd = np.empty_like(grad)
        for j in range(x.size):
            e = np.zeros_like(x)
            e[j] = h
            fd[j] = (float(target.potential(x + e)) - float(target.potential(x - e))) / (2.0 * h)
        err = np.linalg.norm(fd - grad) / (1.0 + np.linalg.norm(grad))
        worst = max(worst, float(err))
    return worst
