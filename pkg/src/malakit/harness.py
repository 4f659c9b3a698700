"""Declarative experiment runner.

Experiments are described by a small line-oriented text format (versioned
header, ``[section]`` blocks, ``key = value`` lines) so studies can be
archived and re-run byte-identically.  Replicas run on spawned RNG
substreams keyed by replica index and results are reduced in index order,
which makes every summary CSV independent of the thread count.

Format sketch::

    malakit-spec v1
    name = gaussian-demo

    [target]
    kind = gaussian          # gaussian | logistic | sigmoid | zero_one
    d = 1
    precision = 1.0

    [sampler]
    kind = mala              # mala | rwm | constrained-mala
    lazy = false

    [schedule]
    kind = explicit          # explicit | theorem1 | sweep
    eta = 0.5

    [run]
    iterations = 2000
    replicas = 4
    seed = 7
    record_every = 1

    [diagnostics]
    acceptance_stats
    tv_vs_truth lo=-6 hi=6 bins=60

    [output]
    dir = runs/demo

Comments start with ``#``; unknown keys are validation errors and all
errors are reported together rather than first-only.
"""

from __future__ import annotations

import json
import math
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .chains import (ChainConfig, ChainTrace, run_constrained_mala, run_ensemble,
                     run_mala, run_rwm, theorem1_step_size)
from .diagnostics import acceptance_stats, energy_error_scaling, hitting_time, mixing_time_estimate, _ols
from .grids import grid_truth, histogram, tv_distance
from .regularity import build_regularity_report, estimate_c3, estimate_c4, estimate_gradient_bound
from .rng import chain_rng
from .targets import (ConstraintSet, Dataset, TargetModel, annulus, load_dataset,
                      make_gaussian, make_logistic_regression, make_sigmoid_regression,
                      make_smoothed_zero_one, precondition, recommended_schedule,
                      sample_sphere_dataset)

__all__ = [
    "SpecValidationError",
    "ExperimentSpec",
    "RunReport",
    "parse_spec",
    "serialize_spec",
    "build_target",
    "resolve_etas",
    "run_experiment",
    "scaling_study",
    "ScalingStudyResult",
]

HEADER = "malakit-spec v1"

_TARGET_KINDS = ("gaussian", "logistic", "sigmoid", "zero_one")
_SAMPLER_KINDS = ("mala", "rwm", "constrained-mala")
_SCHEDULE_KINDS = ("explicit", "theorem1", "sweep")
_DIAGNOSTIC_NAMES = ("acceptance_stats", "tv_vs_truth", "energy_error_scaling",
                     "regularity", "zero_one_summary")


class SpecValidationError(ValueError):
    """Carries the full list of validation problems."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid experiment spec:\n  " + "\n  ".join(self.errors))


@dataclass(frozen=True)
class DiagnosticSpec:
    name: str
    params: dict = field(default_factory=dict)

    def __hash__(self):
        return hash((self.name, tuple(sorted(self.params.items()))))


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    target_kind: str
    target_params: dict
    sampler: str
    lazy: bool
    schedule_kind: str
    schedule_params: dict
    iterations: int
    replicas: int
    seed: int
    record_every: int
    diagnostics: tuple[DiagnosticSpec, ...]
    output: str | None = None
    constraint_radii: tuple[float, float] | None = None


# ---------------------------------------------------------------------------
# parsing

def _parse_scalar(text: str):
    text = text.strip()
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _parse_sections(text: str, errors: list[str]):
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].rstrip()
        if line.strip():
            lines.append(line.strip())
    if not lines or lines[0] != HEADER:
        errors.append(f"first line must be {HEADER!r}")
        return {}, []
    sections: dict[str, dict] = {}
    diag_lines: list[str] = []
    current = "__top__"
    sections[current] = {}
    for line in lines[1:]:
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current == "diagnostics":
                continue
            if current in sections:
                errors.append(f"duplicate section [{current}]")
            sections.setdefault(current, {})
        elif current == "diagnostics":
            diag_lines.append(line)
        elif "=" in line:
            key, value = line.split("=", 1)
            sections[current][key.strip()] = _parse_scalar(value)
        else:
            errors.append(f"cannot parse line {line!r}")
    return sections, diag_lines


def _parse_diag_line(line: str, errors: list[str]) -> DiagnosticSpec | None:
    parts = line.split()
    name = parts[0]
    if name not in _DIAGNOSTIC_NAMES:
        errors.append(f"unknown diagnostic {name!r} (known: {', '.join(_DIAGNOSTIC_NAMES)})")
        return None
    params = {}
    for piece in parts[1:]:
        if "=" not in piece:
            errors.append(f"diagnostic parameter {piece!r} must be key=value")
            continue
        k, v = piece.split("=", 1)
        params[k] = _parse_scalar(v)
    return DiagnosticSpec(name=name, params=params)


def parse_spec(text: str) -> ExperimentSpec:
    """Parse and validate the experiment format; collects every error."""
    errors: list[str] = []
    sections, diag_lines = _parse_sections(text, errors)
    if errors:
        raise SpecValidationError(errors)

    top = sections.get("__top__", {})
    name = top.get("name")
    if not isinstance(name, str) or not name:
        errors.append("a top-level `name = ...` is required")

    target = dict(sections.get("target", {}))
    kind = target.pop("kind", None)
    if kind not in _TARGET_KINDS:
        errors.append(f"target kind must be one of {_TARGET_KINDS}, got {kind!r}")
        kind = None
    if kind == "gaussian":
        _require_int(target, "d", errors, minimum=1)
        prec = target.get("precision", 1.0)
        if isinstance(prec, str):
            try:
                values = [float(p) for p in prec.split(",")]
            except ValueError:
                values = []
                errors.append("precision must be a number or comma-separated numbers")
            if values and any(p <= 0 for p in values):
                errors.append("precision entries must be positive")
        elif isinstance(prec, (int, float)) and prec <= 0:
            errors.append("precision must be positive")
    elif kind in ("logistic", "sigmoid"):
        if "dataset" not in target:
            for key in ("d", "r", "data_seed"):
                _require_int(target, key, errors, minimum=1 if key != "data_seed" else None)
            _require_float(target, "q0", errors, low=0.0, high=1.0, low_open=True)
        _require_float(target, "prior", errors, low=0.0)
    elif kind == "zero_one":
        for key in ("d", "r", "data_seed"):
            _require_int(target, key, errors, minimum=1 if key != "data_seed" else None)
        _require_float(target, "q0", errors, low=0.0, high=1.0, low_open=True)
        _require_float(target, "epsilon", errors, low=0.0, high=0.1, low_open=True)
        _require_float(target, "c1", errors, low=0.0, low_open=True)

    sampler_sec = dict(sections.get("sampler", {}))
    sampler = sampler_sec.get("kind")
    if sampler not in _SAMPLER_KINDS:
        errors.append(f"sampler kind must be one of {_SAMPLER_KINDS}, got {sampler!r}")
    lazy = sampler_sec.get("lazy")
    if lazy is None:
        lazy = sampler == "constrained-mala"  # laziness on for optimization runs
    elif not isinstance(lazy, bool):
        errors.append("sampler lazy must be true or false")
        lazy = False

    constraint_radii = None
    if "constraint" in sections:
        con = sections["constraint"]
        inner, outer = con.get("inner"), con.get("outer")
        if not isinstance(inner, (int, float)) or not isinstance(outer, (int, float)) or not (0 < inner < outer):
            errors.append("[constraint] needs 0 < inner < outer")
        else:
            constraint_radii = (float(inner), float(outer))
    if sampler == "constrained-mala" and constraint_radii is None and kind != "zero_one":
        errors.append("constrained-mala needs a [constraint] section (or a zero_one target)")

    sched = dict(sections.get("schedule", {}))
    sched_kind = sched.pop("kind", None)
    if sched_kind not in _SCHEDULE_KINDS:
        errors.append(f"schedule kind must be one of {_SCHEDULE_KINDS}, got {sched_kind!r}")
    elif sched_kind == "explicit":
        _require_float(sched, "eta", errors, low=0.0, low_open=True)
    elif sched_kind == "theorem1":
        if "safety" in sched:
            _require_float(sched, "safety", errors, low=0.0, low_open=True)
    elif sched_kind == "sweep":
        raw = sched.get("etas")
        etas = []
        if isinstance(raw, str):
            try:
                etas = [float(p) for p in raw.split(",") if p.strip()]
            except ValueError:
                errors.append("sweep etas must be comma-separated numbers")
        elif isinstance(raw, (int, float)):
            etas = [float(raw)]
        if not etas:
            errors.append("sweep schedule needs a nonempty etas list")
        elif any(e <= 0 for e in etas):
            errors.append("sweep etas must be positive")

    run = dict(sections.get("run", {}))
    _require_int(run, "iterations", errors, minimum=1)
    _require_int(run, "replicas", errors, minimum=1)
    _require_int(run, "seed", errors)
    record_every = run.get("record_every", 1)
    if not isinstance(record_every, int) or record_every < 1:
        errors.append("record_every must be an integer >= 1")

    diagnostics = []
    for line in diag_lines:
        d = _parse_diag_line(line, errors)
        if d is not None:
            diagnostics.append(d)
    for d in diagnostics:
        if d.name == "tv_vs_truth":
            lo, hi, bins = d.params.get("lo"), d.params.get("hi"), d.params.get("bins")
            if not all(isinstance(v, (int, float)) for v in (lo, hi, bins)) or lo >= hi or int(bins) < 2:
                errors.append("tv_vs_truth needs lo < hi and bins >= 2")
        if d.name == "regularity" and kind == "gaussian":
            errors.append("regularity diagnostic needs a dataset-backed target")
        if d.name == "zero_one_summary" and kind != "zero_one":
            errors.append("zero_one_summary only applies to zero_one targets")

    output = sections.get("output", {}).get("dir")

    if errors:
        raise SpecValidationError(errors)
    return ExperimentSpec(
        name=name,
        target_kind=kind,
        target_params=target,
        sampler=sampler,
        lazy=bool(lazy),
        schedule_kind=sched_kind,
        schedule_params=sched,
        iterations=int(run["iterations"]),
        replicas=int(run["replicas"]),
        seed=int(run["seed"]),
        record_every=int(record_every),
        diagnostics=tuple(diagnostics),
        output=output,
        constraint_radii=constraint_radii,
    )


def _require_int(section: dict, key: str, errors: list[str], minimum: int | None = None):
    v = section.get(key)
    if not isinstance(v, int) or isinstance(v, bool):
        errors.append(f"{key} must be an integer, got {v!r}")
    elif minimum is not None and v < minimum:
        errors.append(f"{key} must be >= {minimum}, got {v}")


def _require_float(section: dict, key: str, errors: list[str], low=None, high=None, low_open=False):
    v = section.get(key)
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        errors.append(f"{key} must be a number, got {v!r}")
        return
    if low is not None and (v <= low if low_open else v < low):
        errors.append(f"{key} must be {'>' if low_open else '>='} {low}, got {v}")
    if high is not None and v > high:
        errors.append(f"{key} must be <= {high}, got {v}")


def serialize_spec(spec: ExperimentSpec) -> str:
    """Inverse of :func:`parse_spec` (round-trips exactly)."""
    def fmt(v):
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, float):
            return repr(v)
        return str(v)

    lines = [HEADER, f"name = {spec.name}", "", "[target]", f"kind = {spec.target_kind}"]
    lines += [f"{k} = {fmt(v)}" for k, v in sorted(spec.target_params.items())]
    lines += ["", "[sampler]", f"kind = {spec.sampler}", f"lazy = {fmt(spec.lazy)}"]
    if spec.constraint_radii is not None:
        lines += ["", "[constraint]", f"inner = {fmt(spec.constraint_radii[0])}",
                  f"outer = {fmt(spec.constraint_radii[1])}"]
    lines += ["", "[schedule]", f"kind = {spec.schedule_kind}"]
    lines += [f"{k} = {fmt(v)}" for k, v in sorted(spec.schedule_params.items())]
    lines += ["", "[run]", f"iterations = {spec.iterations}", f"replicas = {spec.replicas}",
              f"seed = {spec.seed}", f"record_every = {spec.record_every}"]
    if spec.diagnostics:
        lines += ["", "[diagnostics]"]
        for d in spec.diagnostics:
            params = " ".join(f"{k}={fmt(v)}" for k, v in sorted(d.params.items()))
            lines.append(d.name if not params else f"{d.name} {params}")
    if spec.output:
        lines += ["", "[output]", f"dir = {spec.output}"]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# building and running

@dataclass(frozen=True)
class BuiltTarget:
    target: TargetModel
    constraint: ConstraintSet | None
    dataset: Dataset | None
    theta_star: np.ndarray | None
    notes: dict


def build_target(spec: ExperimentSpec) -> BuiltTarget:
    """Materialize the spec's target (and constraint, for constrained runs)."""
    p = spec.target_params
    notes: dict = {}
    if spec.target_kind == "gaussian":
        d = int(p["d"])
        prec = p.get("precision", 1.0)
        if isinstance(prec, str):
            prec = [float(v) for v in prec.split(",")]
        target = make_gaussian(d, prec)
        dataset, theta = None, None
    elif spec.target_kind in ("logistic", "sigmoid"):
        if "dataset" in p:
            dataset = load_dataset(p["dataset"])
        else:
            d, r = int(p["d"]), int(p["r"])
            theta0 = np.zeros(d)
            theta0[0] = 1.0
            dataset = sample_sphere_dataset(d, r, theta0, float(p["q0"]), int(p["data_seed"]))
        maker = make_logistic_regression if spec.target_kind == "logistic" else make_sigmoid_regression
        target = maker(dataset, float(p["prior"]))
        theta = dataset.true_param
    else:  # zero_one
        d, r = int(p["d"]), int(p["r"])
        theta = np.zeros(d)
        theta[0] = 1.0
        dataset = sample_sphere_dataset(d, r, theta, float(p["q0"]), int(p["data_seed"]))
        inv_temp, lam = recommended_schedule(float(p["q0"]), float(p["epsilon"]), d, float(p.get("c1", 1.0)))
        raw = make_smoothed_zero_one(dataset, inv_temp, lam)
        scale = lam / math.sqrt(inv_temp)  # annulus outer radius before preconditioning
        target = precondition(raw, scale)
        notes.update(inverse_temperature=inv_temp, lam=lam, precondition_scale=scale)

    constraint = None
    if spec.sampler == "constrained-mala":
        radii = spec.constraint_radii or (0.5, 1.0)
        constraint = annulus(*radii)
        notes["constraint"] = list(radii)
    return BuiltTarget(target=target, constraint=constraint, dataset=dataset,
                       theta_star=theta, notes=notes)


def resolve_etas(spec: ExperimentSpec, built: BuiltTarget) -> tuple[list[float], dict]:
    """Schedule resolution; theorem1 pulls constants from the regularity side."""
    notes: dict = {}
    if spec.schedule_kind == "explicit":
        return [float(spec.schedule_params["eta"])], notes
    if spec.schedule_kind == "sweep":
        raw = spec.schedule_params["etas"]
        if isinstance(raw, str):
            return [float(v) for v in raw.split(",") if v.strip()], notes
        return [float(raw)], notes
    # theorem1
    target = built.target
    k = target.known_constants
    probe_points = int(spec.schedule_params.get("probe_points", 8))
    probe_dirs = int(spec.schedule_params.get("probe_dirs", 8))
    if k is not None and k.c3 is not None:
        c3 = k.c3
    else:
        c3 = estimate_c3(target, probe_points, probe_dirs, spec.seed)
    if k is not None and k.c4 is not None:
        c4 = k.c4
    else:
        c4 = estimate_c4(target, probe_points, probe_dirs, spec.seed)
    if k is not None and k.gradient_bound is not None:
        m = k.gradient_bound
    else:
        rng = chain_rng(spec.seed)
        samples = rng.standard_normal((max(16, probe_points), target.dimension))
        m = estimate_gradient_bound(target, list(samples)).gradient_bound
    tail = k.tail_rate if k is not None else None
    safety = float(spec.schedule_params.get("safety", 1.0))
    eta = theorem1_step_size(c3, c4, m, target.dimension, tail, safety)
    notes.update(c3=c3, c4=c4, gradient_bound=m, safety=safety)
    return [eta], notes


def _warm_annulus_init(target: TargetModel, constraint: ConstraintSet, rng: np.random.Generator,
                       candidates: int = 64) -> np.ndarray:
    """Best-of-N warm start inside an annulus constraint."""
    inner, outer = constraint.annulus_radii or (0.5, 1.0)
    d = target.dimension
    pts = rng.standard_normal((candidates, d))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    radii = inner + (outer - inner) * rng.random((candidates, 1))
    pts *= radii
    if target.vectorized:
        pot = np.asarray(target.potential(pts), dtype=float)
    else:
        pot = np.array([float(target.potential(q)) for q in pts])
    return pts[int(np.argmin(pot))]


def _replica_init(spec: ExperimentSpec, built: BuiltTarget, replica_seed: int) -> np.ndarray:
    if built.constraint is not None:
        return _warm_annulus_init(built.target, built.constraint, chain_rng(replica_seed ^ 0x5EED))
    return np.zeros(built.target.dimension)


@dataclass(frozen=True)
class RunReport:
    spec_text: str
    resolved_etas: list[float]
    schedule_notes: dict
    target_notes: dict
    summary_path: str
    diagnostics_path: str | None
    trace_paths: list[str]
    diagnostics: dict
    gradient_evals: int
    function_evals: int
    wall_time: float
    versions: dict
    replica_errors: list[str]

    def to_json(self) -> str:
        payload = {
            "spec": self.spec_text,
            "resolved_etas": self.resolved_etas,
            "schedule_notes": self.schedule_notes,
            "target_notes": self.target_notes,
            "summary_path": self.summary_path,
            "diagnostics_path": self.diagnostics_path,
            "trace_paths": self.trace_paths,
            "diagnostics": self.diagnostics,
            "gradient_evals": self.gradient_evals,
            "function_evals": self.function_evals,
            "wall_time": self.wall_time,
            "versions": self.versions,
            "replica_errors": self.replica_errors,
        }
        return json.dumps(payload, sort_keys=True, indent=2, default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def run_experiment(spec: ExperimentSpec, threads: int = 1, output_dir=None) -> RunReport:
    """Run every (eta, replica) cell, write traces and summaries.

    Replica chains may run on a thread pool; seeds are keyed by cell index
    and rows are written in cell order, so outputs are byte-identical for
    any ``threads``.  A cell failure is recorded, not raised, unless every
    cell fails.
    """
    start = time.perf_counter()
    if output_dir is not None:
        out = Path(output_dir)
    elif spec.output is not None:
        out = Path(spec.output)
    else:
        out = Path(os.environ.get("MALAKIT_OUT", "runs")) / spec.name
    out.mkdir(parents=True, exist_ok=True)
    built = build_target(spec)
    etas, schedule_notes = resolve_etas(spec, built)

    cells = [(e_idx, eta, rep) for e_idx, eta in enumerate(etas) for rep in range(spec.replicas)]
    children = np.random.SeedSequence(spec.seed).spawn(len(cells))
    cell_seeds = [int(c.generate_state(1, dtype=np.uint64)[0] >> 1) for c in children]

    def run_cell(cell_index: int):
        e_idx, eta, rep = cells[cell_index]
        seed = cell_seeds[cell_index]
        config = ChainConfig(step_size=eta, iterations=spec.iterations, seed=seed,
                             lazy=spec.lazy, constraint=built.constraint,
                             record_every=spec.record_every)
        init = _replica_init(spec, built, seed)
        if spec.sampler == "rwm":
            trace = run_rwm(built.target, config, init)
        elif spec.sampler == "constrained-mala":
            trace = run_constrained_mala(built.target, config, init)
        else:
            trace = run_mala(built.target, config, init)
        return trace

    results: list[ChainTrace | Exception] = [None] * len(cells)  # type: ignore[list-item]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {pool.submit(run_cell, k): k for k in range(len(cells))}
            for fut, k in futures.items():
                try:
                    results[k] = fut.result()
                except Exception as exc:  # noqa: BLE001 - captured per replica
                    results[k] = exc
    else:
        for k in range(len(cells)):
            try:
                results[k] = run_cell(k)
            except Exception as exc:  # noqa: BLE001
                results[k] = exc

    errors = [f"cell {k} (eta={cells[k][1]:g}, replica {cells[k][2]}): {r}"
              for k, r in enumerate(results) if isinstance(r, Exception)]
    traces = {k: r for k, r in enumerate(results) if isinstance(r, ChainTrace)}
    if not traces:
        raise RuntimeError("every replica failed:\n" + "\n".join(errors))

    trace_paths = []
    summary_lines = ["eta_index,eta,replica,seed,iterations,accepted_fraction,mean_accept_prob,"
                     "mean_abs_energy_error,min_potential,argmin_step,gradient_evals,function_evals"]
    for k in range(len(cells)):
        if k not in traces:
            continue
        e_idx, eta, rep = cells[k]
        tr = traces[k]
        path = tr.to_csv(out / f"trace_{e_idx}_{rep}.csv")
        trace_paths.append(str(path))
        stats = acceptance_stats(tr)
        summary_lines.append(",".join([
            str(e_idx), repr(float(eta)), str(rep), str(cell_seeds[k]), str(spec.iterations),
            repr(stats.accepted_fraction), repr(stats.mean),
            repr(float(np.mean(np.abs(tr.energy_errors)))),
            repr(float(tr.potentials[tr.argmin_index])), str(int(tr.indices[tr.argmin_index])),
            str(tr.gradient_evals), str(tr.function_evals),
        ]))
    summary_path = out / "summary.csv"
    summary_path.write_text("\n".join(summary_lines) + "\n")

    diagnostics, diag_lines = _run_diagnostics(spec, built, etas, traces, cells)
    diagnostics_path = None
    if diag_lines:
        diagnostics_path = out / "diagnostics.csv"
        diagnostics_path.write_text("\n".join(["diagnostic,key,value"] + diag_lines) + "\n")

    report = RunReport(
        spec_text=serialize_spec(spec),
        resolved_etas=[float(e) for e in etas],
        schedule_notes=schedule_notes,
        target_notes=built.notes,
        summary_path=str(summary_path),
        diagnostics_path=None if diagnostics_path is None else str(diagnostics_path),
        trace_paths=trace_paths,
        diagnostics=diagnostics,
        gradient_evals=sum(tr.gradient_evals for tr in traces.values()),
        function_evals=sum(tr.function_evals for tr in traces.values()),
        wall_time=time.perf_counter() - start,
        versions={"malakit": __version__, "numpy": np.__version__, "python": platform.python_version()},
        replica_errors=errors,
    )
    (out / "report.json").write_text(report.to_json() + "\n")
    return report


def _run_diagnostics(spec, built, etas, traces, cells):
    results: dict = {}
    lines: list[str] = []
    target = built.target

    def emit(diag: str, key: str, value):
        lines.append(f"{diag},{key},{repr(float(value)) if isinstance(value, (int, float, np.floating)) else value}")

    for diag in spec.diagnostics:
        if diag.name == "acceptance_stats":
            fractions = [acceptance_stats(tr).accepted_fraction for _, tr in sorted(traces.items())]
            means = [acceptance_stats(tr).mean for _, tr in sorted(traces.items())]
            results["acceptance_stats"] = {
                "accepted_fraction_mean": float(np.mean(fractions)),
                "mean_accept_prob": float(np.mean(means)),
            }
            emit("acceptance_stats", "accepted_fraction_mean", float(np.mean(fractions)))
            emit("acceptance_stats", "mean_accept_prob", float(np.mean(means)))
        elif diag.name == "tv_vs_truth":
            lo, hi, bins = float(diag.params["lo"]), float(diag.params["hi"]), int(diag.params["bins"])
            if target.dimension == 1:
                bounds: object = (lo, hi)
                nbins: object = bins
            elif target.dimension == 2:
                lo2 = float(diag.params.get("lo2", lo))
                hi2 = float(diag.params.get("hi2", hi))
                bins2 = int(diag.params.get("bins2", bins))
                bounds = ((lo, hi), (lo2, hi2))
                nbins = (bins, bins2)
            else:
                results["tv_vs_truth"] = {"error": "needs a 1D or 2D target"}
                continue
            truth = grid_truth(target, bounds, nbins, built.constraint)
            finals = np.stack([tr.states[-1] for _, tr in sorted(traces.items())])
            emp = histogram(finals, bounds, nbins)
            raw = tv_distance(emp, truth)
            ctrl = chain_rng(spec.seed ^ 0xF100F)
            floor = float(np.mean([
                tv_distance(histogram(truth.sample_midpoints(ctrl, finals.shape[0]), bounds, nbins), truth)
                for _ in range(3)
            ]))
            results["tv_vs_truth"] = {"raw": float(raw), "binning_floor": floor,
                                      "corrected": float(raw - floor), "replicas": finals.shape[0]}
            emit("tv_vs_truth", "raw", raw)
            emit("tv_vs_truth", "binning_floor", floor)
            emit("tv_vs_truth", "corrected", raw - floor)
        elif diag.name == "energy_error_scaling":
            raw = diag.params.get("etas", "0.4,0.2,0.1,0.05,0.025")
            fit_etas = [float(v) for v in str(raw).split(",")]
            samples = int(diag.params.get("samples", 2000))

            def phase(rng, n):
                return rng.standard_normal((n, target.dimension)), rng.standard_normal((n, target.dimension))

            fit = energy_error_scaling(target, phase, fit_etas, samples, spec.seed)
            results["energy_error_scaling"] = {"slope": fit.slope, "r_squared": fit.r_squared}
            emit("energy_error_scaling", "slope", fit.slope)
            emit("energy_error_scaling", "r_squared", fit.r_squared)
        elif diag.name == "regularity":
            if built.dataset is None:
                results["regularity"] = {"error": "no dataset"}
                continue
            report = build_regularity_report(target, built.dataset,
                                             int(diag.params.get("probe_points", 8)),
                                             int(diag.params.get("probe_dirs", 8)), spec.seed)
            results["regularity"] = json.loads(report.to_json())
            emit("regularity", "incoherence", report.incoherence)
            emit("regularity", "c3_estimate", report.c3_estimate)
            emit("regularity", "c4_estimate", report.c4_estimate)
        elif diag.name == "zero_one_summary":
            theta = built.theta_star
            angle_max = float(diag.params.get("angle_max", 0.35))
            angles, hits = [], []
            cone = _direction_cone(theta, angle_max)
            for _, tr in sorted(traces.items()):
                k = tr.argmin_index
                x = tr.states[k]
                angles.append(_angle_to(x, theta))
                hit = hitting_time(tr, cone)
                hits.append(-1 if hit is None else hit)
            results["zero_one_summary"] = {
                "angles": [float(a) for a in angles],
                "hitting_iterations": hits,
                "median_angle": float(np.median(angles)),
                "within_fraction": float(np.mean([a <= angle_max for a in angles])),
                "angle_max": angle_max,
            }
            emit("zero_one_summary", "median_angle", float(np.median(angles)))
            emit("zero_one_summary", "within_fraction", float(np.mean([a <= angle_max for a in angles])))
    return results, lines


def _angle_to(x: np.ndarray, theta: np.ndarray) -> float:
    nx = np.linalg.norm(x)
    if nx == 0:
        return math.pi
    return float(math.acos(float(np.clip(x @ theta / nx, -1.0, 1.0))))


def _direction_cone(theta: np.ndarray, angle_max: float) -> ConstraintSet:
    def membership(x):
        x = np.asarray(x, dtype=float)
        norms = np.linalg.norm(x, axis=-1)
        ips = x @ theta
        with np.errstate(invalid="ignore", divide="ignore"):
            cosine = np.where(norms > 0, ips / np.where(norms > 0, norms, 1.0), -1.0)
        return cosine >= math.cos(angle_max)

    return ConstraintSet(membership=membership, description=f"cone<{angle_max:g}rad")


# ---------------------------------------------------------------------------
# scaling studies

@dataclass(frozen=True)
class ScalingStudyResult:
    axis: str
    values: list[float]
    mixing_estimates: list[int | None]
    acceptance_means: list[float]
    gradient_evals: list[int]
    slope: float | None

    def table(self) -> str:
        header = f"{self.axis},mixing_estimate,acceptance_mean,gradient_evals"
        rows = [header]
        for v, m, a, g in zip(self.values, self.mixing_estimates, self.acceptance_means, self.gradient_evals):
            rows.append(f"{v:g},{'' if m is None else m},{a:.6f},{g}")
        rows.append(f"# log-log slope vs {self.axis}: {'' if self.slope is None else f'{self.slope:.4f}'}")
        return "\n".join(rows) + "\n"


def scaling_study(template: ExperimentSpec, axis: str, values,
                  mixing_replicas: int = 1000, tv_threshold: float = 0.1,
                  check_every: int = 2, max_iterations: int = 5000) -> ScalingStudyResult:
    """One linked-seed measurement per axis value, run sequentially.

    ``axis`` is ``eta`` (explicit step-size override) or ``dimension``
    (product-Gaussian dimension override).  Mixing estimates need a grid
    truth and are only computed for targets of dimension <= 2; the log-log
    slope is fit over values whose mixing estimate resolved.
    """
    if axis not in ("eta", "dimension"):
        raise ValueError("axis must be 'eta' or 'dimension'")
    values = [float(v) for v in values]
    if len(values) < 3:
        raise ValueError("need at least 3 axis values")

    mixing: list[int | None] = []
    acc_means: list[float] = []
    gevals: list[int] = []
    for idx, value in enumerate(values):
        if axis == "eta":
            spec = _with_schedule(template, value)
        else:
            d = int(value)
            if template.target_kind != "gaussian":
                raise ValueError("dimension axis needs a gaussian target template")
            params = dict(template.target_params)
            params["d"] = d
            spec = _replace(template, target_params=params)
        built = build_target(spec)
        etas, _ = resolve_etas(spec, built)
        eta = etas[0]
        seed = int(np.random.SeedSequence(template.seed).spawn(len(values))[idx].generate_state(1, dtype=np.uint64)[0] >> 1)

        d = built.target.dimension
        pilot_init = np.zeros((max(200, mixing_replicas // 5), d))
        pilot = run_ensemble(built.target, "rwm" if spec.sampler == "rwm" else "mala", eta,
                             min(500, spec.iterations), pilot_init, seed ^ 0xACC)
        acc_means.append(pilot.accepted_fraction)
        used = pilot.gradient_evals

        estimate = None
        if d <= 2:
            span = 6.0 / math.sqrt(float(np.min(built.target.quadratic_precision))) if built.target.quadratic_precision is not None else 6.0
            bounds = (-span, span) if d == 1 else ((-span, span), (-span, span))
            bins = 60 if d == 1 else 24

            def warm_init(rng, n, _d=d):
                return 0.5 * rng.standard_normal((n, _d))

            estimate = mixing_time_estimate(built.target, "rwm" if spec.sampler == "rwm" else "mala",
                                            eta, warm_init, tv_threshold, mixing_replicas,
                                            check_every, seed, bounds, bins, max_iterations)
            if estimate is not None:
                used += 2 * mixing_replicas * estimate if spec.sampler != "rwm" else 0
        mixing.append(estimate)
        gevals.append(used)

    slope = None
    pairs = [(v, m) for v, m in zip(values, mixing) if m is not None and m > 0]
    if len(pairs) >= 2:
        xs = np.log([p[0] for p in pairs])
        ys = np.log([p[1] for p in pairs])
        slope, _, _ = _ols(xs, ys)
    return ScalingStudyResult(axis=axis, values=values, mixing_estimates=mixing,
                              acceptance_means=acc_means, gradient_evals=gevals, slope=slope)


def _replace(spec: ExperimentSpec, **kw) -> ExperimentSpec:
    from dataclasses import replace as dc_replace

    return dc_replace(spec, **kw)


def _with_schedule(spec: ExperimentSpec, eta: float) -> ExperimentSpec:
    return _replace(spec, schedule_kind="explicit", schedule_params={"eta": float(eta)})
