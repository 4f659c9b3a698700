"""Spec parsing, runner determinism, scaling studies, and the CLI."""

import json
from pathlib import Path

import numpy as np
import pytest

from malakit.cli import cli_entry
from malakit.harness import (
    SpecValidationError,
    parse_spec,
    run_experiment,
    scaling_study,
    serialize_spec,
)

ROOT = Path(__file__).resolve().parents[1]
GOLDENS = json.loads((ROOT / "tests" / "goldens.json").read_text())

MINIMAL = """\
malakit-spec v1
name = mini

[target]
kind = gaussian
d = 1
precision = 1.0

[sampler]
kind = mala

[schedule]
kind = explicit
eta = 0.5

[run]
iterations = 1000
replicas = 2
seed = 11
"""


def spec_with(**edits):
    text = MINIMAL
    for old, new in edits.items():
        text = text.replace(old, new)
    return text


class TestParsing:
    def test_minimal_valid(self):
        spec = parse_spec(MINIMAL)
        assert spec.name == "mini"
        assert spec.target_kind == "gaussian"
        assert spec.schedule_params["eta"] == 0.5
        assert spec.lazy is False

    def test_negative_eta_names_field(self):
        with pytest.raises(SpecValidationError) as err:
            parse_spec(spec_with(**{"eta = 0.5": "eta = -1"}))
        assert any("eta" in e for e in err.value.errors)

    def test_empty_sweep_rejected(self):
        bad = spec_with(**{"kind = explicit\neta = 0.5": "kind = sweep\netas ="})
        with pytest.raises(SpecValidationError) as err:
            parse_spec(bad)
        assert any("etas" in e for e in err.value.errors)

    def test_missing_header(self):
        with pytest.raises(SpecValidationError):
            parse_spec(MINIMAL.replace("malakit-spec v1", "something else"))

    def test_unknown_names_collected_together(self):
        bad = spec_with(**{
            "kind = gaussian": "kind = mystery",
            "kind = mala": "kind = levitation",
        })
        with pytest.raises(SpecValidationError) as err:
            parse_spec(bad)
        assert len(err.value.errors) >= 2

    def test_unknown_diagnostic(self):
        bad = MINIMAL + "\n[diagnostics]\nfancy_plot\n"
        with pytest.raises(SpecValidationError) as err:
            parse_spec(bad)
        assert any("fancy_plot" in e for e in err.value.errors)

    def test_constrained_needs_constraint(self):
        bad = spec_with(**{"kind = mala": "kind = constrained-mala"})
        with pytest.raises(SpecValidationError) as err:
            parse_spec(bad)
        assert any("constraint" in e for e in err.value.errors)

    def test_lazy_defaults_on_for_constrained(self):
        text = spec_with(**{"kind = mala": "kind = constrained-mala"})
        text += "\n[constraint]\ninner = 0.5\nouter = 1.0\n"
        spec = parse_spec(text)
        assert spec.lazy is True
        assert spec.constraint_radii == (0.5, 1.0)

    def test_round_trip(self):
        text = MINIMAL + "\n[diagnostics]\nacceptance_stats\ntv_vs_truth lo=-6 hi=6 bins=60\n\n[output]\ndir = runs/mini\n"
        spec = parse_spec(text)
        assert parse_spec(serialize_spec(spec)) == spec

    def test_round_trip_zero_one(self):
        text = """\
malakit-spec v1
name = zo

[target]
kind = zero_one
d = 3
r = 100
q0 = 0.7
epsilon = 0.1
c1 = 0.05
data_seed = 5

[sampler]
kind = constrained-mala
lazy = true

[schedule]
kind = explicit
eta = 0.05

[run]
iterations = 200
replicas = 2
seed = 3

[diagnostics]
zero_one_summary angle_max=0.35
"""
        spec = parse_spec(text)
        assert parse_spec(serialize_spec(spec)) == spec


class TestRunExperiment:
    def test_demo_report_fields(self, tmp_path):
        spec = parse_spec(spec_with(**{"replicas = 2": "replicas = 100",
                                       "iterations = 1000": "iterations = 300"})
                          + "\n[diagnostics]\nacceptance_stats\ntv_vs_truth lo=-6 hi=6 bins=40\n")
        report = run_experiment(spec, output_dir=tmp_path)
        assert "acceptance_stats" in report.diagnostics
        assert "tv_vs_truth" in report.diagnostics
        assert report.diagnostics["tv_vs_truth"]["corrected"] < 0.2
        assert Path(report.summary_path).exists()
        for p in report.trace_paths:
            assert Path(p).exists()

    def test_byte_identical_reruns_and_threads(self, tmp_path):
        spec = parse_spec(MINIMAL)
        run_experiment(spec, threads=1, output_dir=tmp_path / "a")
        run_experiment(spec, threads=3, output_dir=tmp_path / "b")
        a = (tmp_path / "a" / "summary.csv").read_bytes()
        b = (tmp_path / "b" / "summary.csv").read_bytes()
        assert a == b

    def test_eval_accounting_matches_summary(self, tmp_path):
        spec = parse_spec(MINIMAL)
        report = run_experiment(spec, output_dir=tmp_path)
        rows = Path(report.summary_path).read_text().strip().splitlines()[1:]
        grad_total = sum(int(r.split(",")[-2]) for r in rows)
        fn_total = sum(int(r.split(",")[-1]) for r in rows)
        assert report.gradient_evals == grad_total
        assert report.function_evals == fn_total

    def test_zero_one_pipeline_golden(self, tmp_path):
        text = """\
malakit-spec v1
name = zero-one-golden

[target]
kind = zero_one
d = 3
r = 400
q0 = 0.7
epsilon = 0.1
c1 = 0.05
data_seed = 5

[sampler]
kind = constrained-mala

[schedule]
kind = explicit
eta = 0.05

[run]
iterations = 1500
replicas = 3
seed = 424242

[diagnostics]
zero_one_summary angle_max=0.35
"""
        report = run_experiment(parse_spec(text), output_dir=tmp_path)
        zo = report.diagnostics["zero_one_summary"]
        golden = GOLDENS["zero_one"]
        assert zo["hitting_iterations"] == golden["hitting_iterations"]
        assert zo["median_angle"] == pytest.approx(golden["median_angle"], rel=1e-9)
        for got, want in zip(zo["angles"], golden["angles"]):
            assert got == pytest.approx(want, rel=1e-9)

    def test_theorem1_schedule_resolves(self, tmp_path):
        spec = parse_spec(spec_with(**{"kind = explicit\neta = 0.5": "kind = theorem1\nsafety = 0.5"}))
        report = run_experiment(spec, output_dir=tmp_path)
        assert report.resolved_etas == [0.5]  # 0.5 * d^{-1/3} with d=1, M=1

    def test_sweep_schedule(self, tmp_path):
        spec = parse_spec(spec_with(**{"kind = explicit\neta = 0.5": "kind = sweep\netas = 0.5,0.25"}))
        report = run_experiment(spec, output_dir=tmp_path)
        assert report.resolved_etas == [0.5, 0.25]
        rows = Path(report.summary_path).read_text().strip().splitlines()[1:]
        assert len(rows) == 4  # 2 etas x 2 replicas


class TestScalingStudy:
    def test_eta_axis_slope_band(self):
        spec = parse_spec(MINIMAL)
        result = scaling_study(spec, "eta", [0.5, 0.25, 0.125], mixing_replicas=1000,
                               max_iterations=3000)
        assert all(m is not None for m in result.mixing_estimates)
        assert -3.0 <= result.slope <= -1.3
        table = result.table()
        assert table.splitlines()[0].startswith("eta,")

    def test_dimension_axis_acceptance(self):
        spec = parse_spec(spec_with(**{"kind = explicit\neta = 0.5": "kind = theorem1\nsafety = 1.0"}))
        result = scaling_study(spec, "dimension", [2, 4, 8, 16])
        assert all(a >= 0.5 for a in result.acceptance_means)

    def test_single_value_rejected(self):
        spec = parse_spec(MINIMAL)
        with pytest.raises(ValueError):
            scaling_study(spec, "eta", [0.5])

    def test_unknown_axis_rejected(self):
        spec = parse_spec(MINIMAL)
        with pytest.raises(ValueError):
            scaling_study(spec, "temperature", [1, 2, 3])


class TestCli:
    def test_run_demo_spec(self, tmp_path, capsys):
        code = cli_entry(["run", str(ROOT / "specs" / "gaussian_demo.spec"), "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "summary.csv").exists()
        assert (tmp_path / "report.json").exists()

    def test_unknown_subcommand(self):
        assert cli_entry(["frobnicate"]) == 1

    def test_validation_failure_is_exit_1(self, tmp_path):
        bad = tmp_path / "bad.spec"
        bad.write_text(MINIMAL.replace("eta = 0.5", "eta = -2"))
        assert cli_entry(["run", str(bad)]) == 1

    def test_regularity_on_bundled_dataset(self, capsys):
        code = cli_entry(["regularity", str(ROOT / "data" / "bundled_r50.csv"),
                          "--probe-points", "6", "--probe-dirs", "6"])
        assert code == 0
        out = capsys.readouterr().out
        assert "incoherence" in out
        assert "C3" in out and "C4" in out
        assert "VIOLATED" not in out

    def test_dataset_roundtrip_via_cli(self, tmp_path, capsys):
        out_csv = tmp_path / "ds.csv"
        assert cli_entry(["dataset", "--dim", "4", "--count", "10", "--seed", "2",
                          "--out", str(out_csv)]) == 0
        assert cli_entry(["regularity", str(out_csv), "--probe-points", "4",
                          "--probe-dirs", "4"]) == 0

    def test_diagnose_hanson_wright(self, capsys):
        code = cli_entry(["diagnose", "hanson-wright", "--dim", "4", "--draws", "20000"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["holds"] is True

    def test_sample_writes_trace(self, tmp_path, capsys):
        code = cli_entry(["sample", "--dim", "2", "--precision", "1,4", "--eta", "0.4",
                          "--iterations", "200", "--seed", "9", "--out", str(tmp_path)])
        assert code == 0
        assert (tmp_path / "trace.csv").exists()
        header = (tmp_path / "trace.csv").read_text().splitlines()[0]
        assert header == "i,accepted,energy_error,log_accept,potential,x_0,x_1"
