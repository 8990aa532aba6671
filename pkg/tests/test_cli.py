import json
import xml.etree.ElementTree as ET

import numpy as np
import pandas as pd
import pytest
from click.testing import CliRunner

from srca.data import DataMatrix, load_csv, write_csv
from srca.main import app, plan_cells, results_table, run_benchmark
from srca.schemas import BenchmarkPlan, parse_document
from srca.solver import load_model
from srca.utils import make_rng

from conftest import axis_sphere

SVG_NS = "{http://www.w3.org/2000/svg}"


@pytest.fixture
def runner():
    return CliRunner()


def _invoke(runner, *args):
    return runner.invoke(app, [str(a) for a in args], catch_exceptions=False)


def test_generate_is_deterministic(runner, tmp_path):
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (first, second):
        result = _invoke(runner, "generate", "--kind", "orthogonal_loops", "--n", 50, "--seed", 4, "--out", out)
        assert result.exit_code == 0, result.output
    assert first.read_bytes() == second.read_bytes()
    assert load_csv(first).values.shape == (50, 3)


def test_generate_with_labels(runner, tmp_path):
    out = tmp_path / "gem.csv"
    assert _invoke(runner, "generate", "--kind", "gem", "--n", 30, "--labels", "--out", out).exit_code == 0
    X = load_csv(out, label_column=3)
    assert X.values.shape == (30, 3)
    assert sorted(set(X.labels.tolist())) == [0, 1, 2]


def test_generate_rejects_unknown_kind(runner, tmp_path):
    result = _invoke(runner, "generate", "--kind", "cube", "--out", tmp_path / "x.csv")
    assert result.exit_code == 1


def test_bad_torus_radii_is_usage_error(runner, tmp_path):
    result = _invoke(runner, "generate", "--kind", "torus", "--r1", 0.1, "--r2", 0.5, "--out", tmp_path / "x.csv")
    assert result.exit_code == 1


@pytest.mark.parametrize("args", [["--bogus"], ["nosuch"], ["generate", "--bogus"]])
def test_every_usage_error_exits_1(runner, args):
    assert _invoke(runner, *args).exit_code == 1


def test_fit_sphere_sample(runner, tmp_path):
    data, model = tmp_path / "sphere.csv", tmp_path / "model.json"
    _invoke(runner, "generate", "--kind", "sphere", "--n", 100, "--seed", 1, "--out", data)
    result = _invoke(runner, "fit", "--data", data, "--dprime", 2, "--tol", 1e-12, "--out", model)
    assert result.exit_code == 0, result.output
    loss_line = next(line for line in result.output.splitlines() if line.startswith("final loss:"))
    assert float(loss_line.split(":")[1]) < 1e-8
    assert "index set: [1, 2, 3]" in result.output
    assert "radius: " in result.output
    assert load_model(model).params.radius == pytest.approx(1.0, abs=1e-5)


def test_fit_auto_strategy_switches_to_relaxation(runner, tmp_path):
    X, members, _, _ = axis_sphere(40, 2, seed=3, n=60)
    data, model = tmp_path / "wide.csv", tmp_path / "model.json"
    write_csv(X, data)
    result = _invoke(runner, "fit", "--data", data, "--dprime", 2, "--rotation", "identity", "--out", model)
    assert result.exit_code == 0, result.output
    assert "strategy: l1_relaxed" in result.output
    document = json.loads(model.read_text())
    assert document["config"]["strategy"] == "auto"
    assert document["strategy"] == "l1_relaxed"
    assert document["index_set"] == [m + 1 for m in members]
    assert load_model(model).strategy == "l1_relaxed"


def test_fit_records_rotation_in_digest(runner, tmp_path):
    data = tmp_path / "loops.csv"
    _invoke(runner, "generate", "--kind", "orthogonal_loops", "--n", 60, "--out", data)
    digests = []
    for rotation in ("pca", "varimax"):
        out = tmp_path / f"{rotation}.json"
        assert _invoke(runner, "fit", "--data", data, "--dprime", 1, "--rotation", rotation, "--out", out).exit_code == 0
        document = json.loads(out.read_text())
        assert document["config"]["rotation"]["kind"] == rotation
        digests.append(document["config_digest"])
    assert digests[0] != digests[1]


@pytest.mark.parametrize("method", ["pca", "spca"])
def test_fit_baselines(runner, tmp_path, method):
    data, model = tmp_path / "loops.csv", tmp_path / "model.json"
    _invoke(runner, "generate", "--kind", "orthogonal_loops", "--n", 80, "--out", data)
    result = _invoke(runner, "fit", "--data", data, "--method", method, "--dprime", 1, "--out", model)
    assert result.exit_code == 0, result.output
    assert json.loads(model.read_text())["kind"] == method
    assert "training mse:" in result.output


def test_fit_missing_data_is_data_error(runner, tmp_path):
    result = _invoke(runner, "fit", "--data", tmp_path / "nope.csv", "--dprime", 1, "--out", tmp_path / "m.json")
    assert result.exit_code == 2


def test_fit_dprime_too_large_is_usage_error(runner, tmp_path):
    data = tmp_path / "plane.csv"
    _invoke(runner, "generate", "--kind", "plane", "--n", 20, "--out", data)
    result = _invoke(runner, "fit", "--data", data, "--dprime", 3, "--out", tmp_path / "m.json")
    assert result.exit_code == 1


def test_fit_orthomax_needs_gamma(runner, tmp_path):
    data = tmp_path / "plane.csv"
    _invoke(runner, "generate", "--kind", "plane", "--n", 20, "--out", data)
    result = _invoke(runner, "fit", "--data", data, "--dprime", 1, "--rotation", "orthomax", "--out", tmp_path / "m.json")
    assert result.exit_code == 1


def test_transform_and_svg(runner, tmp_path):
    data, model, reduced, svg = (tmp_path / name for name in ("s.csv", "m.json", "r.csv", "s.svg"))
    _invoke(runner, "generate", "--kind", "sphere", "--n", 40, "--noise", 0.01, "--out", data)
    _invoke(runner, "fit", "--data", data, "--dprime", 1, "--out", model)
    result = _invoke(runner, "transform", "--model", model, "--data", data, "--out", reduced, "--svg", svg)
    assert result.exit_code == 0, result.output

    X_hat = load_csv(reduced)
    np.testing.assert_allclose(X_hat.values, load_model(model).transform(load_csv(data)).values, atol=1e-12)

    root = ET.parse(svg).getroot()
    layer = next(el for el in root.iter() if el.get("id") == "original")
    markers = [el for el in layer.iter() if el.tag in (f"{SVG_NS}use", f"{SVG_NS}path")]
    assert 40 in (
        sum(el.tag == f"{SVG_NS}use" for el in markers),
        sum(el.tag == f"{SVG_NS}path" for el in markers),
    )
    assert any(el.get("id") == "reduced" for el in root.iter())


def test_transform_width_mismatch(runner, tmp_path):
    data, model = tmp_path / "s.csv", tmp_path / "m.json"
    _invoke(runner, "generate", "--kind", "sphere", "--n", 30, "--out", data)
    _invoke(runner, "fit", "--data", data, "--dprime", 1, "--out", model)
    narrow = tmp_path / "narrow.csv"
    write_csv(DataMatrix(np.ones((3, 2))), narrow)
    assert _invoke(runner, "transform", "--model", model, "--data", narrow, "--out", tmp_path / "r.csv").exit_code == 2


def test_evaluate_identity_reduction(runner, tmp_path):
    data, labels, report = tmp_path / "x.csv", tmp_path / "labels.csv", tmp_path / "report.json"
    X = DataMatrix(make_rng(2).standard_normal((30, 3)))
    write_csv(X, data)
    labels.write_text("\n".join(["a"] * 15 + ["b"] * 15) + "\n")
    result = _invoke(
        runner, "evaluate", "--data", data, "--reduced", data, "--labels", labels,
        "--out", report, "--csv", tmp_path / "report.csv",
    )
    assert result.exit_code == 0, result.output
    document = json.loads(report.read_text())
    assert document["mse"] == 0.0
    assert document["cc"] == pytest.approx(1.0)
    assert document["auc"] == pytest.approx(1.0)
    assert document["sc"] is not None
    assert list(pd.read_csv(tmp_path / "report.csv").columns)[:2] == ["mse", "oos_mse"]


def test_evaluate_without_labels_prints_nulls(runner, tmp_path):
    data = tmp_path / "x.csv"
    write_csv(DataMatrix(make_rng(3).standard_normal((10, 2))), data)
    result = _invoke(runner, "evaluate", "--data", data, "--reduced", data)
    assert result.exit_code == 0
    document = json.loads(result.stdout)
    assert document["sc"] is None and document["chi"] is None and document["dbi"] is None


def _write_plan(tmp_path, **overrides):
    plan = {
        "datasets": [
            {"name": "loops", "generator": {"kind": "orthogonal_loops", "n": 60}},
            {"name": "missing", "csv": "does_not_exist.csv"},
        ],
        "methods": ["srca", "pca"],
        "d_prime_list": [1],
        "output_dir": "out",
    }
    plan.update(overrides)
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(plan))
    return path


def test_benchmark_writes_tables_and_records_errors(runner, tmp_path):
    plan = _write_plan(tmp_path)
    result = _invoke(runner, "benchmark", "--plan", plan, "--holdout")
    assert result.exit_code == 0, result.output
    out = tmp_path / "out"
    mse_table = pd.read_csv(out / "mse.csv", index_col=0)
    assert list(mse_table.index) == ["loops", "missing"]
    assert list(mse_table.columns) == ["srca_d1_pca", "pca_d1"]
    assert (mse_table.loc["missing"] == "error").all()
    assert (out / "oos_mse.csv").is_file()
    cells = json.loads((out / "cells.json").read_text())
    assert len(cells["cells"]) == 4
    assert cells["plan_digest"]
    assert {c["status"] for c in cells["cells"] if c["dataset"] == "missing"} == {"error"}


def test_benchmark_rejects_empty_methods(runner, tmp_path):
    plan = _write_plan(tmp_path, methods=[])
    assert _invoke(runner, "benchmark", "--plan", plan).exit_code == 1


def test_benchmark_missing_plan(runner, tmp_path):
    assert _invoke(runner, "benchmark", "--plan", tmp_path / "none.json").exit_code == 2


def test_plan_cells_expand_rotations_for_srca_only():
    plan = parse_document(
        BenchmarkPlan,
        json.dumps(
            {
                "datasets": [{"name": "s", "generator": {"kind": "sphere", "n": 30}}],
                "methods": ["srca", "spca"],
                "d_prime_list": [1, 2],
                "rotations": [{"kind": "pca"}, {"kind": "varimax"}],
            }
        ),
    )
    cells = plan_cells(plan)
    assert len(cells) == 2 * 2 + 2
    results = run_benchmark(plan)
    assert all(r["status"] == "ok" for r in results)
    table = results_table(results, "mse")
    assert list(table.columns) == ["srca_d1_pca", "srca_d1_varimax", "srca_d2_pca", "srca_d2_varimax", "spca_d1", "spca_d2"]


def test_fit_reports_flat_for_planar_data(runner, tmp_path):
    data, model = tmp_path / "plane.csv", tmp_path / "model.json"
    _invoke(runner, "generate", "--kind", "plane", "--n", 60, "--out", data)
    result = _invoke(runner, "fit", "--data", data, "--dprime", 2, "--out", model)
    assert result.exit_code == 0, result.output
    assert "radius: inf (flat)" in result.output
    document = json.loads(model.read_text())
    assert document["radius"] is None and len(document["normal"]) == 3
