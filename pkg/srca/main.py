import json
import logging
from pathlib import Path
from typing import get_args

import click
import pandas as pd

from . import settings
from .baselines import pca_fit, spca_fit
from .data import DataMatrix, load_csv, load_labels, split_train_test, standardize, write_csv
from .errors import DataError, SrcaError
from .metrics import evaluate, mse, out_of_sample_mse, write_report_csv, write_report_json
from .plots import plot_axes, scatter_svg
from .rotation import apply_rotation
from .schemas import (
    BenchmarkPlan,
    DatasetEntry,
    FitConfig,
    GeneratorKind,
    GeneratorSpec,
    Method,
    RotationKind,
    RotationSpec,
    Strategy,
    build,
    parse_document,
)
from .solver import SphereModel, fit, load_model, save_model
from .synthetic import generate
from .utils import digest

logger = logging.getLogger(__name__)


class SrcaGroup(click.Group):
    """Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure."""

    def make_context(self, info_name, args, parent=None, **extra):
        # top-level parse errors never reach invoke; click would exit 2 for them
        try:
            return super().make_context(info_name, args, parent=parent, **extra)
        except click.UsageError as exc:
            exc.exit_code = 1
            raise

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except click.UsageError as exc:
            exc.show()
            ctx.exit(1)
        except SrcaError as exc:
            click.echo(f"error: {exc.detail}", err=True)
            ctx.exit(exc.exit_code)


@click.group(cls=SrcaGroup)
def app():
    """Sphere-fitting dimension reduction: generate, fit, transform, evaluate, benchmark."""
    settings.configure_logging()


def fit_model(X: DataMatrix, method: str, cfg: FitConfig):
    if method == "pca":
        return pca_fit(X, cfg.retained_dim)
    if method == "spca":
        return spca_fit(X, cfg.retained_dim, refine=cfg.refine_spca)
    return fit(X, cfg)


def _read_weight(value: str):
    if value == "identity":
        return value
    path = Path(value)
    if not path.is_file():
        raise DataError(f"weight must be 'identity' or a CSV file, got {value!r}")
    return load_csv(path).values.tolist()


# ---------------------------
# generate
# ---------------------------

@app.command("generate")
@click.option("--kind", type=click.Choice(get_args(GeneratorKind)), required=True)
@click.option("--n", "n", type=int, default=400, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--noise", "noise_var", type=float, default=0.0, help="Gaussian noise variance per coordinate.")
@click.option("--r1", "R1", type=float, default=0.5, show_default=True)
@click.option("--r2", "R2", type=float, default=1.0 / 3.0)
@click.option("--labels/--no-labels", default=False, help="Append the loop / batch id as a last column.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def generate_command(kind, n, seed, noise_var, R1, R2, labels, out):
    spec = build(GeneratorSpec, kind=kind, n=n, noise_var=noise_var, seed=seed, R1=R1, R2=R2)
    data = generate(spec)
    write_csv(data, out, include_labels=labels)
    click.echo(f"wrote {data.rows} x {data.cols} {kind} sample to {out}")


# ---------------------------
# fit
# ---------------------------

@app.command("fit")
@click.option("--data", "data_path", type=click.Path(dir_okay=False), required=True)
@click.option("--has-header", is_flag=True)
@click.option("--label-column", type=int, default=None, help="Zero-based column holding class labels.")
@click.option("--method", type=click.Choice(get_args(Method)), default="srca", show_default=True)
@click.option("--dprime", type=int, required=True, help="Retained sphere dimension d'.")
@click.option("--rotation", type=click.Choice(get_args(RotationKind)), default="pca", show_default=True)
@click.option("--gamma", type=float, default=None, help="Orthomax gamma (only with --rotation orthomax).")
@click.option("--strategy", type=click.Choice(get_args(Strategy)), default="auto", show_default=True)
@click.option("--lambda", "penalty_lambda", type=float, default=0.0, show_default=True)
@click.option("--weight", default="identity", show_default=True, help="'identity' or a CSV with a d x d SPD matrix.")
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--restarts", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--refine", is_flag=True, help="Levenberg-Marquardt refinement of the SPCA sphere.")
@click.option("--jobs", type=int, default=None, help="Worker threads; SRCA_JOBS takes precedence.")
@click.option("--out", type=click.Path(dir_okay=False), required=True)
def fit_command(
    data_path, has_header, label_column, method, dprime, rotation, gamma, strategy,
    penalty_lambda, weight, tol, restarts, seed, refine, jobs, out,
):
    X = load_csv(data_path, has_header, label_column)
    cfg = build(
        FitConfig,
        retained_dim=dprime,
        rotation=build(RotationSpec, kind=rotation, gamma=gamma),
        strategy=strategy,
        weight=_read_weight(weight),
        penalty_lambda=penalty_lambda,
        tol=tol,
        restarts=restarts,
        seed=seed,
        refine_spca=refine,
        jobs=settings.resolve_jobs(jobs),
    )
    model = fit_model(X, method, cfg)
    save_model(model, out)
    if isinstance(model, SphereModel):
        click.echo(f"final loss: {model.final_loss:.12g}")
        click.echo(f"strategy: {model.strategy}")
        click.echo(f"index set: {model.index_set.one_based}")
        click.echo("radius: inf (flat)" if model.params.is_flat else f"radius: {model.params.radius:.12g}")
    click.echo(f"training mse: {mse(X, model.transform(X)):.12g}")


# ---------------------------
# transform
# ---------------------------

def _plot_frame(model, X: DataMatrix, X_hat: DataMatrix):
    """Both matrices in the model's own frame, plus the two axes worth plotting."""
    if isinstance(model, SphereModel):
        frame = [apply_rotation(M.with_values(M.values - model.mean), model.rotation) for M in (X, X_hat)]
        return frame[0], frame[1], plot_axes(model.index_set.one_based, model.dim)
    frame = [DataMatrix((M.values - model.mean) @ model.basis) for M in (X, X_hat)]
    return frame[0], frame[1], plot_axes([1, 2], model.basis.shape[1])


@app.command("transform")
@click.option("--model", "model_path", type=click.Path(dir_okay=False), required=True)
@click.option("--data", "data_path", type=click.Path(dir_okay=False), required=True)
@click.option("--has-header", is_flag=True)
@click.option("--out", type=click.Path(dir_okay=False), required=True)
@click.option("--svg", "svg_path", type=click.Path(dir_okay=False), default=None)
def transform_command(model_path, data_path, has_header, out, svg_path):
    model = load_model(model_path)
    X = load_csv(data_path, has_header)
    X_hat = model.transform(X)
    write_csv(X_hat, out)
    if svg_path:
        scatter_svg(*_plot_frame(model, X, X_hat), svg_path)
    click.echo(f"wrote {X_hat.rows} reduced rows to {out}")


# ---------------------------
# evaluate
# ---------------------------

@app.command("evaluate")
@click.option("--data", "data_path", type=click.Path(dir_okay=False), required=True, help="Original CSV.")
@click.option("--reduced", "reduced_path", type=click.Path(dir_okay=False), required=True)
@click.option("--has-header", is_flag=True)
@click.option("--labels", "labels_path", type=click.Path(dir_okay=False), default=None,
              help="One-column CSV of class labels.")
@click.option("--out", type=click.Path(dir_okay=False), default=None, help="Report JSON; stdout when omitted.")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None)
def evaluate_command(data_path, reduced_path, has_header, labels_path, out, csv_path):
    X = load_csv(data_path, has_header)
    X_hat = load_csv(reduced_path, has_header)
    labels = load_labels(labels_path) if labels_path else None
    report = evaluate(X, X_hat, labels)
    if out:
        write_report_json(report, out)
    else:
        click.echo(report.model_dump_json(indent=2))
    if csv_path:
        write_report_csv(report, csv_path)


# ---------------------------
# benchmark
# ---------------------------

def _rotation_label(spec: RotationSpec) -> str:
    return f"orthomax({spec.gamma:g})" if spec.kind == "orthomax" else spec.kind


def _load_dataset(entry: DatasetEntry, base_dir: Path) -> DataMatrix:
    if entry.generator is not None:
        X = generate(entry.generator)
    else:
        path = Path(entry.csv)
        if not path.is_absolute():
            path = base_dir / path
        X = load_csv(path, entry.has_header, entry.label_column)
    X, _ = standardize(X, entry.standardize)
    return X


def plan_cells(plan: BenchmarkPlan) -> list[dict]:
    cells = []
    for entry in plan.datasets:
        for method in plan.methods:
            rotations = plan.rotations if method == "srca" else [None]
            for d_prime in plan.d_prime_list:
                for rotation in rotations:
                    cells.append({"dataset": entry.name, "method": method, "d_prime": d_prime, "rotation": rotation})
    return cells


def run_cell(cell: dict, X, plan: BenchmarkPlan) -> dict:
    result = {
        "dataset": cell["dataset"],
        "method": cell["method"],
        "d_prime": cell["d_prime"],
        "rotation": _rotation_label(cell["rotation"]) if cell["rotation"] else None,
        "status": "ok",
        "mse": None,
        "oos_mse": None,
        "error": None,
    }
    try:
        if isinstance(X, Exception):
            raise X
        cfg_fields = {"retained_dim": cell["d_prime"], "strategy": plan.strategy, "restarts": plan.restarts, "seed": plan.seed}
        if cell["rotation"] is not None:
            cfg_fields["rotation"] = cell["rotation"]
        cfg = build(FitConfig, **cfg_fields)
        if plan.holdout:
            train, test = split_train_test(X, plan.test_fraction, plan.seed)
        else:
            train, test = X, None
        model = fit_model(train, cell["method"], cfg)
        result["mse"] = mse(train, model.transform(train))
        if test is not None:
            result["oos_mse"] = out_of_sample_mse(model, test)
        logger.info("cell %s/%s/d'=%d: mse %.6g", cell["dataset"], cell["method"], cell["d_prime"], result["mse"])
    except Exception as exc:
        detail = exc.detail if isinstance(exc, SrcaError) else f"{type(exc).__name__}: {exc}"
        logger.warning("cell %s/%s/d'=%d failed: %s", cell["dataset"], cell["method"], cell["d_prime"], detail)
        result.update(status="error", error=detail)
    return result


def run_benchmark(plan: BenchmarkPlan, jobs: int = 1, base_dir: Path = Path(".")) -> list[dict]:
    datasets = {}
    for entry in plan.datasets:
        try:
            datasets[entry.name] = _load_dataset(entry, base_dir)
        except SrcaError as exc:
            logger.warning("dataset %s unavailable: %s", entry.name, exc.detail)
            datasets[entry.name] = exc
    cells = plan_cells(plan)
    logger.info("benchmark: %d cells on %d workers", len(cells), jobs)
    with settings.worker_pool(jobs) as pool:
        return list(pool.map(lambda cell: run_cell(cell, datasets[cell["dataset"]], plan), cells))


def results_table(results: list[dict], value: str) -> pd.DataFrame:
    """One row per dataset, one column per method x d' (x rotation); failed cells read "error"."""
    rows = []
    for result in results:
        column = f"{result['method']}_d{result['d_prime']}"
        if result["rotation"] is not None:
            column += f"_{result['rotation']}"
        cell = "error" if result["status"] == "error" else result[value]
        rows.append({"dataset": result["dataset"], "column": column, "value": cell})
    frame = pd.DataFrame(rows)
    table = frame.pivot(index="dataset", columns="column", values="value")
    return table.reindex(index=frame["dataset"].unique(), columns=frame["column"].unique())


@app.command("benchmark")
@click.option("--plan", "plan_path", type=click.Path(dir_okay=False), required=True)
@click.option("--holdout/--no-holdout", default=None, help="Override the plan's holdout setting.")
@click.option("--jobs", type=int, default=None, help="Worker threads; SRCA_JOBS takes precedence.")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None)
def benchmark_command(plan_path, holdout, jobs, out_dir):
    path = Path(plan_path)
    if not path.is_file():
        raise DataError(f"no such plan file: {path}")
    plan = parse_document(BenchmarkPlan, path.read_text())
    if holdout is not None:
        plan = plan.model_copy(update={"holdout": holdout})
    if out_dir is not None:
        plan = plan.model_copy(update={"output_dir": out_dir})

    results = run_benchmark(plan, settings.resolve_jobs(jobs), path.parent)

    output_dir = Path(plan.output_dir)
    if not output_dir.is_absolute():
        output_dir = path.parent / output_dir
    output_dir.mkdir(parents=True, exist_ok=True)
    results_table(results, "mse").to_csv(output_dir / "mse.csv", float_format="%.10g")
    if plan.holdout:
        results_table(results, "oos_mse").to_csv(output_dir / "oos_mse.csv", float_format="%.10g")
    summary = {"plan_digest": digest(plan.model_dump(mode="json")), "cells": results}
    (output_dir / "cells.json").write_text(json.dumps(summary, indent=2))

    failed = sum(result["status"] == "error" for result in results)
    click.echo(f"{len(results)} cells, {failed} failed; tables in {output_dir}")


def main():
    app(prog_name="srca")
