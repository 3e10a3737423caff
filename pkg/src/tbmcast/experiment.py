"""End-to-end experiment runner for the four forecasting settings.

A run is a set of cells, one per (model, target) pair under the requested
setting:

    swol  single-output, all features
    swl   single-output, each target fed its own column plus its selection
    mwol  multi-output, all features
    mwl   multi-output, one model on the union of all selections

Each cell trains in normalized space, predicts the held-out tail, reports
physical-unit metrics, and writes its artifacts into its own directory so a
failing cell cannot corrupt a finished one.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import dataset, lasso, metrics, neural, optim, shallow, synthetic
from .dataset import SplitSpec, TARGET_KEYS, TARGET_NAMES
from .errors import ForecastError, ValidationError

log = logging.getLogger(__name__)

MODEL_CHOICES = metrics.MODELS + ("all",)
TARGET_CHOICES = TARGET_KEYS + ("all",)
SCOPES = ("train_only", "whole_series")
REPORT_SPACES = ("physical", "normalized")

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ValidationError(f"cannot read {text!r} as a boolean")


def _parse_optional(parser):
    def parse(text):
        return None if text.strip().lower() in ("", "none", "auto") else parser(text)
    return parse


def _parse_gamma(text: str):
    lowered = text.strip().lower()
    if lowered in ("scale", "auto"):
        return lowered
    return float(text)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one run depends on; defaults follow the reference setup."""

    data: str | None = None
    synthetic_seed: int | None = None
    synthetic_features: int = 44
    synthetic_length: int = 3000
    synthetic_support: int = 5
    synthetic_snr: float = 10.0
    tau: int = 5
    train_end: int = 2500
    total: int = 3000
    context_across_boundary: bool = True
    setting: str = "swol"
    model: str = "rf"
    target: str = "all"
    seed: int = 0
    out: str = "runs"
    normalize_scope: str = "train_only"
    paper_exact: bool = False
    plots: bool = True
    report_space: str = "physical"
    lasso_lambda: float | None = None
    lasso_threshold: float = lasso.DEFAULT_THRESHOLD
    lasso_n_lambdas: int = 50
    selection_csv: str | None = None
    hidden: int = 10
    use_bias: bool = True
    fnn_lr: float = 0.01
    fnn_epochs: int = 100
    rmsprop_lr: float = 5e-4
    rmsprop_rho: float = 0.9
    rmsprop_eps: float = 1e-8
    rmsprop_updates: int = 30000
    svr_c: float = 1.0
    svr_epsilon: float = 0.1
    svr_gamma: float | str = "scale"
    svr_tol: float = 1e-3
    svr_max_iter: int = 100_000
    rf_trees: int = 10
    rf_max_depth: int = 5
    rf_min_split: int = 2
    rf_features: int | None = None

    def __post_init__(self):
        if self.setting not in metrics.SETTINGS:
            raise ValidationError(
                f"setting must be one of {metrics.SETTINGS}, got {self.setting!r}"
            )
        if self.model not in MODEL_CHOICES:
            raise ValidationError(f"unknown model {self.model!r}")
        if self.target not in TARGET_CHOICES:
            raise ValidationError(f"unknown target {self.target!r}")
        if self.setting.startswith("m") and self.target != "all":
            raise ValidationError(
                "multi-output settings always forecast all three targets; "
                "leave target at 'all'"
            )
        if self.normalize_scope not in SCOPES:
            raise ValidationError(f"unknown normalize_scope {self.normalize_scope!r}")
        if self.report_space not in REPORT_SPACES:
            raise ValidationError(f"unknown report_space {self.report_space!r}")
        if self.tau < 1:
            raise ValidationError("tau must be >= 1")
        SplitSpec(self.train_end, self.total)  # range check

    # effective values under the exact-replication switch
    @property
    def effective_scope(self) -> str:
        return "whole_series" if self.paper_exact else self.normalize_scope

    @property
    def effective_use_bias(self) -> bool:
        return False if self.paper_exact else self.use_bias

    @property
    def effective_sigmoid_head(self) -> bool:
        return self.paper_exact


# key -> parser; every key of the flat config file maps to one config field
_PARSERS = {
    "data": _parse_optional(str),
    "synthetic_seed": _parse_optional(int),
    "synthetic_features": int,
    "synthetic_length": int,
    "synthetic_support": int,
    "synthetic_snr": float,
    "tau": int,
    "train_end": int,
    "total": int,
    "context_across_boundary": _parse_bool,
    "setting": str,
    "model": str,
    "target": str,
    "seed": int,
    "out": str,
    "normalize_scope": str,
    "paper_exact": _parse_bool,
    "plots": _parse_bool,
    "report_space": str,
    "lasso_lambda": _parse_optional(float),
    "lasso_threshold": float,
    "lasso_n_lambdas": int,
    "selection_csv": _parse_optional(str),
    "hidden": int,
    "use_bias": _parse_bool,
    "fnn_lr": float,
    "fnn_epochs": int,
    "rmsprop_lr": float,
    "rmsprop_rho": float,
    "rmsprop_eps": float,
    "rmsprop_updates": int,
    "svr_c": float,
    "svr_epsilon": float,
    "svr_gamma": _parse_gamma,
    "svr_tol": float,
    "svr_max_iter": int,
    "rf_trees": int,
    "rf_max_depth": int,
    "rf_min_split": int,
    "rf_features": _parse_optional(int),
}

assert set(_PARSERS) == {f.name for f in fields(ExperimentConfig)}


def parse_config_file(path) -> dict:
    """Flat ``key = value`` lines; '#' starts a comment; unknown keys fail."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, eq, value = line.partition("=")
            if not eq:
                raise ValidationError(f"{path}:{lineno}: expected key = value")
            key = key.strip()
            if key not in _PARSERS:
                raise ValidationError(f"{path}:{lineno}: unknown key {key!r}")
            try:
                values[key] = _PARSERS[key](value.strip())
            except (ValueError, ValidationError) as exc:
                raise ValidationError(f"{path}:{lineno}: {key}: {exc}") from None
    return values


def build_config(file_values: dict | None = None, **overrides) -> ExperimentConfig:
    """Merge defaults < config file < explicit overrides."""
    merged = dict(file_values or {})
    for key, value in overrides.items():
        if value is not None:
            if key not in _PARSERS:
                raise ValidationError(f"unknown config key {key!r}")
            merged[key] = value
    return ExperimentConfig(**merged)


def decision_flags(config: ExperimentConfig) -> dict:
    """Every interpretation the pipeline fixes beyond its inputs, in one place."""
    return {
        "normalization": {
            "formula": "(x - min) / (max - min), constant features -> 0",
            "fit_scope": config.effective_scope,
        },
        "windowing": {
            "anchor": "last input row; target is the following row",
            "train_membership": "target row strictly before train_end",
            "context_across_boundary": config.context_across_boundary,
        },
        "lasso": {
            "objective": "0.5 * SSE + lambda * L1, intercept unpenalized",
            "internal_standardization": True,
            "design": "y_{t+1} on x_t, candidates exclude the target's own column",
            "selection_rule": f"|standardized coef| >= {config.lasso_threshold!r}",
            "lambda_choice": "geometric grid, MSE on the final 20% of train "
            "rows, sparsest value within one SE of the minimum",
            "stage_scope": "training rows only",
        },
        "networks": {
            "init": "weights uniform(+-1/sqrt(fan_in)), biases zero",
            "hidden_units": config.hidden,
            "fnn_output": "sigmoid",
            "recurrent_head": "two tanh layers -> "
            + ("sigmoid" if config.effective_sigmoid_head else "identity"),
            "biases": config.effective_use_bias,
            "loss": "squared-error norm per window, unhalved",
        },
        "training": {
            "fnn": "SGD; epochs count full passes over the train windows",
            "recurrent": "RMSprop; updates count single-window steps",
            "shuffling": "seeded permutation, redrawn each pass",
        },
        "svr": {
            "gamma": config.svr_gamma,
            "offset_rule": "mean over free dual variables, else gap midpoint",
        },
        "random_forest": {
            "bootstrap": "n draws with replacement per tree",
            "split_features": "ceil(d/3) sampled per split",
            "tie_break": "lowest feature index, then lowest threshold",
        },
        "metrics": {
            "mape_guard": metrics.EPS_GUARD,
            "mape_zero_actuals": "skipped and counted",
            "gain_metric": "rmse",
            "report_space": config.report_space,
        },
        "paper_exact": config.paper_exact,
    }


@dataclass
class CellResult:
    name: str
    model: str
    setting: str
    targets: tuple[str, ...]
    status: str = "pending"
    error: str | None = None
    per_step_width: int = 0
    flattened_width: int = 0
    n_train: int = 0
    n_test: int = 0
    runs: list = field(default_factory=list)
    files: list = field(default_factory=list)


def _load_series(config: ExperimentConfig):
    if config.data is not None:
        schema = dataset.default_schema()
        return dataset.load_records(config.data, schema)
    seed = config.seed if config.synthetic_seed is None else config.synthetic_seed
    spec = synthetic.default_spec(
        seed=seed,
        n_features=config.synthetic_features,
        length=config.synthetic_length,
        support_size=config.synthetic_support,
        snr=config.synthetic_snr,
    )
    series, _ = synthetic.generate_series(spec)
    return series


def _cells_for(config: ExperimentConfig):
    models = metrics.MODELS if config.model == "all" else (config.model,)
    single = config.setting.startswith("s")
    cells = []
    for model in models:
        if single:
            keys = TARGET_KEYS if config.target == "all" else (config.target,)
            for key in keys:
                cells.append((model, (key,)))
        else:
            cells.append((model, TARGET_KEYS))
    return cells


def _feature_subset(config, selection, targets, schema):
    """Schema indices feeding the cell, already sorted ascending."""
    if config.setting in ("swol", "mwol"):
        return tuple(range(len(schema)))
    if config.setting == "swl":
        return selection.per_target[targets[0]].input_indices()
    return selection.union


def _train_cell(config, kind, sub_series, target_positions, split, rng_seed):
    """Fit one model and return normalized test predictions plus loss rows."""
    train, test = dataset.make_windows(
        sub_series, config.tau, target_positions, split
    )
    X_train, Y_train = dataset.stack_windows(train)
    X_test, Y_test = dataset.stack_windows(test)
    n_outputs = Y_train.shape[1]
    loss_rows: list[tuple[str, int, float]] = []

    if kind in ("svr", "rf"):
        flat_train = X_train.reshape(len(X_train), -1)
        flat_test = X_test.reshape(len(X_test), -1)
        if kind == "svr":
            preds = np.empty((len(X_test), n_outputs))
            for j in range(n_outputs):
                model = shallow.SVR(shallow.SVRConfig(
                    C=config.svr_c, epsilon=config.svr_epsilon,
                    gamma=config.svr_gamma, tol=config.svr_tol,
                    max_iter=config.svr_max_iter,
                ))
                model.fit(flat_train, Y_train[:, j])
                preds[:, j] = model.predict(flat_test)
                loss_rows.append(
                    (f"svr_dual_objective_{j}", model.n_iter_, model.dual_objective())
                )
        else:
            model = shallow.RandomForest(shallow.ForestConfig(
                n_trees=config.rf_trees, max_depth=config.rf_max_depth,
                min_split=config.rf_min_split, n_features=config.rf_features,
                seed=rng_seed,
            ))
            model.fit(flat_train, Y_train)
            preds = model.predict(flat_test)
    else:
        net_config = neural.ModelConfig(
            n_inputs=sub_series.n_features,
            window=config.tau,
            n_outputs=n_outputs,
            hidden=config.hidden,
            use_bias=config.effective_use_bias,
            sigmoid_head=config.effective_sigmoid_head,
        )
        model = neural.build_model(kind, net_config, seed=rng_seed)
        if kind == "fnn":
            result = optim.train_sgd(model, X_train, Y_train, optim.SGDConfig(
                learning_rate=config.fnn_lr, epochs=config.fnn_epochs, seed=rng_seed,
            ))
        else:
            result = optim.train_rmsprop(model, X_train, Y_train, optim.RMSPropConfig(
                learning_rate=config.rmsprop_lr, rho=config.rmsprop_rho,
                eps=config.rmsprop_eps, n_updates=config.rmsprop_updates,
                seed=rng_seed,
            ))
        loss_rows += [
            ("train_mse", int(u), float(v)) for u, v in result.history
        ]
        preds = model.predict_batch(X_test)

    anchors = [s.anchor for s in test]
    return preds, Y_test, anchors, len(train), len(test), loss_rows


def _write_cell_outputs(cell_dir, targets, indices, actual, predicted, loss_rows,
                        plots):
    import csv as _csv

    files = []
    pred_path = os.path.join(cell_dir, "predictions.csv")
    with open(pred_path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        header = ["index"]
        for key in targets:
            header += [f"actual_{key}", f"predicted_{key}"]
        writer.writerow(header)
        for r, idx in enumerate(indices):
            row = [idx]
            for j in range(len(targets)):
                row += [repr(float(actual[r, j])), repr(float(predicted[r, j]))]
            writer.writerow(row)
    files.append(pred_path)

    loss_path = os.path.join(cell_dir, "loss_history.csv")
    with open(loss_path, "w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["series", "step", "loss"])
        for label, step, value in loss_rows:
            writer.writerow([label, step, repr(value)])
    files.append(loss_path)

    if plots:
        for j, key in enumerate(targets):
            plot_path = os.path.join(cell_dir, f"{key}.svg")
            metrics.write_prediction_plot(
                actual[:, j], predicted[:, j], key, plot_path
            )
            files.append(plot_path)
    return files


def run_experiment(config: ExperimentConfig, selection=None):
    """Execute every requested cell; returns (report, manifest dict).

    ``selection`` overrides the Lasso stage with a prebuilt FeatureSelection
    (the selection_csv config key does the same from disk).
    """
    os.makedirs(config.out, exist_ok=True)
    probe = os.path.join(config.out, ".write-probe")
    with open(probe, "w", encoding="utf-8") as fh:
        fh.write("ok")
    os.remove(probe)

    series = _load_series(config)
    split = SplitSpec(config.train_end, config.total, config.context_across_boundary)
    if len(series) != config.total:
        raise ValidationError(
            f"series has {len(series)} rows but config.total is {config.total}"
        )
    normalizer = dataset.fit_normalizer(series, config.effective_scope, split)
    normalized = dataset.apply_normalizer(normalizer, series)

    needs_selection = config.setting in ("swl", "mwl")
    if needs_selection and selection is None:
        if config.selection_csv is not None:
            selection = lasso.read_selection_csv(
                config.selection_csv, series.schema, config.lasso_threshold
            )
        else:
            selection = lasso.run_feature_selection(
                series, split,
                lam=config.lasso_lambda,
                threshold=config.lasso_threshold,
                n_lambdas=config.lasso_n_lambdas,
            )
    if needs_selection:
        selection_path = os.path.join(config.out, "selection.csv")
        lasso.write_selection_csv(selection, series.schema, selection_path)

    cells: list[CellResult] = []
    all_runs: list[metrics.RunMetrics] = []
    for kind, targets in _cells_for(config):
        label = targets[0] if len(targets) == 1 else "all"
        cell = CellResult(
            name=f"{config.setting}_{kind}_{label}",
            model=kind, setting=config.setting, targets=targets,
        )
        cells.append(cell)
        try:
            keep = _feature_subset(config, selection, targets, series.schema)
            sub = dataset.restrict_features(normalized, keep)
            positions = tuple(
                sub.schema.index_of(TARGET_NAMES[key]) for key in targets
            )
            cell.per_step_width = sub.n_features
            cell.flattened_width = sub.n_features * config.tau
            log.info(
                "cell %s: per-step width %d, flattened width %d",
                cell.name, cell.per_step_width, cell.flattened_width,
            )

            preds, actual_norm, anchors, n_train, n_test, loss_rows = _train_cell(
                config, kind, sub, positions, split, config.seed
            )
            cell.n_train, cell.n_test = n_train, n_test

            orig_cols = np.array(
                [series.schema.index_of(TARGET_NAMES[key]) for key in targets]
            )
            actual_phys = dataset.inverse_transform(normalizer, actual_norm, orig_cols)
            pred_phys = dataset.inverse_transform(normalizer, preds, orig_cols)

            if config.report_space == "physical":
                rep_actual, rep_pred = actual_phys, pred_phys
            else:
                rep_actual, rep_pred = actual_norm, preds
            for j, key in enumerate(targets):
                mape_value = metrics.mape(rep_pred[:, j], rep_actual[:, j])
                run = metrics.RunMetrics(
                    target=key, model=kind, setting=config.setting,
                    rmse=metrics.rmse(rep_pred[:, j], rep_actual[:, j]),
                    mape_pct=mape_value.value_pct,
                    n_eval=mape_value.n_eval,
                    n_skipped=mape_value.n_skipped,
                )
                cell.runs.append(run)
                all_runs.append(run)

            cell_dir = os.path.join(config.out, "cells", cell.name)
            os.makedirs(cell_dir, exist_ok=True)
            indices = [a + 1 for a in anchors]  # series row of each forecast
            cell.files = _write_cell_outputs(
                cell_dir, targets, indices, actual_phys, pred_phys,
                loss_rows, config.plots,
            )
            cell.status = "ok"
        except ForecastError as exc:
            cell.status = "failed"
            cell.error = f"{type(exc).__name__}: {exc}"
            log.error("cell %s failed: %s", cell.name, cell.error)

    report = metrics.build_report(all_runs)
    results_path = os.path.join(config.out, "results.csv")
    metrics.write_results_csv(report, results_path)

    manifest = {
        "config": asdict(config),
        "seed": config.seed,
        "decisions": decision_flags(config),
        "cells": [
            {
                "name": c.name, "model": c.model, "setting": c.setting,
                "targets": list(c.targets), "status": c.status, "error": c.error,
                "per_step_width": c.per_step_width,
                "flattened_width": c.flattened_width,
                "n_train": c.n_train, "n_test": c.n_test,
                "files": [os.path.relpath(f, config.out) for f in c.files],
            }
            for c in cells
        ],
    }
    manifest_path = os.path.join(config.out, "manifest.json")
    with open(manifest_path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report, manifest
