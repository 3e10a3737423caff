"""Forecast accuracy metrics and the tabular results report.

MAPE skips actuals with magnitude at most ``EPS_GUARD`` (the formula is
undefined at zero) and reports how many points were evaluated versus skipped.
Performance gain is the relative improvement (baseline - improved) / baseline
expressed as a percentage; the report computes it on RMSE between the
with/without-selection arms of the same output mode.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataset import TARGET_KEYS
from .errors import DimensionError, UndefinedMetricError

EPS_GUARD = 1e-8

#: single/multi output crossed with (without vs with) feature selection
SETTINGS = ("swol", "swl", "mwol", "mwl")
MODELS = ("svr", "rf", "fnn", "rnn", "lstm", "gru")

RESULT_COLUMNS = (
    "target", "model", "setting", "rmse", "mape_pct",
    "n_eval", "n_skipped", "gain_single_pct", "gain_multi_pct",
)


def _paired(pred, actual):
    pred = np.asarray(pred, dtype=np.float64).ravel()
    actual = np.asarray(actual, dtype=np.float64).ravel()
    if pred.shape != actual.shape or pred.size == 0:
        raise DimensionError(
            f"need equal nonzero lengths, got {pred.shape} and {actual.shape}"
        )
    return pred, actual


def rmse(pred, actual) -> float:
    pred, actual = _paired(pred, actual)
    d = pred - actual
    return float(np.sqrt((d @ d) / d.size))


@dataclass(frozen=True)
class MAPEValue:
    value_pct: float
    n_eval: int
    n_skipped: int


def mape(pred, actual, eps_guard: float = EPS_GUARD) -> MAPEValue:
    """100/n * sum |pred - actual| / |actual| over points with |actual| > eps_guard."""
    pred, actual = _paired(pred, actual)
    keep = np.abs(actual) > eps_guard
    n_eval = int(keep.sum())
    if n_eval == 0:
        raise UndefinedMetricError("every actual value is within the zero guard")
    ratio = np.abs(pred[keep] - actual[keep]) / np.abs(actual[keep])
    return MAPEValue(
        value_pct=float(100.0 * ratio.mean()),
        n_eval=n_eval,
        n_skipped=int(keep.size - n_eval),
    )


def perf_gain(baseline: float, improved: float) -> float:
    if baseline == 0:
        raise UndefinedMetricError("gain is undefined for a zero baseline")
    return 100.0 * (baseline - improved) / baseline


@dataclass(frozen=True)
class RunMetrics:
    """Accuracy of one (target, model, setting) cell, in physical units."""

    target: str
    model: str
    setting: str
    rmse: float
    mape_pct: float
    n_eval: int
    n_skipped: int


@dataclass(frozen=True)
class ReportRow:
    run: RunMetrics
    gain_single_pct: float | None
    gain_multi_pct: float | None


@dataclass(frozen=True)
class EvaluationReport:
    rows: tuple[ReportRow, ...]


def build_report(runs) -> EvaluationReport:
    """Attach RMSE gains across settings and order rows canonically.

    For each (target, model), gain_single_pct compares swol -> swl and
    gain_multi_pct compares mwol -> mwl; a pair with a missing arm leaves its
    column blank.  Every row of the group carries the group's gains.
    """
    def order(run):
        t = TARGET_KEYS.index(run.target) if run.target in TARGET_KEYS else len(TARGET_KEYS)
        m = MODELS.index(run.model) if run.model in MODELS else len(MODELS)
        s = SETTINGS.index(run.setting) if run.setting in SETTINGS else len(SETTINGS)
        return (t, m, s)

    groups: dict[tuple[str, str], dict[str, float]] = {}
    for run in runs:
        groups.setdefault((run.target, run.model), {})[run.setting] = run.rmse

    rows = []
    for run in sorted(runs, key=order):
        here = groups[(run.target, run.model)]
        single = multi = None
        if "swol" in here and "swl" in here and here["swol"] != 0:
            single = perf_gain(here["swol"], here["swl"])
        if "mwol" in here and "mwl" in here and here["mwol"] != 0:
            multi = perf_gain(here["mwol"], here["mwl"])
        rows.append(ReportRow(run=run, gain_single_pct=single, gain_multi_pct=multi))
    return EvaluationReport(rows=tuple(rows))


def write_results_csv(report: EvaluationReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_COLUMNS)
        for row in report.rows:
            r = row.run
            writer.writerow([
                r.target, r.model, r.setting,
                repr(r.rmse), repr(r.mape_pct), r.n_eval, r.n_skipped,
                "" if row.gain_single_pct is None else repr(row.gain_single_pct),
                "" if row.gain_multi_pct is None else repr(row.gain_multi_pct),
            ])


def read_results_csv(path) -> EvaluationReport:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != RESULT_COLUMNS:
            raise DimensionError(f"unexpected results header {header}")
        for rec in reader:
            if not rec:
                continue
            run = RunMetrics(
                target=rec[0], model=rec[1], setting=rec[2],
                rmse=float(rec[3]), mape_pct=float(rec[4]),
                n_eval=int(rec[5]), n_skipped=int(rec[6]),
            )
            rows.append(ReportRow(
                run=run,
                gain_single_pct=float(rec[7]) if rec[7] else None,
                gain_multi_pct=float(rec[8]) if rec[8] else None,
            ))
    return EvaluationReport(rows=tuple(rows))


def write_prediction_plot(actual, predicted, title: str, path) -> None:
    """Actual-vs-predicted line plot over the test index, saved as SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    actual = np.asarray(actual, dtype=np.float64).ravel()
    predicted = np.asarray(predicted, dtype=np.float64).ravel()
    fig, ax = plt.subplots(figsize=(8, 3))
    ax.plot(actual, label="actual", linewidth=1.0)
    ax.plot(predicted, label="predicted", linewidth=1.0)
    ax.set_xlabel("test step")
    ax.set_title(title)
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
