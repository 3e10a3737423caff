"""L1-penalized linear regression and coefficient-magnitude feature selection.

The solver minimizes

    (1/2) * sum_n (y_n - <x_n, beta> - beta0)^2 + lam * ||beta||_1

by cyclic coordinate descent over internally standardized columns.  The
intercept is never penalized.  Selection keeps features whose standardized
coefficient magnitude is at least the threshold; per-target selections are
merged into a multi-output union that always contains the targets themselves.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .dataset import FeatureSchema, SeriesTable, SplitSpec, TARGET_KEYS, TARGET_NAMES
from .errors import NumericError, ValidationError

DEFAULT_THRESHOLD = 1e-3


@dataclass
class LassoModel:
    """Fitted coefficients on both the internal and the original feature scale."""

    beta: np.ndarray
    beta0: float
    lam: float
    mean: np.ndarray
    scale: np.ndarray
    beta_original: np.ndarray
    converged: bool
    n_sweeps: int

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.beta_original + self.beta0


def soft_threshold(z: float, lam: float) -> float:
    """sign(z) * max(|z| - lam, 0)."""
    if z > lam:
        return z - lam
    if z < -lam:
        return z + lam
    return 0.0


def _prepare(X, y, standardize):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValidationError(f"bad design shapes {X.shape} / {y.shape}")
    if X.shape[0] < 2:
        raise ValidationError("need at least two samples")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise NumericError("design matrix or targets contain non-finite values")
    mean = X.mean(axis=0)
    if standardize:
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
    else:
        scale = np.ones(X.shape[1])
    Xs = (X - mean) / scale
    ybar = float(y.mean())
    return Xs, y - ybar, ybar, mean, scale


def lambda_max(X, y, standardize: bool = True) -> float:
    """Smallest lam at which every coefficient is zero.

    Each column's correlation is evaluated with the same dot-product call the
    solver uses, so at lam = lambda_max the very first coordinate sweep
    soft-thresholds every coefficient to exactly 0.0.
    """
    Xs, yc, _, _, _ = _prepare(X, y, standardize)
    return max(abs(float(Xs[:, j] @ yc)) for j in range(Xs.shape[1]))


def fit_lasso(
    X,
    y,
    lam: float,
    tol: float = 1e-10,
    max_iter: int = 10000,
    standardize: bool = True,
    warm_start: np.ndarray | None = None,
) -> LassoModel:
    """Cyclic coordinate descent until the largest per-sweep coefficient change
    drops below ``tol`` or ``max_iter`` sweeps elapse (then flagged non-converged)."""
    if lam < 0:
        raise ValidationError(f"lam must be >= 0, got {lam}")
    Xs, yc, ybar, mean, scale = _prepare(X, y, standardize)
    n, p = Xs.shape
    col_sq = np.einsum("ij,ij->j", Xs, Xs)

    beta = np.zeros(p) if warm_start is None else warm_start.astype(np.float64).copy()
    r = yc - Xs @ beta
    converged = False
    sweeps = 0
    for sweeps in range(1, max_iter + 1):
        max_delta = 0.0
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            old = beta[j]
            if old != 0.0:
                r += Xs[:, j] * old
            z = Xs[:, j] @ r
            new = soft_threshold(z, lam) / col_sq[j]
            if new != 0.0:
                r -= Xs[:, j] * new
            beta[j] = new
            max_delta = max(max_delta, abs(new - old))
        if max_delta < tol:
            converged = True
            break

    beta_original = beta / scale
    beta0 = ybar - float(mean @ beta_original)
    return LassoModel(
        beta=beta,
        beta0=beta0,
        lam=lam,
        mean=mean,
        scale=scale,
        beta_original=beta_original,
        converged=converged,
        n_sweeps=sweeps,
    )


def objective_value(model: LassoModel, X, y) -> float:
    """Penalized least-squares value of ``model`` in standardized coordinates:
    0.5 * ||yc - Xs @ beta||^2 + lam * ||beta||_1."""
    Xs = (np.asarray(X, dtype=np.float64) - model.mean) / model.scale
    yc = np.asarray(y, dtype=np.float64) - np.asarray(y, dtype=np.float64).mean()
    r = yc - Xs @ model.beta
    return 0.5 * float(r @ r) + model.lam * float(np.abs(model.beta).sum())


def kkt_max_violation(model: LassoModel, X, y) -> float:
    """Largest subgradient-optimality violation in standardized coordinates."""
    Xs = (np.asarray(X, dtype=np.float64) - model.mean) / model.scale
    yc = np.asarray(y, dtype=np.float64) - y.mean()
    r = yc - Xs @ model.beta
    corr = Xs.T @ r
    worst = 0.0
    for j, b in enumerate(model.beta):
        if b != 0.0:
            worst = max(worst, abs(corr[j] - model.lam * np.sign(b)))
        else:
            worst = max(worst, max(abs(corr[j]) - model.lam, 0.0))
    return worst


def lambda_grid(lam_max: float, n_lambdas: int = 50, eps: float = 1e-3) -> np.ndarray:
    """Geometric grid from lam_max down to eps * lam_max."""
    if lam_max <= 0:
        return np.zeros(1)
    return np.geomspace(lam_max, eps * lam_max, n_lambdas)


def lasso_path(X, y, lambdas, **kwargs) -> list[LassoModel]:
    """Warm-started fits along a descending lambda grid."""
    models = []
    warm = None
    for lam in lambdas:
        model = fit_lasso(X, y, lam, warm_start=warm, **kwargs)
        warm = model.beta
        models.append(model)
    return models


def choose_lambda(
    X,
    y,
    n_lambdas: int = 50,
    eps: float = 1e-3,
    val_fraction: float = 0.2,
    **kwargs,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Pick lam by one-step MSE on the final ``val_fraction`` of rows.

    The grid runs geometrically from lam_max to eps * lam_max; fitting uses
    only the leading rows so validation stays time-ordered.  Among values
    whose validation MSE is within one standard error of the minimum, the
    largest lam wins (the usual sparsity-leaning tie-break: the MSE curve is
    flat near its minimum, and the flat region's sparse end is the one that
    generalizes the support).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    n_val = max(1, int(round(n * val_fraction)))
    if n - n_val < 2:
        raise ValidationError("not enough rows to hold out a validation tail")
    X_fit, y_fit = X[: n - n_val], y[: n - n_val]
    X_val, y_val = X[n - n_val :], y[n - n_val :]

    grid = lambda_grid(lambda_max(X_fit, y_fit), n_lambdas, eps)
    errors = np.empty(len(grid))
    sq_residuals = []
    for i, model in enumerate(lasso_path(X_fit, y_fit, grid, **kwargs)):
        sq = (y_val - model.predict(X_val)) ** 2
        sq_residuals.append(sq)
        errors[i] = float(sq.mean())
    best = int(np.argmin(errors))
    if n_val > 1:
        se = float(sq_residuals[best].std(ddof=1)) / np.sqrt(n_val)
    else:
        se = 0.0
    cutoff = errors[best] + se
    chosen = next(i for i in range(len(grid)) if errors[i] <= cutoff)
    return float(grid[chosen]), grid, errors


@dataclass(frozen=True)
class TargetSelection:
    """Features retained for one target, as indices into the full schema."""

    target_key: str
    target_index: int
    retained: tuple[int, ...]
    coefficients: tuple[float, ...]
    standardized: tuple[float, ...]

    def input_indices(self) -> tuple[int, ...]:
        """The target's own column plus its retained features, in schema order."""
        return tuple(sorted({self.target_index, *self.retained}))


@dataclass(frozen=True)
class FeatureSelection:
    """Per-target retained sets plus their multi-output union."""

    per_target: dict[str, TargetSelection]
    threshold: float
    union: tuple[int, ...]


def select_features(
    model: LassoModel,
    threshold: float,
    schema: FeatureSchema,
    columns: tuple[int, ...] | None = None,
) -> tuple[tuple[int, ...], list[tuple[str, float]]]:
    """Indices with |standardized coefficient| >= threshold, plus a named report.

    ``columns`` maps the model's design columns onto schema indices (identity
    by default).  The report pairs feature names with original-scale
    coefficients, sorted by descending magnitude.
    """
    if columns is None:
        columns = tuple(range(len(model.beta)))
    if len(columns) != len(model.beta):
        raise ValidationError("columns must match the design width")
    kept = [k for k, b in enumerate(model.beta) if abs(b) >= threshold]
    indices = tuple(columns[k] for k in kept)
    report = sorted(
        ((schema.names[columns[k]], float(model.beta_original[k])) for k in kept),
        key=lambda item: abs(item[1]),
        reverse=True,
    )
    return indices, report


def union_features(
    selections: dict[str, TargetSelection], target_indices: tuple[int, ...]
) -> tuple[int, ...]:
    """Targets plus every retained feature, deduplicated, in schema order."""
    merged = set(target_indices)
    for sel in selections.values():
        merged.update(sel.retained)
    return tuple(sorted(merged))


def run_feature_selection(
    series: SeriesTable,
    split: SplitSpec,
    lam: float | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    n_lambdas: int = 50,
) -> FeatureSelection:
    """Fit one next-step Lasso per target on the training rows and threshold it.

    The design regresses y_{t+1} on the current row x_t (all features except
    the target's own column); the retained set therefore never contains the
    target, which is added back by ``TargetSelection.input_indices``.
    """
    schema = series.schema
    keys = schema.target_keys()
    if len(keys) != len(TARGET_KEYS):
        raise ValidationError("feature selection needs all three target columns")
    rows = series.values[: split.train_end]
    per_target: dict[str, TargetSelection] = {}
    for key in keys:
        t_idx = schema.index_of(TARGET_NAMES[key])
        candidates = tuple(i for i in range(len(schema)) if i != t_idx)
        X = rows[:-1][:, candidates]
        y = rows[1:, t_idx]
        lam_t = lam
        if lam_t is None:
            lam_t, _, _ = choose_lambda(X, y, n_lambdas=n_lambdas)
        model = fit_lasso(X, y, lam_t)
        retained, report = select_features(model, threshold, schema, candidates)
        by_index = dict(
            zip(retained, (model.beta_original[candidates.index(i)] for i in retained))
        )
        std_by_index = dict(
            zip(retained, (model.beta[candidates.index(i)] for i in retained))
        )
        order = tuple(sorted(retained))
        per_target[key] = TargetSelection(
            target_key=key,
            target_index=t_idx,
            retained=order,
            coefficients=tuple(float(by_index[i]) for i in order),
            standardized=tuple(float(std_by_index[i]) for i in order),
        )
    union = union_features(per_target, schema.target_indices)
    return FeatureSelection(per_target=per_target, threshold=threshold, union=union)


def write_selection_csv(selection: FeatureSelection, schema: FeatureSchema, path):
    """Emit the per-target coefficient report: one row per retained feature,
    one coefficient column per target, blank where a feature was not kept."""
    columns = {key: dict(zip(sel.retained, sel.coefficients))
               for key, sel in selection.per_target.items()}
    rows = sorted({i for c in columns.values() for i in c})
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature"] + [f"{key}_coef" for key in TARGET_KEYS])
        for i in rows:
            record = [schema.names[i]]
            for key in TARGET_KEYS:
                coef = columns.get(key, {}).get(i)
                record.append("" if coef is None else repr(float(coef)))
            writer.writerow(record)


def read_selection_csv(path, schema: FeatureSchema,
                       threshold: float = DEFAULT_THRESHOLD) -> FeatureSelection:
    """Rebuild a FeatureSelection from the coefficient-report layout.

    Standardized magnitudes are not stored in the report, so the original
    coefficients stand in for them; retained sets are taken as written.
    """
    per_column: dict[str, dict[int, float]] = {key: {} for key in TARGET_KEYS}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        expected = ["feature"] + [f"{key}_coef" for key in TARGET_KEYS]
        if header != expected:
            raise ValidationError(f"unexpected selection header {header}")
        for row in reader:
            if not row:
                continue
            idx = schema.index_of(row[0])
            for key, cell in zip(TARGET_KEYS, row[1:]):
                if cell.strip():
                    per_column[key][idx] = float(cell)
    per_target = {}
    for key in TARGET_KEYS:
        t_idx = schema.index_of(TARGET_NAMES[key])
        order = tuple(sorted(per_column[key]))
        coefs = tuple(per_column[key][i] for i in order)
        per_target[key] = TargetSelection(
            target_key=key,
            target_index=t_idx,
            retained=order,
            coefficients=coefs,
            standardized=coefs,
        )
    union = union_features(per_target, schema.target_indices)
    return FeatureSelection(per_target=per_target, threshold=threshold, union=union)
