"""Loading, validation, normalization, windowing and splitting of TBM sensor series.

The canonical input is a CSV file with one header row naming the 44 operational
features and one row per time step.  All downstream vectors use the schema's
column order.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionError,
    EmptyInputError,
    InsufficientDataError,
    ParseError,
    SchemaError,
    ValidationError,
)

log = logging.getLogger(__name__)

# Canonical feature names of the operational record, in column order.
TBM_FEATURES = (
    "Temperature of oil tank (°C)",
    "Temperature of gear oil (°C)",
    "Rotation speed of cutter(r/min)",
    "Cutter power (kw)",
    "Propelling pressure (bar)",
    "Propelling pressure of A group (bar)",
    "Propelling pressure of B group (bar)",
    "Propelling pressure of C group (bar)",
    "Propelling pressure of D group (bar)",
    "Pressure of equipment bridge (bar)",
    "Pressure of articulation system (bar)",
    "Pressure of Shield tail seal at top right front (bar)",
    "Pressure of Shield tail seal at right front (bar)",
    "Pressure of Shield tail seal at bottom left front (bar)",
    "Pressure of Shield tail seal at top right back (bar)",
    "Pressure of Shield tail seal at right back (bar)",
    "Pressure of Shield tail seal at bottom left back (bar)",
    "Pressure of Shield tail seal at left front (bar)",
    "Pressure of Shield tail seal at top left front (bar)",
    "Pressure of Shield tail seal at left back (bar)",
    "Pressure of Shield tail seal at top left back (bar)",
    "Pressure of Shield tail seal at bottom right back (bar)",
    "Rolling angle (°)",
    "Pressure of screw pump at back (bar)",
    "Pressure of chamber at top left (bar)",
    "Pressure of chamber at bottom left (bar)",
    "Pressure of chamber at bottom right (bar)",
    "Bentonite pressure (bar)",
    "Temperature of screw conveyor (°C)",
    "Pitch angle (°)",
    "Thrust of cutterhead (kN)",
    "Advance rate (mm/min)",
    "Torque of cutterhead (kNm)",
    "Displacement of A group of thrust cylinders (mm)",
    "Displacement of B group of thrust cylinders (mm)",
    "Displacement of C group of thrust cylinders (mm)",
    "Displacement of D group of thrust cylinders (mm)",
    "Displacement of articulated system at top right (mm)",
    "Displacement of articulated system at bottom left (mm)",
    "Displacement of articulated system at top left (mm)",
    "Displacement of articulated system at bottom right (mm)",
    "Bentonite pressure of shield shell (bar)",
    "Pressure of screw conveyor at front (bar)",
    "Pressure of screw pump (bar)",
)

# Forecast targets, in report order.
TARGET_KEYS = ("torque", "advance_rate", "thrust")
TARGET_NAMES = {
    "torque": "Torque of cutterhead (kNm)",
    "advance_rate": "Advance rate (mm/min)",
    "thrust": "Thrust of cutterhead (kN)",
}


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature names plus the positions of the three load parameters.

    ``target_indices`` follows the (torque, advance_rate, thrust) order of
    ``TARGET_KEYS``; a sub-schema may contain fewer than three targets.
    """

    names: tuple[str, ...]
    target_indices: tuple[int, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise SchemaError("feature names must be distinct")
        if len(set(self.target_indices)) != len(self.target_indices):
            raise SchemaError("target indices must be distinct")
        for idx in self.target_indices:
            if not 0 <= idx < len(self.names):
                raise SchemaError(f"target index {idx} out of range")

    def __len__(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown feature {name!r}") from None

    def target_keys(self) -> tuple[str, ...]:
        """Short keys of the targets present, in canonical order."""
        return tuple(
            key for key in TARGET_KEYS if TARGET_NAMES[key] in self.names
        )

    def subset(self, keep: tuple[int, ...]) -> "FeatureSchema":
        """Sub-schema with columns reduced and reordered to ``keep``."""
        names = tuple(self.names[i] for i in keep)
        targets = tuple(
            names.index(TARGET_NAMES[key])
            for key in TARGET_KEYS
            if TARGET_NAMES[key] in names
        )
        return FeatureSchema(names=names, target_indices=targets)


def default_schema() -> FeatureSchema:
    """The canonical 44-feature schema with torque/advance-rate/thrust targets."""
    targets = tuple(TBM_FEATURES.index(TARGET_NAMES[key]) for key in TARGET_KEYS)
    return FeatureSchema(names=TBM_FEATURES, target_indices=targets)


@dataclass(frozen=True)
class SeriesTable:
    """A time-ordered, gap-free block of sensor rows in schema column order."""

    values: np.ndarray
    schema: FeatureSchema
    timestamps: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DimensionError(f"series must be 2-D, got {values.ndim}-D")
        if values.shape[1] != len(self.schema):
            raise DimensionError(
                f"series has {values.shape[1]} columns, schema has {len(self.schema)}"
            )
        if not np.isfinite(values).all():
            raise ParseError("series contains non-finite entries")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.schema.index_of(name)]


@dataclass(frozen=True)
class SplitSpec:
    """Contiguous train/test split: rows [0, train_end) train, the rest test."""

    train_end: int = 2500
    total: int = 3000
    context_across_boundary: bool = True

    def __post_init__(self):
        if not 0 < self.train_end < self.total:
            raise ValidationError(
                f"need 0 < train_end < total, got {self.train_end}/{self.total}"
            )


@dataclass(frozen=True)
class WindowedSample:
    """One training/prediction unit: tau consecutive rows and the next-step target.

    ``anchor`` is the 0-based series index of the last input row; the target is
    series row ``anchor + 1`` restricted to the target columns.  ``target_cols``
    are the positions of those columns inside ``inputs``.
    """

    inputs: np.ndarray
    target: np.ndarray
    anchor: int
    target_cols: tuple[int, ...]


@dataclass(frozen=True)
class Normalizer:
    """Per-feature shift/scale fitted on a declared scope of the series.

    Forward maps x to (x - min) / range with range = max - min, the largest
    pairwise absolute difference; constant features (range 0) map to 0.
    """

    mins: np.ndarray
    ranges: np.ndarray
    fit_scope: str
    feature_names: tuple[str, ...] = field(repr=False, default=())


def load_records(path, schema: FeatureSchema) -> SeriesTable:
    """Read a CSV whose header names a superset of the schema features.

    Columns are reordered to schema order; every cell must parse as a finite
    real number.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyInputError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        positions = []
        for name in schema.names:
            if name not in header:
                raise SchemaError(f"{path}: missing schema column {name!r}")
            positions.append(header.index(name))

        rows = []
        for r, row in enumerate(reader, start=2):
            if not row:
                continue
            out = np.empty(len(positions))
            for c, pos in enumerate(positions):
                cell = row[pos] if pos < len(row) else ""
                try:
                    val = float(cell)
                except ValueError:
                    raise ParseError(
                        f"{path}: row {r}, column {schema.names[c]!r}: "
                        f"cannot parse {cell!r}"
                    ) from None
                if not math.isfinite(val):
                    raise ParseError(
                        f"{path}: row {r}, column {schema.names[c]!r}: "
                        f"non-finite value {cell!r}"
                    )
                out[c] = val
            rows.append(out)

    if not rows:
        raise EmptyInputError(f"{path}: no data rows")
    values = np.vstack(rows)
    log.info("loaded %d rows x %d features from %s", len(rows), len(schema), path)
    return SeriesTable(values=values, schema=schema)


def write_series_csv(series: SeriesTable, path) -> None:
    """Emit a series in the standard input CSV layout."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(series.schema.names)
        for row in series.values:
            writer.writerow([repr(float(v)) for v in row])


def fit_normalizer(
    series: SeriesTable,
    scope: str = "train_only",
    split: SplitSpec | None = None,
) -> Normalizer:
    """Compute per-feature min and range over the scope rows.

    ``scope`` is "train_only" (rows before split.train_end) or "whole_series".
    """
    if len(series) == 0:
        raise ValidationError("cannot fit a normalizer on an empty series")
    if scope == "train_only":
        if split is None:
            raise ValidationError("train_only scope requires a split")
        rows = series.values[: split.train_end]
    elif scope == "whole_series":
        rows = series.values
    else:
        raise ValidationError(f"unknown fit scope {scope!r}")
    mins = rows.min(axis=0)
    ranges = rows.max(axis=0) - mins
    return Normalizer(
        mins=mins, ranges=ranges, fit_scope=scope, feature_names=series.schema.names
    )


def apply_normalizer(
    normalizer: Normalizer, series: SeriesTable, inverse: bool = False
) -> SeriesTable:
    """Map a series through the fitted normalizer (or its inverse)."""
    if normalizer.feature_names != series.schema.names:
        raise DimensionError("series schema differs from the one used at fit time")
    cols = np.arange(series.n_features)
    if inverse:
        values = inverse_transform(normalizer, series.values, cols)
    else:
        values = transform(normalizer, series.values, cols)
    return SeriesTable(values=values, schema=series.schema)


def transform(normalizer: Normalizer, values: np.ndarray, cols) -> np.ndarray:
    """Forward-normalize columns ``cols`` of a raw value block."""
    cols = np.asarray(cols)
    rng = normalizer.ranges[cols]
    safe = np.where(rng > 0, rng, 1.0)
    out = (values - normalizer.mins[cols]) / safe
    return np.where(rng > 0, out, 0.0)


def inverse_transform(normalizer: Normalizer, values: np.ndarray, cols) -> np.ndarray:
    """Map normalized values for columns ``cols`` back to physical units."""
    cols = np.asarray(cols)
    return values * normalizer.ranges[cols] + normalizer.mins[cols]


def restrict_features(series: SeriesTable, keep) -> SeriesTable:
    """Reduce and reorder columns to ``keep``; row count unchanged."""
    keep = tuple(int(i) for i in keep)
    if not keep:
        raise IndexError("keep set is empty")
    for i in keep:
        if not 0 <= i < series.n_features:
            raise IndexError(f"feature index {i} out of range")
    return SeriesTable(
        values=series.values[:, keep],
        schema=series.schema.subset(keep),
        timestamps=series.timestamps,
    )


def stack_windows(samples: list[WindowedSample]) -> tuple[np.ndarray, np.ndarray]:
    """Samples as dense blocks: inputs (N, tau, I) and targets (N, J)."""
    if not samples:
        raise InsufficientDataError("no windows to stack")
    inputs = np.stack([s.inputs for s in samples])
    targets = np.stack([s.target for s in samples])
    return inputs, targets


def make_windows(
    series: SeriesTable,
    tau: int,
    target_indices: tuple[int, ...] | None = None,
    split: SplitSpec | None = None,
) -> tuple[list[WindowedSample], list[WindowedSample]]:
    """Cut the series into (T - tau) next-step windows and split them.

    A window anchored at row t holds input rows t-tau+1..t and targets row
    t+1.  Train windows are those whose target row falls inside the training
    region; with context across the boundary, early test windows may draw
    input rows from the train tail.
    """
    if tau < 1:
        raise ValidationError(f"window width must be >= 1, got {tau}")
    T = len(series)
    if T <= tau:
        raise InsufficientDataError(
            f"series length {T} supports no windows at tau={tau}"
        )
    if target_indices is None:
        target_indices = series.schema.target_indices
    target_cols = tuple(int(i) for i in target_indices)
    if split is None:
        split = SplitSpec(train_end=T - 1, total=T)
    if split.total != T:
        raise ValidationError(
            f"split describes {split.total} rows but series has {T}"
        )

    train: list[WindowedSample] = []
    test: list[WindowedSample] = []
    for anchor in range(tau - 1, T - 1):
        target_row = anchor + 1
        sample = WindowedSample(
            inputs=series.values[anchor - tau + 1 : anchor + 1],
            target=series.values[target_row, target_cols],
            anchor=anchor,
            target_cols=target_cols,
        )
        if target_row < split.train_end:
            train.append(sample)
        elif split.context_across_boundary or anchor - tau + 1 >= split.train_end:
            test.append(sample)
    return train, test
