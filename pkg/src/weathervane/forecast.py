"""Leakage-safe preprocessing, baseline forecasters, metrics, and the model
byte codec.

The forecasters are deliberately simple: a last-value carry-forward, a
seasonal carry-forward, a ridge-regularized autoregression, and a nearest
centroid classifier. Training statistics (means, stds, label maps) are fitted
on training rows only and applied without re-estimation, and the train/test
split preserves time order, so no future observation can inform the fit.

Models serialize to a canonical byte format (magic ``WFM1``): equal models
produce identical bytes, which is what makes content-addressed storage of
models meaningful.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _wire
from .ledger import SCORE_SCALE_BP
from .errors import (
    AllMissingColumn,
    ArityMismatch,
    CsvSchemaError,
    EmptyInput,
    EmptyTrainingSet,
    InsufficientContext,
    InsufficientHistory,
    LengthMismatch,
    MalformedBytes,
    MapeUndefined,
    MissingMetric,
    SingularSystem,
    TooFewRows,
    UnsupportedVersion,
)

NUMERIC_COLUMNS = ("Temperature", "Humidity", "WindSpeed", "Visibility", "Pressure")
CSV_HEADER = ("Timestamp",) + NUMERIC_COLUMNS + ("Summary",)
UNKNOWN_LABEL = "unknown"

MAPE_ZERO_GUARD = 1e-8
AR_RIDGE_LAMBDA = 1e-6

MODEL_MAGIC = b"WFM"
MODEL_VERSION = b"1"

FORECASTER_KINDS = ("naive_last", "seasonal_naive", "ar", "nearest_centroid")
_FORECASTER_TAGS = {kind: i for i, kind in enumerate(FORECASTER_KINDS)}


@dataclass(eq=False)
class Dataset:
    """Hourly weather observations: a strictly increasing time axis, numeric
    feature columns (NaN marks a missing value), and string-labelled
    categorical columns (None marks a missing label)."""

    timestamps: np.ndarray
    numeric: np.ndarray
    numeric_columns: tuple[str, ...] = NUMERIC_COLUMNS
    categorical: dict[str, np.ndarray] = field(default_factory=dict)
    target: str = "Temperature"

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps)
        self.numeric = np.asarray(self.numeric, dtype=np.float64)
        n = len(self.timestamps)
        if self.numeric.ndim != 2 or self.numeric.shape != (n, len(self.numeric_columns)):
            raise ValueError("numeric matrix shape must be (rows, numeric columns)")
        if n > 1 and not np.all(self.timestamps[1:] > self.timestamps[:-1]):
            raise ValueError("timestamps must be strictly increasing")
        for name, col in self.categorical.items():
            if len(col) != n:
                raise ValueError(f"categorical column {name!r} has wrong length")
        if self.target not in self.numeric_columns:
            raise ValueError(f"target {self.target!r} is not a numeric column")

    @property
    def n_rows(self) -> int:
        return len(self.timestamps)

    def target_values(self) -> np.ndarray:
        return self.numeric[:, self.numeric_columns.index(self.target)]

    def slice(self, start: int, stop: int) -> "Dataset":
        """Row range as an independent copy (no shared buffers)."""
        return Dataset(
            timestamps=self.timestamps[start:stop].copy(),
            numeric=self.numeric[start:stop].copy(),
            numeric_columns=self.numeric_columns,
            categorical={k: v[start:stop].copy() for k, v in self.categorical.items()},
            target=self.target,
        )


def read_csv(source: str | Path | io.TextIOBase, target: str = "Temperature") -> Dataset:
    """Load a dataset from CSV with the canonical header; empty cells are
    missing values, timestamps are ISO-8601."""
    if isinstance(source, (str, Path)):
        with open(source, newline="") as handle:
            return read_csv(handle, target=target)
    rows = list(csv.reader(source))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise CsvSchemaError(f"header must be exactly {','.join(CSV_HEADER)}")
    timestamps, numeric, summary = [], [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_HEADER):
            raise CsvSchemaError(f"line {lineno}: expected {len(CSV_HEADER)} cells")
        try:
            timestamps.append(np.datetime64(row[0], "s"))
        except ValueError as exc:
            raise CsvSchemaError(f"line {lineno}: bad timestamp {row[0]!r}") from exc
        values = []
        for name, cell in zip(NUMERIC_COLUMNS, row[1:6]):
            if cell == "":
                values.append(np.nan)
            else:
                try:
                    values.append(float(cell))
                except ValueError as exc:
                    raise CsvSchemaError(f"line {lineno}: {name} is not numeric") from exc
        numeric.append(values)
        summary.append(row[6] if row[6] != "" else None)
    if not timestamps:
        raise CsvSchemaError("no data rows")
    try:
        return Dataset(
            timestamps=np.array(timestamps),
            numeric=np.array(numeric, dtype=np.float64),
            categorical={"Summary": np.array(summary, dtype=object)},
            target=target,
        )
    except ValueError as exc:
        raise CsvSchemaError(str(exc)) from exc


def write_csv(data: Dataset, destination: str | Path | io.TextIOBase) -> None:
    if isinstance(destination, (str, Path)):
        with open(destination, "w", newline="") as handle:
            write_csv(data, handle)
            return
    writer = csv.writer(destination)
    writer.writerow(CSV_HEADER)
    summary = data.categorical.get("Summary")
    for i in range(data.n_rows):
        cells = [np.datetime_as_string(data.timestamps[i], unit="s")]
        for v in data.numeric[i]:
            cells.append("" if math.isnan(v) else repr(float(v)))
        label = summary[i] if summary is not None else None
        cells.append("" if label is None else str(label))
        writer.writerow(cells)


# --- preprocessing -----------------------------------------------------------

def impute_missing(data: Dataset) -> Dataset:
    """Fill numeric gaps by forward-fill, then remaining leading gaps by the
    column mean of observed values; categorical gaps become ``"unknown"``."""
    numeric = data.numeric.copy()
    for j, name in enumerate(data.numeric_columns):
        col = numeric[:, j]
        observed = ~np.isnan(col)
        if not observed.any():
            raise AllMissingColumn(f"column {name!r} has no observed values")
        mean = float(col[observed].mean())
        last = np.maximum.accumulate(np.where(observed, np.arange(len(col)), -1))
        filled = np.where(last >= 0, col[np.maximum(last, 0)], mean)
        numeric[:, j] = filled
    categorical = {}
    for name, col in data.categorical.items():
        out = col.copy()
        for i, label in enumerate(out):
            if label is None or label == "":
                out[i] = UNKNOWN_LABEL
        categorical[name] = out
    return Dataset(data.timestamps.copy(), numeric, data.numeric_columns,
                   categorical, data.target)


@dataclass(eq=False)
class PreprocessStats:
    """Standardization and encoding state, fitted on training rows only.

    ``label_maps`` assigns integers to labels in first-appearance order; the
    one-hot layout of each categorical column is its labels in index order.
    """

    numeric_columns: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    label_maps: dict[str, dict[str, int]]

    def __eq__(self, other) -> bool:
        return (isinstance(other, PreprocessStats)
                and self.numeric_columns == other.numeric_columns
                and np.array_equal(self.mean, other.mean)
                and np.array_equal(self.std, other.std)
                and self.label_maps == other.label_maps)


def fit_preprocessor(train: Dataset) -> PreprocessStats:
    """Column means and population standard deviations from the training rows;
    a constant column gets std 1 so its standardized values are exactly 0."""
    if train.n_rows == 0:
        raise EmptyTrainingSet("cannot fit a preprocessor on zero rows")
    if np.isnan(train.numeric).any():
        raise ValueError("dataset must be imputed before fitting")
    mean = train.numeric.mean(axis=0)
    std = train.numeric.std(axis=0)  # population (ddof=0)
    std = np.where(std == 0.0, 1.0, std)
    label_maps: dict[str, dict[str, int]] = {}
    for name, col in train.categorical.items():
        mapping: dict[str, int] = {}
        for label in col:
            if label not in mapping:
                mapping[label] = len(mapping)
        label_maps[name] = mapping
    return PreprocessStats(train.numeric_columns, mean, std, label_maps)


def apply_preprocessor(stats: PreprocessStats, data: Dataset,
                       skip_categorical: frozenset[str] = frozenset()) -> np.ndarray:
    """Standardize numerics and one-hot the categoricals with the fitted
    layout; statistics are never re-estimated here. Labels unseen at fit time
    encode as an all-zero block. ``skip_categorical`` leaves out columns that
    are prediction targets rather than features."""
    if data.numeric_columns != stats.numeric_columns:
        raise ArityMismatch("numeric columns differ from the fitted layout")
    wanted = set(stats.label_maps) - set(skip_categorical)
    if not wanted <= set(data.categorical):
        raise ArityMismatch("categorical columns differ from the fitted layout")
    if np.isnan(data.numeric).any():
        raise ValueError("dataset must be imputed before transforming")
    blocks = [(data.numeric - stats.mean) / stats.std]
    for name, mapping in stats.label_maps.items():
        if name in skip_categorical:
            continue
        onehot = np.zeros((data.n_rows, len(mapping)))
        for i, label in enumerate(data.categorical[name]):
            j = mapping.get(label)
            if j is not None:
                onehot[i, j] = 1.0
        blocks.append(onehot)
    return np.hstack(blocks)


def temporal_split(data: Dataset, train_fraction: float) -> tuple[Dataset, Dataset]:
    """First ``floor(n·fraction)`` rows for training, the rest for testing;
    no shuffling, so every training timestamp precedes every test timestamp."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    n = data.n_rows
    if n < 2:
        raise TooFewRows("need at least 2 rows to split")
    cut = int(math.floor(n * train_fraction))
    if cut == 0 or cut == n:
        raise TooFewRows(f"fraction {train_fraction} leaves an empty side for {n} rows")
    return data.slice(0, cut), data.slice(cut, n)


# --- forecasters --------------------------------------------------------------

@dataclass(eq=False)
class ForecastModel:
    """A fitted baseline forecaster plus the preprocessing state it was
    trained with. Exactly the fields of its kind are set; the rest are None."""

    kind: str
    preprocess: PreprocessStats
    train_rows: int
    last_value: float | None = None
    period: int | None = None
    season: np.ndarray | None = None
    order: int | None = None
    intercept: float | None = None
    coefficients: np.ndarray | None = None
    class_column: str | None = None
    centroids: dict[str, np.ndarray] | None = None

    @property
    def model_kind(self) -> str:
        """Ledger model kind this forecaster belongs to."""
        return "classification" if self.kind == "nearest_centroid" else "regression"

    def __eq__(self, other) -> bool:
        if not isinstance(other, ForecastModel):
            return NotImplemented
        if (self.kind, self.train_rows, self.last_value, self.period, self.order,
                self.intercept, self.class_column) != (
                other.kind, other.train_rows, other.last_value, other.period,
                other.order, other.intercept, other.class_column):
            return False
        if not (_opt_array_equal(self.season, other.season)
                and _opt_array_equal(self.coefficients, other.coefficients)):
            return False
        if (self.centroids is None) != (other.centroids is None):
            return False
        if self.centroids is not None:
            if self.centroids.keys() != other.centroids.keys():
                return False
            if not all(np.array_equal(self.centroids[k], other.centroids[k])
                       for k in self.centroids):
                return False
        return self.preprocess == other.preprocess


def _opt_array_equal(a: np.ndarray | None, b: np.ndarray | None) -> bool:
    if (a is None) != (b is None):
        return False
    return True if a is None else np.array_equal(a, b)


def _class_features(stats: PreprocessStats, data: Dataset, class_column: str) -> np.ndarray:
    return apply_preprocessor(stats, data, skip_categorical=frozenset({class_column}))


def fit_forecaster(kind: str, train: Dataset, *, order: int | None = None,
                   period: int | None = None,
                   class_column: str = "Summary") -> ForecastModel:
    """Fit one of the baseline forecasters on (imputed) training rows.

    ``ar`` solves the ridge-regularized normal equations of
    ``y_t = c + Σ φ_i · y_{t-i}`` with λ = 1e-6 on the raw target series.
    """
    if kind not in FORECASTER_KINDS:
        raise ValueError(f"unknown forecaster kind {kind!r}")
    if train.n_rows == 0:
        raise InsufficientHistory("cannot fit on an empty dataset")
    stats = fit_preprocessor(train)
    y = train.target_values()
    model = ForecastModel(kind=kind, preprocess=stats, train_rows=train.n_rows)

    if kind == "naive_last":
        model.last_value = float(y[-1])
    elif kind == "seasonal_naive":
        if period is None or period < 1:
            raise ValueError("seasonal_naive requires a positive period")
        if train.n_rows < period:
            raise InsufficientHistory(f"need at least {period} rows, have {train.n_rows}")
        model.period = int(period)
        model.season = y[-period:].copy()
    elif kind == "ar":
        if order is None or order < 1:
            raise ValueError("ar requires a positive order")
        p = int(order)
        if train.n_rows <= p:
            raise InsufficientHistory(f"need more than {p} rows, have {train.n_rows}")
        rows = len(y) - p
        design = np.empty((rows, p + 1))
        design[:, 0] = 1.0
        for i in range(1, p + 1):
            design[:, i] = y[p - i:len(y) - i]
        target = y[p:]
        gram = design.T @ design + AR_RIDGE_LAMBDA * np.eye(p + 1)
        try:
            theta = np.linalg.solve(gram, design.T @ target)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem("normal equations singular despite ridge term") from exc
        model.order = p
        model.intercept = float(theta[0])
        model.coefficients = theta[1:].copy()
    else:  # nearest_centroid
        if class_column not in train.categorical:
            raise ArityMismatch(f"no categorical column {class_column!r}")
        features = _class_features(stats, train, class_column)
        labels = train.categorical[class_column]
        centroids: dict[str, np.ndarray] = {}
        for label in labels:
            if label not in centroids:
                mask = labels == label
                centroids[label] = features[mask].mean(axis=0)
        model.class_column = class_column
        model.centroids = centroids
    return model


def predict(model: ForecastModel, context: Dataset, horizon: int) -> np.ndarray:
    """Forecast ``horizon`` steps past the context (regression kinds), or
    classify every context row (nearest centroid).

    Predictions condition on the trailing target values of the supplied
    context, so an evaluator can score a foreign model against its own local
    history; the autoregression rolls forward on its own predictions.
    """
    if model.kind == "nearest_centroid":
        features = _class_features(model.preprocess, context, model.class_column)
        classes = sorted(model.centroids)
        matrix = np.stack([model.centroids[c] for c in classes])
        distances = np.linalg.norm(features[:, None, :] - matrix[None, :, :], axis=2)
        picks = distances.argmin(axis=1)  # argmin ties go to the smallest label
        return np.array([classes[i] for i in picks], dtype=object)

    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    y = context.target_values()
    if model.kind == "naive_last":
        if len(y) < 1:
            raise InsufficientContext("need at least one trailing target value")
        return np.full(horizon, float(y[-1]))
    if model.kind == "seasonal_naive":
        if len(y) < model.period:
            raise InsufficientContext(f"need {model.period} trailing target values")
        base = y[-model.period:]
        return np.array([base[i % model.period] for i in range(horizon)], dtype=np.float64)
    # ar
    p = model.order
    if len(y) < p:
        raise InsufficientContext(f"need {p} trailing target values")
    window = [float(v) for v in y[-p:]]
    out = []
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(horizon):
            nxt = model.intercept
            for i in range(1, p + 1):
                nxt += float(model.coefficients[i - 1]) * window[-i]
            out.append(nxt)
            window.append(nxt)
            window = window[-p:]
    return np.array(out, dtype=np.float64)


# --- metrics -------------------------------------------------------------------

@dataclass
class MetricReport:
    """Evaluation summary; regression and classification fields are mutually
    optional depending on the model kind."""

    mae: float | None = None
    rmse: float | None = None
    mape: float | None = None
    mape_excluded: int | None = None
    accuracy: float | None = None
    f1_macro: float | None = None

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items() if v is not None}


def regression_metrics(y_true: Sequence[float], y_pred: Sequence[float]) -> MetricReport:
    """MAE, RMSE, and MAPE (as a fraction). Targets with magnitude below the
    zero guard are excluded from MAPE and counted in ``mape_excluded``."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise LengthMismatch("prediction and target lengths differ")
    if len(y_true) == 0:
        raise EmptyInput("no points to score")
    with np.errstate(over="ignore", invalid="ignore"):
        err = np.abs(y_pred - y_true)
        mae = float(err.mean())
        rmse = float(np.sqrt((err * err).mean()))
        mask = np.abs(y_true) > MAPE_ZERO_GUARD
        excluded = int(len(y_true) - mask.sum())
        if not mask.any():
            raise MapeUndefined("every target is below the MAPE zero guard")
        mape = float((err[mask] / np.abs(y_true[mask])).mean())
    return MetricReport(mae=mae, rmse=rmse, mape=mape, mape_excluded=excluded)


def classification_metrics(labels_true: Sequence, labels_pred: Sequence) -> MetricReport:
    """Accuracy and macro-F1 over the classes present in the true labels;
    a class with zero precision+recall contributes F1 = 0."""
    if len(labels_true) != len(labels_pred):
        raise LengthMismatch("prediction and target lengths differ")
    if len(labels_true) == 0:
        raise EmptyInput("no points to score")
    hits = sum(1 for t, p in zip(labels_true, labels_pred) if t == p)
    accuracy = hits / len(labels_true)
    f1_values = []
    for cls in dict.fromkeys(labels_true):
        tp = sum(1 for t, p in zip(labels_true, labels_pred) if t == cls and p == cls)
        fp = sum(1 for t, p in zip(labels_true, labels_pred) if t != cls and p == cls)
        fn = sum(1 for t, p in zip(labels_true, labels_pred) if t == cls and p != cls)
        denom = 2 * tp + fp + fn
        f1_values.append(0.0 if denom == 0 else 2 * tp / denom)
    return MetricReport(accuracy=accuracy, f1_macro=sum(f1_values) / len(f1_values))


def skill_score(candidate: MetricReport, reference: MetricReport | None,
                kind: str) -> int:
    """Map an evaluation to a vote in basis points.

    Regression: ``round(10000 · clamp(1 − mae_candidate / mae_reference, 0, 1))``
    against a naive-baseline reference on the same holdout; a non-finite
    candidate error scores 0. Classification: ``round(10000 · f1_macro)``.
    """
    if kind == "classification":
        if candidate.f1_macro is None:
            raise MissingMetric("candidate report lacks f1_macro")
        return int(round(SCORE_SCALE_BP * candidate.f1_macro))
    if kind != "regression":
        raise ValueError(f"unknown kind {kind!r}")
    if candidate.mae is None or reference is None or reference.mae is None:
        raise MissingMetric("regression skill needs candidate and reference mae")
    if not math.isfinite(candidate.mae):
        return 0
    if reference.mae == 0.0:
        return SCORE_SCALE_BP if candidate.mae == 0.0 else 0
    ratio = 1.0 - candidate.mae / reference.mae
    return int(round(SCORE_SCALE_BP * min(1.0, max(0.0, ratio))))


# --- canonical model codec -------------------------------------------------------

def _encode_stats(stats: PreprocessStats) -> bytes:
    out = [_wire.u32(len(stats.numeric_columns))]
    for j, name in enumerate(stats.numeric_columns):
        out.append(_wire.text(name))
        out.append(_wire.f64(float(stats.mean[j])))
        out.append(_wire.f64(float(stats.std[j])))
    out.append(_wire.u32(len(stats.label_maps)))
    for name, mapping in stats.label_maps.items():
        out.append(_wire.text(name))
        out.append(_wire.u32(len(mapping)))
        for label in sorted(mapping, key=mapping.get):  # index order
            out.append(_wire.text(label))
    return b"".join(out)


def _decode_stats(reader: _wire.Reader) -> PreprocessStats:
    n_numeric = reader.u32()
    names, means, stds = [], [], []
    for _ in range(n_numeric):
        names.append(reader.text())
        means.append(reader.f64())
        stds.append(reader.f64())
    label_maps: dict[str, dict[str, int]] = {}
    for _ in range(reader.u32()):
        column = reader.text()
        label_maps[column] = {reader.text(): i for i in range(reader.u32())}
    return PreprocessStats(tuple(names), np.array(means), np.array(stds), label_maps)


def encode_model(model: ForecastModel) -> bytes:
    """Canonical bytes: magic, kind tag, fixed-width little-endian counts, and
    IEEE-754 doubles. Equal models encode to identical bytes."""
    out = [MODEL_MAGIC, MODEL_VERSION, _wire.u8(_FORECASTER_TAGS[model.kind]),
           _wire.u32(model.train_rows), _encode_stats(model.preprocess)]
    if model.kind == "naive_last":
        out.append(_wire.f64(model.last_value))
    elif model.kind == "seasonal_naive":
        out.append(_wire.u32(model.period))
        out.extend(_wire.f64(float(v)) for v in model.season)
    elif model.kind == "ar":
        out.append(_wire.u32(model.order))
        out.append(_wire.f64(model.intercept))
        out.extend(_wire.f64(float(v)) for v in model.coefficients)
    else:  # nearest_centroid
        out.append(_wire.text(model.class_column))
        classes = sorted(model.centroids)
        dim = len(model.centroids[classes[0]]) if classes else 0
        out.append(_wire.u32(len(classes)))
        out.append(_wire.u32(dim))
        for cls in classes:
            out.append(_wire.text(cls))
            out.extend(_wire.f64(float(v)) for v in model.centroids[cls])
    return b"".join(out)


def decode_model(data: bytes) -> ForecastModel:
    """Inverse of :func:`encode_model`. Raises ``MalformedBytes`` on any input
    that is not a valid encoding and ``UnsupportedVersion`` on a future
    format version; never crashes on garbage."""
    reader = _wire.Reader(data)
    try:
        if reader.take(3) != MODEL_MAGIC:
            raise MalformedBytes("bad magic; not a forecaster model")
        version = reader.take(1)
        if version != MODEL_VERSION:
            raise UnsupportedVersion(f"unsupported model format version {version!r}")
        tag = reader.u8()
        if tag >= len(FORECASTER_KINDS):
            raise MalformedBytes(f"unknown forecaster tag {tag}")
        kind = FORECASTER_KINDS[tag]
        train_rows = reader.u32()
        stats = _decode_stats(reader)
        model = ForecastModel(kind=kind, preprocess=stats, train_rows=train_rows)
        if kind == "naive_last":
            model.last_value = reader.f64()
        elif kind == "seasonal_naive":
            period = reader.u32()
            if period < 1:
                raise MalformedBytes("seasonal period must be positive")
            model.period = period
            model.season = np.array([reader.f64() for _ in range(period)])
        elif kind == "ar":
            order = reader.u32()
            if order < 1:
                raise MalformedBytes("ar order must be positive")
            model.order = order
            model.intercept = reader.f64()
            model.coefficients = np.array([reader.f64() for _ in range(order)])
        else:
            model.class_column = reader.text()
            n_classes = reader.u32()
            if n_classes < 1:
                raise MalformedBytes("nearest centroid needs at least one class")
            dim = reader.u32()
            centroids: dict[str, np.ndarray] = {}
            for _ in range(n_classes):
                label = reader.text()
                centroids[label] = np.array([reader.f64() for _ in range(dim)])
            if len(centroids) != n_classes:
                raise MalformedBytes("duplicate centroid labels")
            model.centroids = centroids
        if not reader.eof():
            raise MalformedBytes("trailing bytes after model")
    except _wire.WireError as exc:
        raise MalformedBytes(str(exc)) from exc
    return model
