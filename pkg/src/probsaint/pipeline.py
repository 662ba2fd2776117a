"""CSV feature pipeline: schema, encoders, batch encoding, time-wise splits.

The CSV dialect is fixed: comma separated, first row header, UTF-8,
ISO-8601 dates, empty string means missing. Categorical columns are integer
encoded with index 0 reserved for unknown/missing; numeric columns (and the
target) are standardized with statistics fitted on training rows only; date
columns expand into six numeric features each.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from .errors import ConfigurationError, EncodingError

VALID_KINDS = ("categorical", "numeric", "date", "target", "sale_date")

# date columns expand to these six derived features, in this order
DATE_FEATURE_SUFFIXES = ("day", "month", "year", "sin_month", "cos_month", "days_since_ref")


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    missing_placeholder: float | None = None


@dataclass
class FeatureSchema:
    """Ordered column typing for a dataset, plus the trend reference date."""

    columns: list[ColumnSpec]
    reference_date: date

    def __post_init__(self):
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise ConfigurationError("schema column names must be unique")
        for c in self.columns:
            if c.kind not in VALID_KINDS:
                raise ConfigurationError(f"column {c.name!r} has unknown kind {c.kind!r}")
        if len([c for c in self.columns if c.kind == "target"]) != 1:
            raise ConfigurationError("schema must declare exactly one target column")
        if len([c for c in self.columns if c.kind == "sale_date"]) != 1:
            raise ConfigurationError("schema must declare exactly one sale_date column")

    @property
    def target(self) -> str:
        return next(c.name for c in self.columns if c.kind == "target")

    @property
    def sale_date_column(self) -> str:
        return next(c.name for c in self.columns if c.kind == "sale_date")

    @property
    def categorical_columns(self) -> list[str]:
        return [c.name for c in self.columns if c.kind == "categorical"]

    @property
    def date_columns(self) -> list[str]:
        """Date-typed columns in schema order; includes the sale_date column."""
        return [c.name for c in self.columns if c.kind in ("date", "sale_date")]

    @property
    def plain_numeric_columns(self) -> list[str]:
        return [c.name for c in self.columns if c.kind == "numeric"]

    def column(self, name: str) -> ColumnSpec:
        for c in self.columns:
            if c.name == name:
                return c
        raise ConfigurationError(f"schema has no column {name!r}")

    def numeric_feature_names(self) -> list[str]:
        """Model-facing numeric feature names: plain numerics, then each date
        column expanded to its six derived features, all in schema order."""
        names: list[str] = []
        for c in self.columns:
            if c.kind == "numeric":
                names.append(c.name)
            elif c.kind in ("date", "sale_date"):
                names.extend(f"{c.name}.{s}" for s in DATE_FEATURE_SUFFIXES)
        return names

    def offer_duration_column(self) -> str | None:
        """The column holding listing duration, identified by name."""
        for c in self.columns:
            if c.kind == "numeric" and "offer_duration" in c.name:
                return c.name
        return None

    def to_json_dict(self) -> dict:
        return {
            "columns": [
                {"name": c.name, "kind": c.kind}
                | ({"missing_placeholder": c.missing_placeholder} if c.missing_placeholder is not None else {})
                for c in self.columns
            ],
            "reference_date": self.reference_date.isoformat(),
            "target": self.target,
            "sale_date": self.sale_date_column,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FeatureSchema":
        try:
            cols = [
                ColumnSpec(c["name"], c["kind"], c.get("missing_placeholder"))
                for c in doc["columns"]
            ]
            ref = date.fromisoformat(doc["reference_date"])
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"malformed schema document: {e}") from e
        schema = cls(columns=cols, reference_date=ref)
        if "target" in doc and doc["target"] != schema.target:
            raise ConfigurationError(
                f"schema target key {doc['target']!r} disagrees with column kinds ({schema.target!r})"
            )
        if "sale_date" in doc and doc["sale_date"] != schema.sale_date_column:
            raise ConfigurationError(
                f"schema sale_date key {doc['sale_date']!r} disagrees with column kinds"
            )
        return schema


def derive_date_features(d: date, reference_date: date) -> dict[str, float]:
    """Expand a calendar date into cyclical month terms and trend features."""
    m = d.month
    return {
        "day": float(d.day),
        "month": float(m),
        "year": float(d.year),
        "sin_month": math.sin(2.0 * math.pi * m / 12.0),
        "cos_month": math.cos(2.0 * math.pi * m / 12.0),
        "days_since_ref": float((d - reference_date).days),
    }


def _parse_date(value, row_index: int, column: str) -> date | None:
    if value is None or value == "":
        return None
    if isinstance(value, date):
        return value
    try:
        return date.fromisoformat(str(value))
    except ValueError as e:
        raise RowError(row_index, f"column {column!r}: unparseable date {value!r}") from e


def _parse_number(value, row_index: int, column: str) -> float | None:
    if value is None or value == "":
        return None
    try:
        return float(value)
    except (TypeError, ValueError) as e:
        raise RowError(row_index, f"column {column!r}: unparseable number {value!r}") from e


class RowError(Exception):
    """Per-row encoding failure; batches abort only when every row fails."""

    def __init__(self, row_index: int, message: str):
        super().__init__(f"row {row_index}: {message}")
        self.row_index = row_index


@dataclass
class FittedEncoders:
    """Category vocabularies and standardization statistics, train-fitted only.

    Index 0 of every categorical vocabulary is the shared unknown/missing
    token. Numeric statistics cover the derived date features as well;
    zero-variance columns fall back to std 1.
    """

    categories: dict[str, dict[str, int]]
    numeric_stats: dict[str, tuple[float, float]]
    target_mean: float
    target_std: float

    def vocab_size(self, column: str) -> int:
        return len(self.categories[column]) + 1  # + unknown slot

    def encode_category(self, column: str, value) -> int:
        if value is None or value == "":
            return 0
        return self.categories[column].get(str(value), 0)

    def decode_category(self, column: str, index: int) -> str | None:
        if index == 0:
            return None
        for cat, idx in self.categories[column].items():
            if idx == index:
                return cat
        raise ConfigurationError(f"index {index} outside vocabulary of column {column!r}")

    def to_json_dict(self) -> dict:
        return {
            "categories": self.categories,
            "numeric_stats": {k: [v[0], v[1]] for k, v in self.numeric_stats.items()},
            "target_mean": self.target_mean,
            "target_std": self.target_std,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FittedEncoders":
        return cls(
            categories={k: dict(v) for k, v in doc["categories"].items()},
            numeric_stats={k: (float(v[0]), float(v[1])) for k, v in doc["numeric_stats"].items()},
            target_mean=float(doc["target_mean"]),
            target_std=float(doc["target_std"]),
        )


@dataclass
class EncodedBatch:
    """Model-ready arrays for a batch of rows.

    `source_indices` maps each encoded row back to its index in the input
    list (rows that failed encoding are skipped).
    """

    cat_indices: np.ndarray  # (m, D_cat) int64
    num_values: np.ndarray  # (m, D_num) float64, standardized
    target: np.ndarray  # (m,) standardized; NaN where target missing
    target_raw: np.ndarray  # (m,) original units; NaN where missing
    sale_dates: list[date]
    cat_columns: list[str]
    num_columns: list[str]
    source_indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self) -> int:
        return self.cat_indices.shape[0]

    def take(self, idx: np.ndarray) -> "EncodedBatch":
        return EncodedBatch(
            cat_indices=self.cat_indices[idx],
            num_values=self.num_values[idx],
            target=self.target[idx],
            target_raw=self.target_raw[idx],
            sale_dates=[self.sale_dates[i] for i in np.asarray(idx).tolist()],
            cat_columns=self.cat_columns,
            num_columns=self.num_columns,
            source_indices=self.source_indices[idx],
        )

    @staticmethod
    def concatenate(batches: list["EncodedBatch"]) -> "EncodedBatch":
        first = batches[0]
        return EncodedBatch(
            cat_indices=np.concatenate([b.cat_indices for b in batches]),
            num_values=np.concatenate([b.num_values for b in batches]),
            target=np.concatenate([b.target for b in batches]),
            target_raw=np.concatenate([b.target_raw for b in batches]),
            sale_dates=[d for b in batches for d in b.sale_dates],
            cat_columns=first.cat_columns,
            num_columns=first.num_columns,
            source_indices=np.concatenate([b.source_indices for b in batches]),
        )


def _row_numeric_features(row: dict, schema: FeatureSchema, row_index: int) -> dict[str, float | None]:
    """Raw (unstandardized) numeric feature values for one row; None = missing."""
    feats: dict[str, float | None] = {}
    for col in schema.columns:
        if col.kind == "numeric":
            feats[col.name] = _parse_number(row.get(col.name), row_index, col.name)
        elif col.kind in ("date", "sale_date"):
            d = _parse_date(row.get(col.name), row_index, col.name)
            if d is None:
                for s in DATE_FEATURE_SUFFIXES:
                    feats[f"{col.name}.{s}"] = None
            else:
                derived = derive_date_features(d, schema.reference_date)
                for s in DATE_FEATURE_SUFFIXES:
                    feats[f"{col.name}.{s}"] = derived[s]
    return feats


def fit_encoders(train_rows: list[dict], schema: FeatureSchema) -> FittedEncoders:
    """Fit vocabularies and standardization statistics on training rows only."""
    if not train_rows:
        raise ConfigurationError("cannot fit encoders on an empty training set")

    categories: dict[str, dict[str, int]] = {}
    for col in schema.categorical_columns:
        mapping: dict[str, int] = {}
        for row in train_rows:
            v = row.get(col)
            if v is None or v == "":
                continue
            v = str(v)
            if v not in mapping:
                mapping[v] = len(mapping) + 1  # 0 is reserved for unknown
        categories[col] = mapping

    num_names = schema.numeric_feature_names()
    collected: dict[str, list[float]] = {n: [] for n in num_names}
    for i, row in enumerate(train_rows):
        feats = _row_numeric_features(row, schema, i)
        for n in num_names:
            v = feats.get(n)
            if v is not None:
                collected[n].append(v)

    numeric_stats: dict[str, tuple[float, float]] = {}
    for n in num_names:
        vals = np.asarray(collected[n], dtype=np.float64)
        if vals.size == 0:
            numeric_stats[n] = (0.0, 1.0)
            continue
        mean = float(vals.mean())
        std = float(vals.std())
        numeric_stats[n] = (mean, std if std > 0.0 else 1.0)

    targets = []
    for i, row in enumerate(train_rows):
        v = _parse_number(row.get(schema.target), i, schema.target)
        if v is not None:
            targets.append(v)
    if not targets:
        raise ConfigurationError(f"target column {schema.target!r} is entirely missing")
    tvals = np.asarray(targets, dtype=np.float64)
    tmean = float(tvals.mean())
    tstd = float(tvals.std())
    return FittedEncoders(categories, numeric_stats, tmean, tstd if tstd > 0.0 else 1.0)


def encode_rows(
    rows: list[dict],
    schema: FeatureSchema,
    encoders: FittedEncoders,
    require_target: bool = False,
) -> tuple[EncodedBatch, list[RowError]]:
    """Encode rows against fitted encoders.

    Unknown categories map to index 0; missing numerics take the schema
    placeholder (default: the fitted mean, i.e. standardized 0). Rows that
    fail hard validation are skipped and reported; the batch aborts only if
    every row fails.
    """
    cat_cols = schema.categorical_columns
    num_names = schema.numeric_feature_names()
    expected_keys = {c.name for c in schema.columns}

    cat_out: list[list[int]] = []
    num_out: list[list[float]] = []
    t_std: list[float] = []
    t_raw: list[float] = []
    dates: list[date] = []
    kept: list[int] = []
    errors: list[RowError] = []

    for i, row in enumerate(rows):
        try:
            if not isinstance(row, dict):
                raise RowError(i, f"expected a mapping of column values, got {type(row).__name__}")
            extra = set(row) - expected_keys
            if extra:
                raise RowError(i, f"unexpected columns {sorted(extra)}")

            cat_row = [encoders.encode_category(c, row.get(c)) for c in cat_cols]

            feats = _row_numeric_features(row, schema, i)
            num_row = []
            for n in num_names:
                mean, std = encoders.numeric_stats[n]
                v = feats.get(n)
                if v is None:
                    # schema placeholder for the base column, else mean imputation
                    base = n.split(".")[0]
                    placeholder = schema.column(base).missing_placeholder
                    v = placeholder if placeholder is not None else mean
                num_row.append((v - mean) / std)

            traw = _parse_number(row.get(schema.target), i, schema.target)
            if traw is None and require_target:
                raise RowError(i, f"missing target {schema.target!r}")

            d = _parse_date(row.get(schema.sale_date_column), i, schema.sale_date_column)
            dates.append(d if d is not None else schema.reference_date)
            cat_out.append(cat_row)
            num_out.append(num_row)
            t_raw.append(traw if traw is not None else np.nan)
            t_std.append((traw - encoders.target_mean) / encoders.target_std if traw is not None else np.nan)
            kept.append(i)
        except RowError as e:
            errors.append(e)

    if rows and not kept:
        raise EncodingError(f"all {len(rows)} rows failed to encode; first error: {errors[0]}")

    batch = EncodedBatch(
        cat_indices=np.asarray(cat_out, dtype=np.int64).reshape(len(kept), len(cat_cols)),
        num_values=np.asarray(num_out, dtype=np.float64).reshape(len(kept), len(num_names)),
        target=np.asarray(t_std, dtype=np.float64),
        target_raw=np.asarray(t_raw, dtype=np.float64),
        sale_dates=dates,
        cat_columns=list(cat_cols),
        num_columns=list(num_names),
        source_indices=np.asarray(kept, dtype=np.int64),
    )
    return batch, errors


def time_split(
    rows: list[dict],
    schema: FeatureSchema,
    test_start: date | str,
    val_window_days: int = 30,
    test_window_days: int = 92,
    train_gap_days: int = 30,
) -> dict[str, list[dict]]:
    """Partition rows by sale date into past-train / recent-val / future-test.

    train: sale_date < test_start - train_gap_days
    val:   test_start - val_window_days <= sale_date < test_start
    test:  test_start <= sale_date < test_start + test_window_days

    All intervals are half-open; with the defaults the validation window
    exactly fills the train gap.
    """
    if isinstance(test_start, str):
        test_start = date.fromisoformat(test_start)
    train_end = test_start - timedelta(days=train_gap_days)
    val_start = test_start - timedelta(days=val_window_days)
    test_end = test_start + timedelta(days=test_window_days)

    parts: dict[str, list[dict]] = {"train": [], "val": [], "test": []}
    col = schema.sale_date_column
    for i, row in enumerate(rows):
        d = _parse_date(row.get(col), i, col)
        if d is None:
            raise RowError(i, f"missing sale date in column {col!r}")
        if d < train_end:
            parts["train"].append(row)
        elif val_start <= d < test_start:
            parts["val"].append(row)
        elif test_start <= d < test_end:
            parts["test"].append(row)

    if not parts["train"]:
        raise ConfigurationError(f"empty training partition: no rows before {train_end.isoformat()}")
    if not parts["test"]:
        raise ConfigurationError(
            f"empty test partition: no rows in [{test_start.isoformat()}, {test_end.isoformat()})"
        )
    return parts


def read_csv_rows(path) -> list[dict]:
    """Read the package CSV dialect into a list of column->string dicts."""
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def rows_to_csv_text(rows: list[dict], columns: list[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: row.get(c, "") for c in columns})
    return buf.getvalue()


def write_csv_rows(path, rows: list[dict], columns: list[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        f.write(rows_to_csv_text(rows, columns))
