"""Typed-column data model: schemas, tables, masks, normalization, encoding.

A dataset is an N x D grid of cells where every column has one of five kinds:

    real      unbounded real values
    pos       strictly positive reals
    count     nonnegative integers
    cat       unordered classes 0..R-1
    ordinal   ordered classes 0..R-1

Cells can be individually missing.  Missing cells are stored as a neutral
sentinel (0.0) and must never be read except through the mask; every encoder
path below zero-fills them so downstream computation is provably blind to
whatever the storage holds.
"""

from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass

import numpy as np

NUMERIC_KINDS = ("real", "pos", "count")
NOMINAL_KINDS = ("cat", "ordinal")
ALL_KINDS = NUMERIC_KINDS + NOMINAL_KINDS

# Lower bound on fitted scale; keeps constant columns from dividing by ~0.
SCALE_FLOOR = 1e-3


class TabularError(Exception):
    """Base class for dataset/schema problems (CLI exit code 2)."""


class SchemaError(TabularError):
    """Types file is malformed or inconsistent."""


class DataError(TabularError):
    """A data/mask cell violates its declared column kind."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ColumnSpec:
    """One column: a name, a kind, and (for nominal kinds) a class count."""

    name: str
    kind: str
    cardinality: int = 0

    def __post_init__(self):
        if not self.name or "," in self.name:
            raise SchemaError(f"invalid column name {self.name!r}")
        if self.kind not in ALL_KINDS:
            raise SchemaError(
                f"column {self.name!r}: unknown kind {self.kind!r} "
                f"(expected one of {', '.join(ALL_KINDS)})"
            )
        if self.kind in NOMINAL_KINDS:
            if self.cardinality < 2:
                raise SchemaError(
                    f"column {self.name!r}: kind {self.kind!r} needs cardinality >= 2"
                )
        elif self.cardinality != 0:
            raise SchemaError(
                f"column {self.name!r}: numeric kind {self.kind!r} must have cardinality 0"
            )

    @property
    def is_numeric(self) -> bool:
        return self.kind in NUMERIC_KINDS

    @property
    def is_nominal(self) -> bool:
        return self.kind in NOMINAL_KINDS

    @property
    def encoded_width(self) -> int:
        """Slots this column occupies in the encoder input."""
        return 1 if self.is_numeric else self.cardinality


@dataclass(frozen=True)
class Schema:
    """Ordered column specs; position is the canonical attribute index."""

    columns: tuple[ColumnSpec, ...]

    def __post_init__(self):
        if len(self.columns) < 1:
            raise SchemaError("schema needs at least one column")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate column names: {dup}")

    def __len__(self) -> int:
        return len(self.columns)

    @property
    def encoded_width(self) -> int:
        return sum(c.encoded_width for c in self.columns)

    def slot_ranges(self) -> list[tuple[int, int]]:
        """Per-column (offset, width) into the encoded input vector."""
        ranges, off = [], 0
        for c in self.columns:
            ranges.append((off, c.encoded_width))
            off += c.encoded_width
        return ranges

    def column_index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise SchemaError(f"no column named {name!r}")

    def fingerprint(self) -> str:
        """Stable digest of (name, kind, cardinality) triples."""
        text = "|".join(f"{c.name}:{c.kind}:{c.cardinality}" for c in self.columns)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class HeterogeneousTable:
    """N x D cell grid stored as float64; interpretation comes from the schema."""

    schema: Schema
    cells: np.ndarray

    def __post_init__(self):
        cells = np.ascontiguousarray(np.asarray(self.cells, dtype=np.float64))
        if cells.ndim != 2 or cells.shape[1] != len(self.schema):
            raise DataError(
                f"cells shape {cells.shape} does not match schema with D={len(self.schema)}"
            )
        object.__setattr__(self, "cells", _freeze(cells))

    @property
    def n_rows(self) -> int:
        return self.cells.shape[0]

    @property
    def n_cols(self) -> int:
        return self.cells.shape[1]


@dataclass(frozen=True)
class MissingMask:
    """Per-cell observed flags; True = observed, False = missing."""

    observed: np.ndarray

    def __post_init__(self):
        obs = np.ascontiguousarray(np.asarray(self.observed, dtype=bool))
        if obs.ndim != 2:
            raise DataError(f"mask must be 2-D, got shape {obs.shape}")
        object.__setattr__(self, "observed", _freeze(obs))

    def check_shape(self, table: HeterogeneousTable) -> None:
        if self.observed.shape != table.cells.shape:
            raise DataError(
                f"mask shape {self.observed.shape} != table shape {table.cells.shape}"
            )


@dataclass(frozen=True)
class ColumnStats:
    """Shift/scale for one numeric column, in its transform domain."""

    shift: float
    scale: float
    domain: str  # "raw" (real), "log" (pos), "log1p" (count)


@dataclass(frozen=True)
class NormalizationStats:
    """Per-column stats; None for nominal columns, which are never normalized."""

    per_column: tuple[ColumnStats | None, ...]

    def require(self, col: int) -> ColumnStats:
        st = self.per_column[col]
        if st is None:
            raise DataError(f"column {col} is nominal and has no normalization stats")
        return st


@dataclass(frozen=True)
class EncodedBatch:
    """Zero-filled encoder input: one row per selected table row."""

    schema: Schema
    values: np.ndarray  # (batch, encoded_width)
    rows: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", _freeze(np.asarray(self.values, dtype=np.float64)))


def _numeric_transform(kind: str, x: np.ndarray) -> np.ndarray:
    """Map raw numeric values into the domain the stats are fitted on."""
    if kind == "real":
        return x
    if kind == "pos":
        return np.log(x)
    if kind == "count":
        return np.log1p(x)
    raise ValueError(f"not a numeric kind: {kind}")


def transform_domain(kind: str) -> str:
    return {"real": "raw", "pos": "log", "count": "log1p"}[kind]


def fit_normalization(
    table: HeterogeneousTable, mask: MissingMask, batch_rows
) -> NormalizationStats:
    """Shift/scale of each numeric column over the observed cells of a batch.

    pos/count columns are normalized on ln(x) / ln(1+x) respectively.  Columns
    with no observed cell in the batch fall back to (0, 1); near-constant
    columns have their scale floored at SCALE_FLOOR.
    """
    rows = np.asarray(list(batch_rows), dtype=np.intp)
    if rows.size == 0:
        raise ValueError("batch_rows must be nonempty")
    mask.check_shape(table)
    stats: list[ColumnStats | None] = []
    for d, col in enumerate(table.schema.columns):
        if not col.is_numeric:
            stats.append(None)
            continue
        obs = mask.observed[rows, d]
        vals = table.cells[rows, d][obs]
        if vals.size == 0:
            stats.append(ColumnStats(0.0, 1.0, transform_domain(col.kind)))
            continue
        t = _numeric_transform(col.kind, vals)
        shift = float(np.mean(t))
        scale = float(max(np.std(t), SCALE_FLOOR))
        stats.append(ColumnStats(shift, scale, transform_domain(col.kind)))
    return NormalizationStats(tuple(stats))


def identity_stats(schema: Schema) -> NormalizationStats:
    """(0, 1) stats for every numeric column; used when normalization is off."""
    return NormalizationStats(
        tuple(
            ColumnStats(0.0, 1.0, transform_domain(c.kind)) if c.is_numeric else None
            for c in schema.columns
        )
    )


def encode_inputs(
    table: HeterogeneousTable,
    mask: MissingMask,
    stats: NormalizationStats,
    rows,
) -> EncodedBatch:
    """Build the zero-filled encoder input for the given rows.

    Numeric cells map to one standardized slot, categorical cells to a one-hot
    block, ordinal cells to a thermometer block (class r sets slots 0..r).
    Missing cells leave their whole block at zero, so the result depends only
    on observed values.
    """
    rows = np.asarray(list(rows), dtype=np.intp)
    mask.check_shape(table)
    out = np.zeros((rows.size, table.schema.encoded_width))
    for d, (col, (off, width)) in enumerate(
        zip(table.schema.columns, table.schema.slot_ranges())
    ):
        obs = mask.observed[rows, d]
        if not obs.any():
            continue
        vals = table.cells[rows, d]
        if col.is_numeric:
            st = stats.require(d)
            t = _numeric_transform(col.kind, vals[obs])
            out[obs, off] = (t - st.shift) / st.scale
        else:
            classes = vals[obs].astype(np.intp)
            sub = np.zeros((classes.size, width))
            if col.kind == "cat":
                sub[np.arange(classes.size), classes] = 1.0
            else:  # thermometer: class r -> r+1 leading ones
                sub[np.arange(width)[None, :] <= classes[:, None]] = 1.0
            out[obs, off : off + width] = sub
    return EncodedBatch(table.schema, out, tuple(int(r) for r in rows))


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------
#
# Data file:  comma-separated, no header, one row per object; an empty field
#             is a missing cell; nominal cells are integer class indices.
# Types file: one line per column, "name,kind,cardinality"; cardinality may be
#             omitted (or 0) for numeric kinds; kind in {real,pos,count,cat,ordinal}.
# Mask file:  comma-separated 0/1 matrix, same shape as data, 1 = observed.


def load_types(path) -> Schema:
    cols = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            row = [f.strip() for f in row]
            if not row or row == [""]:
                continue
            if len(row) not in (2, 3):
                raise SchemaError(
                    f"{path}:{lineno}: expected 'name,kind[,cardinality]', got {row!r}"
                )
            card = 0
            if len(row) == 3 and row[2] != "":
                try:
                    card = int(row[2])
                except ValueError:
                    raise SchemaError(
                        f"{path}:{lineno}: cardinality {row[2]!r} is not an integer"
                    ) from None
            try:
                cols.append(ColumnSpec(row[0], row[1], card))
            except SchemaError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
    return Schema(tuple(cols))


def _parse_cell(field: str, col: ColumnSpec, where: str) -> float:
    try:
        value = float(field)
    except ValueError:
        raise DataError(f"{where}: {field!r} is not numeric") from None
    if not math.isfinite(value):
        raise DataError(f"{where}: non-finite value {field!r}")
    if col.kind == "pos":
        if value <= 0:
            raise DataError(f"{where}: pos column requires value > 0, got {field!r}")
    elif col.kind == "count":
        if value < 0 or not float(value).is_integer():
            raise DataError(f"{where}: count column requires integer >= 0, got {field!r}")
    elif col.is_nominal:
        if not float(value).is_integer() or not (0 <= value < col.cardinality):
            raise DataError(
                f"{where}: class index must be an integer in 0..{col.cardinality - 1}, "
                f"got {field!r}"
            )
    return value


def load_mask(path) -> MissingMask:
    rows = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row == [""]:
                continue
            flags = []
            for colno, f in enumerate(row, start=1):
                f = f.strip()
                if f not in ("0", "1"):
                    raise DataError(f"{path}:{lineno}, column {colno}: mask entry must be 0 or 1")
                flags.append(f == "1")
            rows.append(flags)
    if not rows:
        raise DataError(f"{path}: empty mask file")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DataError(f"{path}: ragged mask rows (widths {sorted(widths)})")
    return MissingMask(np.array(rows, dtype=bool))


def load_dataset(data_file, types_file, mask_file=None) -> tuple[HeterogeneousTable, MissingMask]:
    """Load and validate a dataset.

    Without a mask file, a cell is missing exactly when its field is empty.
    With one, the mask defines observedness; cells it marks missing are stored
    as the neutral sentinel regardless of the file contents, and a cell marked
    observed must actually carry a value.
    """
    schema = load_types(types_file)
    D = len(schema)
    cells: list[list[float]] = []
    empty: list[list[bool]] = []
    with open(data_file, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row == [""]:
                continue
            if len(row) != D:
                raise DataError(
                    f"{data_file}:{lineno}: expected {D} fields, got {len(row)}"
                )
            crow, erow = [], []
            for d, field in enumerate(row):
                field = field.strip()
                if field == "":
                    crow.append(0.0)
                    erow.append(True)
                else:
                    where = f"{data_file}:{lineno}, column {schema.columns[d].name!r}"
                    crow.append(_parse_cell(field, schema.columns[d], where))
                    erow.append(False)
            cells.append(crow)
            empty.append(erow)
    if not cells:
        raise DataError(f"{data_file}: no data rows")
    values = np.array(cells)
    is_empty = np.array(empty, dtype=bool)

    if mask_file is None:
        observed = ~is_empty
    else:
        mask = load_mask(mask_file)
        if mask.observed.shape != values.shape:
            raise DataError(
                f"{mask_file}: mask shape {mask.observed.shape} != data shape {values.shape}"
            )
        conflict = mask.observed & is_empty
        if conflict.any():
            n, d = np.argwhere(conflict)[0]
            raise DataError(
                f"{data_file}: row {n + 1}, column {schema.columns[d].name!r} "
                "is marked observed but the field is empty"
            )
        observed = mask.observed.copy()
        values = values.copy()
        values[~observed] = 0.0  # sentinel; never read except through the mask

    return HeterogeneousTable(schema, values), MissingMask(observed)


def format_cell(value: float, col: ColumnSpec) -> str:
    if col.is_numeric and col.kind != "count":
        return repr(float(value))
    return str(int(value))


def write_table(table: HeterogeneousTable, path, mask: MissingMask | None = None) -> None:
    """Write a table in the input CSV dialect; masked cells become empty fields."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for n in range(table.n_rows):
            row = []
            for d, col in enumerate(table.schema.columns):
                if mask is not None and not mask.observed[n, d]:
                    row.append("")
                else:
                    row.append(format_cell(table.cells[n, d], col))
            w.writerow(row)


def write_mask(mask: MissingMask, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for row in mask.observed:
            w.writerow(["1" if o else "0" for o in row])
