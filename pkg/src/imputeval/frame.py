"""Mixed-type data tables.

A :class:`DataTable` stores continuous columns as float64 and categorical
columns as integer category codes. Missing cells are tracked by a separate
boolean flag per column; the value stored under a missing flag is a
placeholder (``0.0`` or ``-1``) and is never read.
"""

from __future__ import annotations

import csv
import enum
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

__all__ = [
    "Kind",
    "ColumnSchema",
    "ColumnView",
    "DataTable",
    "FiveNumberSummary",
    "TableError",
    "read_schema",
    "write_schema",
    "infer_schema",
    "read_csv",
    "write_csv",
    "pearson_correlation",
    "summary_stats",
]

CONT_PLACEHOLDER = 0.0
CAT_PLACEHOLDER = -1


class TableError(ValueError):
    """Malformed table, schema or CSV input."""


class Kind(str, enum.Enum):
    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"


@dataclass(frozen=True)
class ColumnSchema:
    """Name and scale of one column.

    ``ordinal`` marks categorical columns whose category order is meaningful;
    distribution measures then treat the category codes as ranks.
    """

    name: str
    kind: Kind
    categories: tuple[str, ...] = ()
    ordinal: bool = False

    def __post_init__(self):
        if self.kind is Kind.CONTINUOUS and self.categories:
            raise TableError(f"continuous column {self.name!r} cannot list categories")
        if len(set(self.categories)) != len(self.categories):
            raise TableError(f"column {self.name!r} lists a category twice")

    @property
    def is_categorical(self) -> bool:
        return self.kind is Kind.CATEGORICAL

    def with_categories(self, categories: Iterable[str]) -> "ColumnSchema":
        return ColumnSchema(self.name, self.kind, tuple(categories), self.ordinal)


class ColumnView(NamedTuple):
    """Observed entries of one column together with their row positions."""

    variable: str
    values: np.ndarray
    row_index: np.ndarray


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class DataTable:
    """Immutable column-oriented table.

    Parameters
    ----------
    schema : sequence of ColumnSchema
    columns : sequence of arrays
        float64 for continuous columns, int64 category codes for categorical.
    missing : sequence of bool arrays, optional
        True marks a Missing cell. Defaults to no missing cells.
    """

    schema: tuple[ColumnSchema, ...]
    columns: tuple[np.ndarray, ...]
    missing: tuple[np.ndarray, ...] = field(default=())

    def __init__(self, schema, columns, missing=None):
        schema = tuple(schema)
        names = [c.name for c in schema]
        if len(set(names)) != len(names):
            raise TableError("column names must be unique")
        if len(columns) != len(schema):
            raise TableError("number of columns does not match the schema")
        n = len(columns[0]) if columns else 0
        cols, miss = [], []
        for j, col in enumerate(schema):
            values = np.asarray(columns[j])
            if values.ndim != 1 or len(values) != n:
                raise TableError(f"column {col.name!r} has wrong shape")
            flags = (
                np.zeros(n, dtype=bool)
                if missing is None
                else np.asarray(missing[j], dtype=bool)
            )
            if flags.shape != (n,):
                raise TableError(f"missing flags of {col.name!r} have wrong shape")
            if col.is_categorical:
                values = values.astype(np.int64).copy()
                values[flags] = CAT_PLACEHOLDER
                obs = values[~flags]
                if obs.size and (obs.min() < 0 or obs.max() >= len(col.categories)):
                    raise TableError(f"category code out of range in {col.name!r}")
            else:
                values = values.astype(np.float64).copy()
                values[flags] = CONT_PLACEHOLDER
                if not np.all(np.isfinite(values)):
                    raise TableError(
                        f"non-finite value in {col.name!r}; use the missing flags"
                    )
            cols.append(_frozen(values))
            miss.append(_frozen(flags))
        object.__setattr__(self, "schema", schema)
        object.__setattr__(self, "columns", tuple(cols))
        object.__setattr__(self, "missing", tuple(miss))

    # -- shape and lookup -------------------------------------------------

    @property
    def n_rows(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    @property
    def n_cols(self) -> int:
        return len(self.schema)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.schema]

    def index(self, name: str) -> int:
        for j, col in enumerate(self.schema):
            if col.name == name:
                return j
        raise KeyError(name)

    def column_schema(self, name: str) -> ColumnSchema:
        return self.schema[self.index(name)]

    def values(self, name: str) -> np.ndarray:
        return self.columns[self.index(name)]

    def is_missing(self, name: str) -> np.ndarray:
        return self.missing[self.index(name)]

    def view(self, name: str) -> ColumnView:
        j = self.index(name)
        rows = np.flatnonzero(~self.missing[j])
        return ColumnView(name, self.columns[j][rows], rows)

    def missing_matrix(self) -> np.ndarray:
        if not self.schema:
            return np.zeros((0, 0), dtype=bool)
        return np.column_stack(self.missing)

    def n_missing(self) -> int:
        return int(sum(m.sum() for m in self.missing))

    def continuous_names(self) -> list[str]:
        return [c.name for c in self.schema if not c.is_categorical]

    def categorical_names(self) -> list[str]:
        return [c.name for c in self.schema if c.is_categorical]

    # -- conversions ------------------------------------------------------

    def to_matrix(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(X, M)``: float matrix of values/codes and missing flags."""
        X = np.column_stack([c.astype(np.float64) for c in self.columns])
        return X, self.missing_matrix()

    @classmethod
    def from_matrix(cls, schema, X, M=None) -> "DataTable":
        X = np.asarray(X)
        cols = []
        for j, col in enumerate(schema):
            v = X[:, j]
            cols.append(np.rint(v).astype(np.int64) if col.is_categorical else v)
        missing = None if M is None else [np.asarray(M)[:, j] for j in range(len(schema))]
        return cls(schema, cols, missing)

    def with_missing(self, M: np.ndarray) -> "DataTable":
        """Copy of the table with the cells flagged in ``M`` set to Missing."""
        M = np.asarray(M, dtype=bool)
        miss = [self.missing[j] | M[:, j] for j in range(self.n_cols)]
        return DataTable(self.schema, self.columns, miss)

    def take(self, rows: np.ndarray) -> "DataTable":
        rows = np.asarray(rows)
        return DataTable(
            self.schema,
            [c[rows] for c in self.columns],
            [m[rows] for m in self.missing],
        )

    def labels(self, name: str) -> list[str | None]:
        """Category labels of a categorical column (None where missing)."""
        j = self.index(name)
        cats = self.schema[j].categories
        return [
            None if miss else cats[code]
            for code, miss in zip(self.columns[j], self.missing[j])
        ]

    def equals(self, other: "DataTable") -> bool:
        """Cell-for-cell equality including Missing flags."""
        if self.schema != other.schema or self.n_rows != other.n_rows:
            return False
        for a, b, ma, mb in zip(self.columns, other.columns, self.missing, other.missing):
            if not np.array_equal(ma, mb) or not np.array_equal(a[~ma], b[~mb]):
                return False
        return True


# -- schema files -----------------------------------------------------------


def read_schema(path) -> list[ColumnSchema]:
    """Parse a schema file.

    One column per line as ``name,kind`` with kind one of ``continuous``,
    ``categorical`` or ``ordinal``. An optional third field pre-declares the
    categories separated by ``|``. Blank lines and ``#`` comments are ignored.
    """
    schema = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) < 2 or len(parts) > 3 or not parts[0]:
            raise TableError(f"{path}:{lineno}: expected 'name,kind[,cat1|cat2|...]'")
        name, kind = parts[0], parts[1].lower()
        cats = tuple(parts[2].split("|")) if len(parts) == 3 and parts[2] else ()
        if kind == "continuous":
            schema.append(ColumnSchema(name, Kind.CONTINUOUS, cats))
        elif kind in ("categorical", "ordinal"):
            schema.append(ColumnSchema(name, Kind.CATEGORICAL, cats, kind == "ordinal"))
        else:
            raise TableError(f"{path}:{lineno}: unknown kind {parts[1]!r}")
    names = [c.name for c in schema]
    if len(set(names)) != len(names):
        raise TableError(f"{path}: duplicate column names")
    return schema


def write_schema(schema: Sequence[ColumnSchema], path) -> None:
    lines = []
    for col in schema:
        kind = "ordinal" if col.ordinal else col.kind.value
        line = f"{col.name},{kind}"
        if col.categories:
            line += "," + "|".join(col.categories)
        lines.append(line)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def infer_schema(path, missing_token: str = "NA") -> list[ColumnSchema]:
    """Guess column kinds from a CSV: all-numeric columns are continuous."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TableError(f"{path}: empty file, header row expected")
    schema = []
    for j, name in enumerate(h.strip() for h in rows[0]):
        numeric = True
        for r in rows[1:]:
            c = r[j].strip() if j < len(r) else ""
            if c == "" or c == missing_token:
                continue
            try:
                float(c)
            except ValueError:
                numeric = False
                break
        schema.append(ColumnSchema(name, Kind.CONTINUOUS if numeric else Kind.CATEGORICAL))
    return schema


# -- CSV --------------------------------------------------------------------


def read_csv(path, schema_path=None, *, schema=None, missing_token: str = "NA") -> DataTable:
    """Read a CSV with a header row into a :class:`DataTable`.

    Empty cells and cells equal to ``missing_token`` become Missing. Category
    lists not pre-declared in the schema are inferred from the observed labels
    and sorted lexicographically.
    """
    if schema is None:
        if schema_path is None:
            raise TableError("a schema is required")
        schema = read_schema(schema_path)
    by_name = {c.name: c for c in schema}
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise TableError(f"{path}: empty file, header row expected")
    header = [h.strip() for h in rows[0]]
    for name in by_name:
        if name not in header:
            raise TableError(f"{path}: schema column {name!r} not in CSV header")
    for name in header:
        if name not in by_name:
            raise TableError(f"{path}: unknown column {name!r} (not in schema)")
    body = rows[1:]
    if len(header) == 1:
        # csv yields [] for a blank line; in a one-column file that is an empty cell
        body = [row or [""] for row in body]
    for i, row in enumerate(body, start=2):
        if len(row) != len(header):
            raise TableError(
                f"{path}: row {i} has {len(row)} fields, header has {len(header)}"
            )

    ordered = [by_name[h] for h in header]
    cols, miss = [], []
    for j, col in enumerate(ordered):
        raw = [r[j].strip() for r in body]
        flags = np.array([c == "" or c == missing_token for c in raw], dtype=bool)
        if col.is_categorical:
            observed = sorted({c for c, f in zip(raw, flags) if not f})
            if col.categories:
                unknown = [c for c in observed if c not in col.categories]
                if unknown:
                    raise TableError(
                        f"{path}: column {col.name!r} has undeclared category {unknown[0]!r}"
                    )
                cats = col.categories
            else:
                cats = tuple(observed)
            lookup = {c: k for k, c in enumerate(cats)}
            codes = np.array(
                [CAT_PLACEHOLDER if f else lookup[c] for c, f in zip(raw, flags)],
                dtype=np.int64,
            )
            ordered[j] = col.with_categories(cats)
            cols.append(codes)
        else:
            vals = np.empty(len(raw))
            for i, (c, f) in enumerate(zip(raw, flags)):
                if f:
                    vals[i] = CONT_PLACEHOLDER
                    continue
                try:
                    vals[i] = float(c)
                except ValueError:
                    raise TableError(
                        f"{path}: row {i + 2}, column {col.name!r}: cannot parse {c!r} as a number"
                    ) from None
                if not math.isfinite(vals[i]):
                    raise TableError(
                        f"{path}: row {i + 2}, column {col.name!r}: non-finite value {c!r}"
                    )
            cols.append(vals)
        miss.append(flags)
    return DataTable(ordered, cols, miss)


def _format_real(x: float) -> str:
    return repr(float(x))


def write_csv(table: DataTable, path, *, missing_token: str = "NA") -> None:
    """Write ``table`` as CSV; reals use ``repr`` so a re-read is lossless."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table.names)
        cells = []
        for col, values, flags in zip(table.schema, table.columns, table.missing):
            if col.is_categorical:
                cells.append(
                    [missing_token if f else col.categories[v] for v, f in zip(values, flags)]
                )
            else:
                cells.append(
                    [missing_token if f else _format_real(v) for v, f in zip(values, flags)]
                )
        for i in range(table.n_rows):
            w.writerow([c[i] for c in cells])


# -- column statistics -------------------------------------------------------


def pearson_correlation(x: ColumnView, y: ColumnView) -> float:
    """Sample Pearson correlation over rows observed in both views.

    Returns NaN (and logs) when either restricted column has zero variance;
    callers treat that as correlation 0.
    """
    _, ix, iy = np.intersect1d(x.row_index, y.row_index, return_indices=True)
    if len(ix) < 2:
        raise ValueError(
            f"need at least 2 jointly observed rows for {x.variable!r}/{y.variable!r}"
        )
    a = np.asarray(x.values, dtype=float)[ix]
    b = np.asarray(y.values, dtype=float)[iy]
    a = a - a.mean()
    b = b - b.mean()
    saa, sbb = float(a @ a), float(b @ b)
    if saa == 0.0 or sbb == 0.0:
        logger.warning(
            "zero variance in correlation of %r and %r", x.variable, y.variable
        )
        return math.nan
    r = float(a @ b) / math.sqrt(saa * sbb)
    return min(1.0, max(-1.0, r))


class FiveNumberSummary(NamedTuple):
    q0: float
    q25: float
    q50: float
    q75: float
    q100: float
    sd: float


def summary_stats(values) -> FiveNumberSummary:
    """Quartiles (linear interpolation at ``1 + (n-1)p``) and sample sd."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("summary of an empty vector")
    v = np.sort(v)  # fixed summation order: shuffled input gives the same sd bits
    q = np.quantile(v, [0.0, 0.25, 0.5, 0.75, 1.0])
    sd = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
    return FiveNumberSummary(*(float(t) for t in q), sd)
