"""Tabular data with an explicit missing-cell state.

A :class:`FeatureTable` keeps two parallel ``(N, K)`` arrays: ``values``
(float64) and ``missing`` (bool). The mask is authoritative; missing cells
additionally hold NaN in ``values`` so that any code path ignoring the mask
produces NaN instead of a silently wrong number.

CSV format: UTF-8, comma separated, header line of unique non-empty names,
``NA`` for missing cells. Numbers are written in shortest round-trip form
(``repr``) with a trailing ``.0`` dropped for integral values.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DimensionError, EmptyColumnError, ParseError, SchemaError

MISSING_TOKEN = "NA"


def format_real(v: float | None) -> str:
    """Canonical decimal rendering used by every emitted CSV."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return MISSING_TOKEN
    v = float(v)
    if v.is_integer() and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def _validate_names(names: Sequence[str]) -> tuple[str, ...]:
    names = tuple(str(n) for n in names)
    if not names:
        raise SchemaError("table needs at least one feature")
    seen = set()
    for n in names:
        if not n:
            raise SchemaError("feature names must be non-empty")
        if n in seen:
            raise SchemaError(f"duplicate feature name {n!r}")
        seen.add(n)
    return names


@dataclass(frozen=True, eq=False)
class Instance:
    """One row: ``values[i]`` is meaningful only where ``missing[i]`` is False."""

    values: np.ndarray
    missing: np.ndarray
    names: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.names)

    @classmethod
    def from_cells(cls, cells: Sequence[float | None], names: Sequence[str] | None = None) -> "Instance":
        if names is None:
            names = [f"x{i}" for i in range(len(cells))]
        names = _validate_names(names)
        if len(cells) != len(names):
            raise DimensionError(f"instance has {len(cells)} cells, schema has {len(names)}")
        missing = np.array([c is None for c in cells], dtype=bool)
        values = np.array([np.nan if c is None else float(c) for c in cells], dtype=float)
        return cls(values, missing, names)

    def cells(self) -> list[float | None]:
        return [None if m else float(v) for v, m in zip(self.values, self.missing)]


@dataclass(frozen=True, eq=False)
class FeatureTable:
    names: tuple[str, ...]
    values: np.ndarray
    missing: np.ndarray

    def __post_init__(self):
        names = _validate_names(self.names)
        values = np.array(self.values, dtype=float, copy=True)
        missing = np.array(self.missing, dtype=bool, copy=True)
        if values.ndim != 2 or values.shape != missing.shape:
            raise SchemaError("values and missing must be matching 2-d arrays")
        if values.shape[1] != len(names):
            raise SchemaError(f"rows have {values.shape[1]} cells, header has {len(names)}")
        if values.shape[0] < 1:
            raise SchemaError("table has no rows")
        if not np.all(np.isfinite(values[~missing])):
            raise ParseError("non-finite value in a non-missing cell")
        values[missing] = np.nan
        values.setflags(write=False)
        missing.setflags(write=False)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", missing)

    @classmethod
    def from_rows(cls, names: Sequence[str], rows: Iterable[Sequence[float | None]]) -> "FeatureTable":
        rows = [list(r) for r in rows]
        k = len(names)
        for j, r in enumerate(rows):
            if len(r) != k:
                raise SchemaError(f"row {j} has {len(r)} cells, expected {k}")
        missing = np.array([[c is None for c in r] for r in rows], dtype=bool).reshape(len(rows), k)
        values = np.array([[np.nan if c is None else float(c) for c in r] for r in rows], dtype=float)
        return cls(tuple(names), values.reshape(len(rows), k), missing)

    @classmethod
    def from_arrays(cls, names: Sequence[str], values, missing=None) -> "FeatureTable":
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if missing is None:
            missing = np.zeros(values.shape, dtype=bool)
        return cls(tuple(names), values, missing)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_features(self) -> int:
        return self.values.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown feature {name!r}") from None

    def cell(self, row: int, col: int) -> float | None:
        return None if self.missing[row, col] else float(self.values[row, col])

    def row(self, j: int) -> Instance:
        return Instance(self.values[j].copy(), self.missing[j].copy(), self.names)

    def take(self, rows) -> "FeatureTable":
        rows = np.asarray(rows, dtype=int)
        return FeatureTable(self.names, self.values[rows], self.missing[rows])


def parse_csv(text: str, source: str = "<string>") -> FeatureTable:
    lines = text.splitlines()
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(f"{source}: empty file, no header") from None
    if not header or header == [""]:
        raise SchemaError(f"{source}: empty header line")
    names = _validate_names(header)
    k = len(names)
    values, missing = [], []
    for lineno, cells in enumerate(reader, start=2):
        if not cells:
            continue
        if len(cells) != k:
            raise SchemaError(f"{source}: line {lineno} has {len(cells)} cells, header has {k}")
        vrow, mrow = [], []
        for col, tok in enumerate(cells):
            tok = tok.strip()
            if tok == MISSING_TOKEN:
                vrow.append(np.nan)
                mrow.append(True)
                continue
            try:
                v = float(tok)
            except ValueError:
                v = math.nan
            if not math.isfinite(v):
                raise ParseError(f"{source}: line {lineno}, column {names[col]!r}: cannot parse {tok!r}")
            vrow.append(v)
            mrow.append(False)
        values.append(vrow)
        missing.append(mrow)
    if not values:
        raise SchemaError(f"{source}: no data rows")
    return FeatureTable(names, np.array(values, dtype=float), np.array(missing, dtype=bool))


def load_csv(path) -> FeatureTable:
    path = Path(path)
    return parse_csv(path.read_text(encoding="utf-8"), source=str(path))


def dumps_csv(table: FeatureTable) -> str:
    buf = io.StringIO()
    buf.write(",".join(table.names) + "\n")
    for j in range(table.n_rows):
        buf.write(",".join(format_real(table.cell(j, i)) for i in range(table.n_features)) + "\n")
    return buf.getvalue()


def write_csv(table: FeatureTable, path) -> None:
    Path(path).write_text(dumps_csv(table), encoding="utf-8")


def population_std(xs) -> float:
    """Divide-by-N standard deviation with exactly rounded sums (order independent)."""
    xs = [float(x) for x in xs]
    if not xs:
        raise EmptyColumnError("standard deviation of an empty set")
    mean = math.fsum(xs) / len(xs)
    return math.sqrt(math.fsum((x - mean) ** 2 for x in xs) / len(xs))


def column_stats(table: FeatureTable, i: int) -> tuple[float, float, int]:
    """Return ``(mean, population std, missing count)`` over non-missing cells."""
    if not 0 <= i < table.n_features:
        raise DimensionError(f"feature index {i} out of range for K={table.n_features}")
    present = table.values[~table.missing[:, i], i]
    n_missing = int(table.missing[:, i].sum())
    if present.size == 0:
        raise EmptyColumnError(f"column {table.names[i]!r} has no non-missing cells")
    xs = present.tolist()
    mean = math.fsum(xs) / len(xs)
    return mean, population_std(xs), n_missing
