"""Categorized point datasets, CSV ingestion, stratified splits and a grid index.

All statistics in this package operate on a :class:`PointDataset`.  Internally
the dataset keeps its coordinates sorted by ascending record id so that every
kernel sum downstream runs in the same, fixed order.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

CSV_HEADER = ("id", "x", "y", "category")
SPLIT_NAMES = ("train", "val", "test")


class DataError(ValueError):
    """Malformed or inconsistent input data.

    ``line`` is the 1-based line number in the source file when known.
    """

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line = line
        self.source = source
        where = [str(source)] if source is not None else []
        if line is not None:
            where.append(f"line {line}")
        super().__init__(": ".join(where + [message]))


@dataclass(frozen=True)
class Category:
    index: int
    name: str


@dataclass(frozen=True)
class PointRecord:
    id: int
    x: float
    y: float
    category: int


@dataclass(frozen=True)
class BBox:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @property
    def diagonal(self) -> float:
        return math.hypot(self.xmax - self.xmin, self.ymax - self.ymin)


@dataclass(frozen=True, eq=False)
class PointDataset:
    """Immutable set of categorized planar points.

    Parameters
    ----------
    records : sequence of PointRecord
        Points in their original (file) order.
    categories : sequence of Category
        Category table; indices must be ``0..C-1`` and every category
        must own at least one record.
    """

    records: tuple[PointRecord, ...]
    categories: tuple[Category, ...]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        records = tuple(self.records)
        categories = tuple(self.categories)
        object.__setattr__(self, "records", records)
        object.__setattr__(self, "categories", categories)
        if not records:
            raise DataError("dataset has no records")
        names = [c.name for c in categories]
        if [c.index for c in categories] != list(range(len(categories))):
            raise DataError("category indices must be contiguous from 0")
        if any(not n for n in names) or len(set(names)) != len(names):
            raise DataError("category names must be unique and nonempty")

        ids = np.array([r.id for r in records], dtype=np.int64)
        if len(np.unique(ids)) != len(ids):
            raise DataError("record ids are not unique")
        order = np.argsort(ids, kind="stable")
        xy = np.array([(r.x, r.y) for r in records], dtype=np.float64)[order]
        labels = np.array([r.category for r in records], dtype=np.int64)[order]
        if not np.all(np.isfinite(xy)):
            raise DataError("non-finite coordinate")
        if labels.min() < 0 or labels.max() >= len(categories):
            raise DataError("category index out of range")
        counts = np.bincount(labels, minlength=len(categories))
        if np.any(counts == 0):
            empty = [categories[i].name for i in np.flatnonzero(counts == 0)]
            raise DataError(f"categories without records: {', '.join(empty)}")

        for name, arr in (("ids", ids[order]), ("xy", xy), ("labels", labels), ("counts", counts)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(
            self,
            "bbox",
            BBox(float(xy[:, 0].min()), float(xy[:, 1].min()), float(xy[:, 0].max()), float(xy[:, 1].max())),
        )
        object.__setattr__(self, "_pos", {int(i): p for p, i in enumerate(self.ids)})

    def __len__(self) -> int:
        return len(self.records)

    def __eq__(self, other):
        if not isinstance(other, PointDataset):
            return NotImplemented
        return self.records == other.records and self.categories == other.categories

    __hash__ = object.__hash__

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    def position(self, record_id: int) -> int:
        """Row of ``record_id`` in the id-sorted internal arrays."""
        try:
            return self._pos[int(record_id)]
        except KeyError:
            raise KeyError(f"unknown record id {record_id}") from None

    def category_index(self, name: str) -> int:
        for c in self.categories:
            if c.name == name:
                return c.index
        raise KeyError(f"unknown category {name!r}")

    def subset(self, ids: Iterable[int]) -> "PointDataset":
        """Dataset restricted to ``ids``, keeping the full category table."""
        keep = set(int(i) for i in ids)
        return PointDataset(tuple(r for r in self.records if r.id in keep), self.categories)

    def index(self, cell_size: float) -> "SpatialIndex":
        """Grid index with the given cell size, built once and cached."""
        key = ("index", float(cell_size))
        idx = self._cache.get(key)
        if idx is None:
            idx = build_index(self, cell_size)
            self._cache[key] = idx
        return idx

    def summary(self) -> str:
        lines = [f"records={len(self)}", f"categories={self.n_categories}"]
        b = self.bbox
        lines.append(f"bbox={b.xmin!r},{b.ymin!r},{b.xmax!r},{b.ymax!r}")
        for c in self.categories:
            lines.append(f"count[{c.name}]={int(self.counts[c.index])}")
        return "\n".join(lines) + "\n"


def _parse_float(text: str, line: int, source: str | None) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"cannot parse coordinate {text!r}", line, source) from None
    if not math.isfinite(value):
        raise DataError(f"non-finite coordinate {text!r}", line, source)
    return value


def ingest_csv(stream: TextIO, source: str | None = None) -> PointDataset:
    """Read an ``id,x,y,category`` CSV into a dataset.

    Categories are indexed in order of first appearance.
    """
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError("empty file", None, source) from None
    header = [h.strip().lstrip("﻿") for h in header]
    if tuple(header) != CSV_HEADER:
        raise DataError(f"expected header {','.join(CSV_HEADER)}, got {','.join(header)}", 1, source)

    categories: dict[str, int] = {}
    records = []
    seen = set()
    for row in reader:
        line = reader.line_num
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if len(row) != 4:
            raise DataError(f"expected 4 fields, got {len(row)}", line, source)
        try:
            rid = int(row[0])
        except ValueError:
            raise DataError(f"invalid id {row[0]!r}", line, source) from None
        if rid in seen:
            raise DataError(f"duplicate id {rid}", line, source)
        seen.add(rid)
        x = _parse_float(row[1], line, source)
        y = _parse_float(row[2], line, source)
        name = row[3].strip()
        if not name:
            raise DataError("empty category label", line, source)
        cat = categories.setdefault(name, len(categories))
        records.append(PointRecord(rid, x, y, cat))
    if not records:
        raise DataError("no records after header", None, source)
    return PointDataset(tuple(records), tuple(Category(i, n) for n, i in categories.items()))


def read_dataset(path) -> PointDataset:
    with open(path, newline="", encoding="utf-8") as fh:
        return ingest_csv(fh, source=str(path))


def export_csv(ds: PointDataset) -> str:
    """Render ``ds`` in ingestion format, records in original order."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in ds.records:
        writer.writerow((r.id, repr(float(r.x)), repr(float(r.y)), ds.categories[r.category].name))
    return buf.getvalue()


@dataclass(frozen=True)
class SplitAssignment:
    assignment: Mapping[int, str]
    seed: int | None = None

    def ids(self, split: str) -> list[int]:
        return sorted(i for i, s in self.assignment.items() if s == split)

    def counts(self) -> dict[str, int]:
        out = {s: 0 for s in SPLIT_NAMES}
        for s in self.assignment.values():
            out[s] += 1
        return out


def _largest_remainder(n: int, fractions: Sequence[float]) -> list[int]:
    exact = [f * n for f in fractions]
    base = [math.floor(e) for e in exact]
    left = n - sum(base)
    # lower split index wins ties
    order = sorted(range(len(exact)), key=lambda k: (-(exact[k] - base[k]), k))
    for k in order[:left]:
        base[k] += 1
    return base


def split_dataset(ds: PointDataset, fractions: Sequence[float], seed: int) -> SplitAssignment:
    """Stratified, seeded train/val/test partition.

    Each category is shuffled independently (in category order, from one
    ``numpy.random.default_rng(seed)`` stream) and cut by largest-remainder
    rounding, so every per-category split size is within 1 of its target.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or any(f < 0 or not math.isfinite(f) for f in fractions):
        raise ValueError("fractions must be three nonnegative reals")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)!r}")
    rng = np.random.default_rng(seed)
    assignment: dict[int, str] = {}
    for c in range(ds.n_categories):
        members = ds.ids[ds.labels == c]
        perm = members[rng.permutation(len(members))]
        sizes = _largest_remainder(len(members), fractions)
        start = 0
        for name, size in zip(SPLIT_NAMES, sizes):
            for rid in perm[start:start + size]:
                assignment[int(rid)] = name
            start += size
    return SplitAssignment(dict(sorted(assignment.items())), seed)


def write_splits(split: SplitAssignment) -> str:
    lines = ["id,split"]
    lines += [f"{i},{s}" for i, s in sorted(split.assignment.items())]
    return "\n".join(lines) + "\n"


def read_splits(stream: TextIO, source: str | None = None) -> SplitAssignment:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["id", "split"]:
        raise DataError("expected header id,split", 1, source)
    out: dict[int, str] = {}
    for row in reader:
        if not row:
            continue
        line = reader.line_num
        if len(row) != 2:
            raise DataError(f"expected 2 fields, got {len(row)}", line, source)
        try:
            rid = int(row[0])
        except ValueError:
            raise DataError(f"invalid id {row[0]!r}", line, source) from None
        name = row[1].strip()
        if name not in SPLIT_NAMES:
            raise DataError(f"unknown split {name!r}", line, source)
        if rid in out:
            raise DataError(f"duplicate id {rid}", line, source)
        out[rid] = name
    return SplitAssignment(out)


def read_split_file(path) -> SplitAssignment:
    with open(path, newline="", encoding="utf-8") as fh:
        return read_splits(fh, source=str(path))


def check_split_covers(ds: PointDataset, split: SplitAssignment) -> None:
    if set(split.assignment) != set(int(i) for i in ds.ids):
        raise DataError("split ids do not match dataset ids")


class SpatialIndex:
    """Uniform grid over the dataset bbox for exact fixed-radius queries.

    Nonempty cells map to arrays of dataset positions (rows of the
    id-sorted arrays), so results come back in ascending-id order.
    """

    def __init__(self, xy: np.ndarray, ids: np.ndarray, bbox: BBox, cell_size: float):
        if not cell_size > 0:
            raise ValueError("cell_size must be positive")
        self.xy = xy
        self.ids = ids
        self.cell_size = float(cell_size)
        self.x0, self.y0 = bbox.xmin, bbox.ymin
        span_x = bbox.xmax - bbox.xmin
        span_y = bbox.ymax - bbox.ymin
        self.nx = int(min(span_x / cell_size, 1e9)) + 1
        self.ny = int(min(span_y / cell_size, 1e9)) + 1
        ix = self._cell(xy[:, 0], self.x0, self.nx)
        iy = self._cell(xy[:, 1], self.y0, self.ny)
        keys = iy * self.nx + ix
        order = np.lexsort((np.arange(len(keys)), keys))
        sorted_keys = keys[order]
        bounds = np.flatnonzero(np.diff(sorted_keys)) + 1
        self.cells: dict[int, np.ndarray] = {}
        for chunk in np.split(order, bounds):
            self.cells[int(keys[chunk[0]])] = chunk

    def _cell(self, v, origin, n):
        return np.clip(np.floor((np.asarray(v) - origin) / self.cell_size), 0, n - 1).astype(np.int64)

    def candidates(self, cx: float, cy: float, r: float) -> np.ndarray:
        """Positions in cells touching the query disc (superset of the answer)."""
        if math.isinf(r):
            return np.arange(len(self.ids))
        lo_x = math.floor((cx - r - self.x0) / self.cell_size)
        hi_x = math.floor((cx + r - self.x0) / self.cell_size)
        lo_y = math.floor((cy - r - self.y0) / self.cell_size)
        hi_y = math.floor((cy + r - self.y0) / self.cell_size)
        if hi_x < 0 or hi_y < 0 or lo_x >= self.nx or lo_y >= self.ny:
            return np.empty(0, dtype=np.int64)
        lo_x, lo_y = max(lo_x, 0), max(lo_y, 0)
        hi_x, hi_y = min(hi_x, self.nx - 1), min(hi_y, self.ny - 1)
        n_range = (hi_x - lo_x + 1) * (hi_y - lo_y + 1)
        if n_range > len(self.cells):
            parts = [
                p for k, p in self.cells.items()
                if lo_x <= k % self.nx <= hi_x and lo_y <= k // self.nx <= hi_y
            ]
        else:
            parts = []
            for iy in range(lo_y, hi_y + 1):
                row = iy * self.nx
                for ix in range(lo_x, hi_x + 1):
                    p = self.cells.get(row + ix)
                    if p is not None:
                        parts.append(p)
        if not parts:
            return np.empty(0, dtype=np.int64)
        return np.sort(np.concatenate(parts))

    def query_positions(self, center, r: float) -> np.ndarray:
        """Sorted positions of points within distance ``<= r`` of ``center``."""
        if r < 0:
            raise ValueError("radius must be nonnegative")
        cx, cy = float(center[0]), float(center[1])
        cand = self.candidates(cx, cy, r)
        if len(cand) == 0:
            return cand
        pts = self.xy[cand]
        d = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
        return cand[d <= r]


def build_index(ds: PointDataset, cell_size: float) -> SpatialIndex:
    return SpatialIndex(ds.xy, ds.ids, ds.bbox, cell_size)


def query_radius(idx: SpatialIndex, center, r: float) -> list[int]:
    """Ids within Euclidean distance ``<= r`` of ``center``, ascending."""
    return [int(i) for i in idx.ids[idx.query_positions(center, r)]]
