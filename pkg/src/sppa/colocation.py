"""Second-order statistics: local co-location quotients and their signatures.

For an anchor ``i`` and category ``Y``::

    N_{i->Y}  = sum_{j != i} w_ij [cat(j) == Y] / sum_{j != i} w_ij
    LCLQ_{i->Y} = N_{i->Y} / (N_Y / (N - 1))
    w_ij = exp(-0.5 d_ij^2 / h^2)

Free-coordinate anchors use every dataset point as a neighbor and keep the
same ``N_Y / (N - 1)`` denominator so query vectors are comparable with the
vectors of the points the signatures were built from.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ._parallel import map_ordered
from .core import DataError, PointDataset, SplitAssignment
from .intensity import neighbor_positions


@dataclass(frozen=True)
class LclqConfig:
    bandwidth: float
    cutoff_multiplier: float = 5.0
    truncation: bool = True
    weight_floor: float = 1e-12
    # substitute (N_Y - 1)/(N - 1) for the anchor's own category
    self_correction: bool = False

    def __post_init__(self):
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth!r}")
        if self.truncation and not self.cutoff_multiplier >= 3:
            raise ValueError("cutoff_multiplier must be >= 3 when truncation is enabled")
        if not self.weight_floor > 0:
            raise ValueError("weight_floor must be positive")

    @property
    def radius(self) -> float:
        return self.cutoff_multiplier * self.bandwidth if self.truncation else math.inf


def weight(d, h):
    """Gaussian neighbor weight ``exp(-0.5 d^2 / h^2)``; 1 at d = 0."""
    return np.exp(-0.5 * np.square(np.asarray(d, dtype=np.float64) / h))


def _is_point_anchor(anchor) -> bool:
    return isinstance(anchor, (int, np.integer)) and not isinstance(anchor, bool)


class NeighborFractions(NamedTuple):
    values: np.ndarray
    isolated: bool


def neighbor_fractions(ds: PointDataset, anchor, cfg: LclqConfig) -> NeighborFractions:
    """Weighted share of each category among the anchor's neighbors.

    ``anchor`` is either a record id (the point itself is excluded) or an
    ``(x, y)`` pair (all points count).  When the weight total is below
    ``cfg.weight_floor`` the result is all zeros with ``isolated=True``.
    """
    if _is_point_anchor(anchor):
        if len(ds) < 2:
            raise ValueError("point anchors need at least two dataset points")
        self_pos = ds.position(anchor)
        center = ds.xy[self_pos]
        pos = neighbor_positions(ds, center, cfg.radius)
        pos = pos[pos != self_pos]
    else:
        center = np.asarray(anchor, dtype=np.float64)
        if center.shape != (2,):
            raise ValueError("free anchor must be an (x, y) pair")
        pos = neighbor_positions(ds, center, cfg.radius)
    d = ds.xy[pos] - center
    w = np.exp(-0.5 * (d[:, 0] ** 2 + d[:, 1] ** 2) / (cfg.bandwidth**2))
    sums = np.bincount(ds.labels[pos], weights=w, minlength=ds.n_categories)
    total = sums.sum()
    if not total >= cfg.weight_floor:
        return NeighborFractions(np.zeros(ds.n_categories), True)
    return NeighborFractions(sums / total, False)


def neighbor_fraction(ds: PointDataset, anchor, y: int, cfg: LclqConfig) -> float:
    return float(neighbor_fractions(ds, anchor, cfg).values[int(y)])


def _quotient_factors(ds: PointDataset, anchor, cfg: LclqConfig) -> np.ndarray:
    n = len(ds)
    if n < 2:
        raise ValueError("LCLQ needs at least two dataset points")
    counts = ds.counts.astype(np.float64)
    factors = (n - 1) / counts
    if cfg.self_correction and _is_point_anchor(anchor):
        own = ds.labels[ds.position(anchor)]
        factors[own] = (n - 1) / (counts[own] - 1) if counts[own] > 1 else 0.0
    return factors


@dataclass(frozen=True, eq=False)
class LclqVector:
    values: np.ndarray
    anchor: object
    isolated: bool = False


def lclq_vector(ds: PointDataset, anchor, cfg: LclqConfig) -> LclqVector:
    frac = neighbor_fractions(ds, anchor, cfg)
    return LclqVector(frac.values * _quotient_factors(ds, anchor, cfg), anchor, frac.isolated)


def lclq(ds: PointDataset, anchor, y: int, cfg: LclqConfig) -> float:
    """Local co-location quotient of ``anchor`` toward category ``y``.

    Values above 1 mean ``y`` is over-represented around the anchor relative
    to its global share.
    """
    return float(lclq_vector(ds, anchor, cfg).values[int(y)])


def lclq_vectors(ds: PointDataset, anchors, cfg: LclqConfig) -> list[LclqVector]:
    return map_ordered(lambda a: lclq_vector(ds, a, cfg), list(anchors))


def mean_lclq(vectors: list[LclqVector]) -> np.ndarray:
    """Column means over all anchors, isolated ones included."""
    return np.mean(np.array([v.values for v in vectors]), axis=0)


@dataclass(frozen=True, eq=False)
class GlobalClqTable:
    """Per-category mean LCLQ vectors (one row per category)."""

    rows: np.ndarray
    n_contributing: np.ndarray
    n_isolated: np.ndarray
    category_names: tuple[str, ...]

    def __post_init__(self):
        if self.rows.shape != (len(self.category_names), len(self.category_names)):
            raise ValueError("global CLQ table must be C x C")

    def to_csv(self) -> str:
        c = len(self.category_names)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["category"] + [f"v_{k}" for k in range(c)] + ["n_contributing"])
        for k, name in enumerate(self.category_names):
            writer.writerow([name] + [repr(float(v)) for v in self.rows[k]] + [int(self.n_contributing[k])])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, stream, source: str | None = None) -> "GlobalClqTable":
        reader = csv.reader(stream)
        header = next(reader, None)
        if not header or header[0] != "category" or header[-1] != "n_contributing":
            raise DataError("expected header category,v_0,...,n_contributing", 1, source)
        c = len(header) - 2
        names, rows, counts = [], [], []
        for row in reader:
            if not row:
                continue
            if len(row) != c + 2:
                raise DataError(f"expected {c + 2} fields", reader.line_num, source)
            try:
                rows.append([float(v) for v in row[1:-1]])
                counts.append(int(row[-1]))
            except ValueError as exc:
                raise DataError(str(exc), reader.line_num, source) from None
            names.append(row[0])
        return cls(np.array(rows).reshape(len(names), c), np.array(counts), np.zeros(len(names), dtype=int), tuple(names))


def training_subset(ds: PointDataset, split: SplitAssignment | None) -> PointDataset:
    """Training points of ``ds``; every category must keep at least one."""
    if split is None:
        return ds
    ids = split.ids("train")
    labels = np.array([ds.labels[ds.position(i)] for i in ids], dtype=np.int64)
    counts = np.bincount(labels, minlength=ds.n_categories)
    missing = [ds.categories[k].name for k in np.flatnonzero(counts == 0)]
    if missing:
        raise DataError(f"categories with no training points: {', '.join(missing)}")
    return ds.subset(ids)


def global_clq(ds: PointDataset, split: SplitAssignment | None, cfg: LclqConfig) -> GlobalClqTable:
    """Average LCLQ vector of each category over its training points.

    Vectors are computed against the training points only.  Isolated anchors
    are left out of the mean and counted in ``n_isolated``.
    """
    train = training_subset(ds, split)
    c = train.n_categories
    vectors = lclq_vectors(train, [int(i) for i in train.ids], cfg)
    sums = np.zeros((c, c))
    used = np.zeros(c, dtype=np.int64)
    isolated = np.zeros(c, dtype=np.int64)
    for label, v in zip(train.labels, vectors):
        if v.isolated:
            isolated[label] += 1
            continue
        sums[label] += v.values
        used[label] += 1
    rows = np.divide(sums, used[:, None], out=np.zeros_like(sums), where=used[:, None] > 0)
    return GlobalClqTable(rows, used, isolated, tuple(cat.name for cat in train.categories))


def cosine(u: np.ndarray, v: np.ndarray, floor: float = 1e-12) -> float:
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < floor or nv < floor:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def similarity_probs(vector: np.ndarray, table: GlobalClqTable, floor: float = 1e-12) -> np.ndarray:
    """Cosine similarity to each signature row, clamped at 0 and sum-normalized."""
    sims = np.array([max(cosine(vector, row, floor), 0.0) for row in table.rows])
    total = sims.sum()
    if total < floor:
        return np.full(len(sims), 1.0 / len(sims))
    return sims / total


def second_order_probs(ds: PointDataset, table: GlobalClqTable, x, cfg: LclqConfig) -> np.ndarray:
    if table.rows.shape[0] != ds.n_categories:
        raise ValueError("table row count does not match dataset categories")
    v = lclq_vector(ds, (float(x[0]), float(x[1])), cfg)
    return similarity_probs(v.values, table, cfg.weight_floor)


def second_order_table(ds: PointDataset, table: GlobalClqTable, points, cfg: LclqConfig) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    rows = map_ordered(lambda p: second_order_probs(ds, table, p, cfg), points)
    return np.array(rows).reshape(len(points), ds.n_categories)


def vectors_to_csv(vectors: list[LclqVector], n_categories: int) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["id"] + [f"v_{k}" for k in range(n_categories)] + ["isolated"])
    for v in vectors:
        writer.writerow([v.anchor] + [repr(float(x)) for x in v.values] + [int(v.isolated)])
    return buf.getvalue()
