"""Seeded synthetic point processes and a noisy stand-in for an image classifier.

Every generator draws from ``numpy.random.default_rng(seed)`` (PCG64); the
name is exported as :data:`RNG_NAME` so run manifests can record it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import BBox, Category, PointDataset, PointRecord
from .fusion import ProbTable

RNG_NAME = "numpy.random.default_rng/PCG64"
UNIT_SQUARE = BBox(0.0, 0.0, 1.0, 1.0)

# category distribution of the GNIS-derived terrain dataset (records per class)
TERRAIN_COUNTS = {
    "basin": 1958,
    "bay": 5058,
    "island": 12558,
    "lake": 47018,
    "ridge": 12610,
    "valley": 3667,
}


@dataclass(frozen=True)
class ProcessSpec:
    variant: str
    region: BBox = UNIT_SQUARE
    intensity: float = 0.0
    parent_intensity: float = 0.0
    mean_offspring: float = 0.0
    spread: float = 0.0
    category: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.variant == "homogeneous_poisson":
            if not self.intensity > 0:
                raise ValueError("intensity must be positive")
        elif self.variant == "thomas_cluster":
            if not (self.parent_intensity > 0 and self.mean_offspring > 0):
                raise ValueError("parent intensity and mean offspring must be positive")
            if not self.spread > 0:
                raise ValueError("spread must be positive")
        else:
            raise ValueError(f"unknown process variant {self.variant!r}")
        r = self.region
        if not (r.xmax > r.xmin and r.ymax > r.ymin):
            raise ValueError("region must have positive area")

    @property
    def area(self) -> float:
        r = self.region
        return (r.xmax - r.xmin) * (r.ymax - r.ymin)


def _uniform(rng: np.random.Generator, region: BBox, n: int) -> np.ndarray:
    xs = rng.uniform(region.xmin, region.xmax, n)
    ys = rng.uniform(region.ymin, region.ymax, n)
    return np.column_stack([xs, ys])


def _inside(p: np.ndarray, region: BBox) -> np.ndarray:
    return (
        (p[:, 0] >= region.xmin) & (p[:, 0] <= region.xmax)
        & (p[:, 1] >= region.ymin) & (p[:, 1] <= region.ymax)
    )


def _thomas(rng: np.random.Generator, region: BBox, kappa: float, mu: float, sigma: float):
    """Offspring coordinates, parent coordinates and each offspring's parent row."""
    area = (region.xmax - region.xmin) * (region.ymax - region.ymin)
    parents = _uniform(rng, region, rng.poisson(kappa * area))
    kids_all, owner = [np.empty((0, 2))], [np.empty(0, dtype=np.int64)]
    for k, parent in enumerate(parents):
        n_kids = rng.poisson(mu)
        kids = parent + rng.normal(0.0, sigma, (n_kids, 2))
        # redraw escaped offspring around the same parent
        bad = ~_inside(kids, region)
        while bad.any():
            kids[bad] = parent + rng.normal(0.0, sigma, (int(bad.sum()), 2))
            bad = ~_inside(kids, region)
        kids_all.append(kids)
        owner.append(np.full(n_kids, k, dtype=np.int64))
    return np.concatenate(kids_all), parents, np.concatenate(owner)


def thomas_realisation(spec: ProcessSpec):
    """``(offspring, parents, parent_of_offspring)`` for a Thomas spec."""
    if spec.variant != "thomas_cluster":
        raise ValueError("not a thomas_cluster spec")
    rng = np.random.default_rng(spec.seed)
    return _thomas(rng, spec.region, spec.parent_intensity, spec.mean_offspring, spec.spread)


def gen_coords(spec: ProcessSpec) -> np.ndarray:
    if spec.variant == "homogeneous_poisson":
        rng = np.random.default_rng(spec.seed)
        return _uniform(rng, spec.region, rng.poisson(spec.intensity * spec.area))
    return thomas_realisation(spec)[0]


def gen_points(spec: ProcessSpec, first_id: int = 0) -> list[PointRecord]:
    """One realisation of the process, ids numbered from ``first_id``."""
    coords = gen_coords(spec)
    return [
        PointRecord(first_id + k, float(x), float(y), spec.category)
        for k, (x, y) in enumerate(coords)
    ]


def thomas_fixed_count(
    n: int, parent_intensity: float, spread: float, region: BBox, seed: int
) -> np.ndarray:
    """First ``n`` points of a stream of independent Thomas realisations.

    Offspring means are set so one realisation averages ``n`` points; further
    realisations are appended only when the first falls short.
    """
    area = (region.xmax - region.xmin) * (region.ymax - region.ymin)
    mu = n / (parent_intensity * area)
    rng = np.random.default_rng(seed)
    parts, total = [], 0
    while total < n:
        batch = _thomas(rng, region, parent_intensity, mu, spread)[0]
        parts.append(batch)
        total += len(batch)
    return np.concatenate(parts)[:n]


def apportion(n: int, weights: Sequence[float]) -> list[int]:
    """Split ``n`` into integer parts proportional to ``weights`` (largest remainder)."""
    total = float(sum(weights))
    exact = [n * w / total for w in weights]
    parts = [math.floor(e) for e in exact]
    order = sorted(range(len(exact)), key=lambda k: (-(exact[k] - parts[k]), k))
    for k in order[: n - sum(parts)]:
        parts[k] += 1
    return parts


def csr_dataset(n: int, n_categories: int, seed: int, region: BBox = UNIT_SQUARE) -> PointDataset:
    """``n`` uniform points with independent uniform labels.

    This is a homogeneous Poisson process conditioned on its count; under it
    every category's mean LCLQ should sit near 1.
    """
    rng = np.random.default_rng(seed)
    coords = _uniform(rng, region, n)
    labels = rng.integers(0, n_categories, n)
    records = [PointRecord(k + 1, float(x), float(y), int(c)) for k, ((x, y), c) in enumerate(zip(coords, labels))]
    cats = [Category(k, f"c{k}") for k in range(n_categories)]
    return PointDataset(tuple(records), tuple(cats))


def segregated_dataset(
    n: int = 6000,
    seed: int = 0,
    parents_per_class: float = 12.0,
    spread: float = 0.06,
    class_weights: Mapping[str, float] = TERRAIN_COUNTS,
    region: BBox = UNIT_SQUARE,
) -> PointDataset:
    """Clustered classes, each with its own Thomas parents.

    Class sizes follow ``class_weights`` (terrain record counts by default).
    Each class uses seed ``seed * 1000 + class_index``.
    """
    names = list(class_weights)
    sizes = apportion(n, [class_weights[k] for k in names])
    kappa = parents_per_class / ((region.xmax - region.xmin) * (region.ymax - region.ymin))
    records, next_id = [], 1
    for c, size in enumerate(sizes):
        coords = thomas_fixed_count(size, kappa, spread, region, seed * 1000 + c)
        for x, y in coords:
            records.append(PointRecord(next_id, float(x), float(y), c))
            next_id += 1
    return PointDataset(tuple(records), tuple(Category(k, name) for k, name in enumerate(names)))


@dataclass(frozen=True)
class OracleSpec:
    accuracy: float
    concentration: float
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.accuracy <= 1:
            raise ValueError("accuracy must lie in (0, 1]")
        if not 0 < self.concentration <= 1:
            raise ValueError("concentration must lie in (0, 1]")


def noisy_visual_table(truth: Mapping[int, int], n_categories: int, spec: OracleSpec) -> ProbTable:
    """Simulated classifier output with expected top-1 accuracy ``spec.accuracy``.

    Each record emits its true label with probability ``accuracy`` and a
    uniformly chosen wrong label otherwise.  The emitted label gets mass
    ``concentration``; the rest is spread evenly.
    """
    c = int(n_categories)
    if c < 2:
        raise ValueError("need at least two categories")
    if not spec.concentration > 1.0 / c:
        raise ValueError(f"concentration must exceed 1/C = {1.0 / c:.6g}")
    ids = np.array(sorted(truth), dtype=np.int64)
    y = np.array([truth[int(i)] for i in ids], dtype=np.int64)
    rng = np.random.default_rng(spec.seed)
    hit = rng.random(len(ids)) < spec.accuracy
    wrong = rng.integers(0, c - 1, len(ids))
    wrong = wrong + (wrong >= y)
    emitted = np.where(hit, y, wrong)
    probs = np.full((len(ids), c), (1.0 - spec.concentration) / (c - 1))
    probs[np.arange(len(ids)), emitted] = spec.concentration
    return ProbTable(ids, probs, "visual")
