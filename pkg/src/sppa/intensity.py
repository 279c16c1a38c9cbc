"""First-order statistics: per-category Gaussian kernel density.

The density of category ``c`` at ``x`` is::

    lambda_c(x) = 1 / (n_c h^2) * sum_{i in c} K(|x - x_i| / h)

with the radial 2-D Gaussian ``K(u) = exp(-u^2/2) / (2 pi)``, so each
per-category surface integrates to one over the plane.  Classification uses
count-weighted scores ``S_c = n_c * lambda_c`` so that class prevalence
shapes the prior.  No edge correction is applied; densities are biased low
within a few bandwidths of the data boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._parallel import map_ordered
from .core import BBox, PointDataset

TWO_PI = 2.0 * math.pi
UNDERFLOW = 1e-300


@dataclass(frozen=True)
class KdeConfig:
    bandwidth: float
    cutoff_multiplier: float = 5.0
    truncation: bool = True

    def __post_init__(self):
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth!r}")
        if self.truncation and not self.cutoff_multiplier >= 3:
            raise ValueError("cutoff_multiplier must be >= 3 when truncation is enabled")

    @property
    def radius(self) -> float:
        """Kernel support radius; infinite when truncation is off."""
        return self.cutoff_multiplier * self.bandwidth if self.truncation else math.inf

    def error_bound(self) -> float:
        """Upper bound on the absolute density lost to truncation.

        Every omitted point lies beyond ``cutoff_multiplier * h``, so it
        contributes at most ``K(cutoff_multiplier) / (n_c h^2)``; there are at
        most ``n_c`` of them.
        """
        if not self.truncation:
            return 0.0
        return float(kernel_gauss2d(self.cutoff_multiplier)) / self.bandwidth**2


def default_bandwidth(bbox: BBox) -> float:
    """5% of the bbox diagonal (1.0 for a degenerate bbox)."""
    diag = bbox.diagonal
    return 0.05 * diag if diag > 0 else 1.0


def kernel_gauss2d(u):
    """Radial 2-D Gaussian kernel ``exp(-u^2/2) / (2 pi)``."""
    return np.exp(-0.5 * np.square(u)) / TWO_PI


def neighbor_positions(ds: PointDataset, x, radius: float) -> np.ndarray:
    """Dataset positions within ``radius`` of ``x`` in ascending-id order."""
    if math.isinf(radius):
        return np.arange(len(ds))
    return ds.index(radius).query_positions(x, radius)


def _exp_weights(ds: PointDataset, pos: np.ndarray, x, h: float) -> np.ndarray:
    d = ds.xy[pos] - np.asarray(x, dtype=np.float64)
    return np.exp(-0.5 * (d[:, 0] ** 2 + d[:, 1] ** 2) / (h * h))


def _check_category(ds: PointDataset, c: int) -> int:
    c = int(c)
    if not 0 <= c < ds.n_categories:
        raise ValueError(f"category {c} absent from dataset")
    return c


def density_at(ds: PointDataset, c: int, x, cfg: KdeConfig) -> float:
    """Kernel density of category ``c`` at location ``x``.

    With truncation on, points beyond ``cfg.radius`` are skipped; the
    absolute error is at most ``cfg.error_bound()``.
    """
    c = _check_category(ds, c)
    pos = neighbor_positions(ds, x, cfg.radius)
    pos = pos[ds.labels[pos] == c]
    h = cfg.bandwidth
    total = np.sum(_exp_weights(ds, pos, x, h))
    return float(total / (TWO_PI * ds.counts[c] * h * h))


def class_scores_at(ds: PointDataset, x, cfg: KdeConfig) -> np.ndarray:
    """Count-weighted scores ``S_c(x) = n_c * density_at(c, x)`` for every c."""
    pos = neighbor_positions(ds, x, cfg.radius)
    h = cfg.bandwidth
    w = _exp_weights(ds, pos, x, h)
    sums = np.bincount(ds.labels[pos], weights=w, minlength=ds.n_categories)
    return sums / (TWO_PI * h * h)


def scores_to_probs(scores: np.ndarray) -> np.ndarray:
    total = scores.sum()
    if not total >= UNDERFLOW:
        return np.full(len(scores), 1.0 / len(scores))
    return scores / total


def first_order_probs(ds: PointDataset, x, cfg: KdeConfig) -> np.ndarray:
    """Normalized class scores at ``x``; uniform where every score underflows."""
    return scores_to_probs(class_scores_at(ds, x, cfg))


def first_order_table(ds: PointDataset, points, cfg: KdeConfig) -> np.ndarray:
    """``first_order_probs`` for each row of an ``(m, 2)`` array."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    rows = map_ordered(lambda p: first_order_probs(ds, p, cfg), points)
    return np.array(rows).reshape(len(points), ds.n_categories)


@dataclass(frozen=True)
class GridSpec:
    x0: float
    y0: float
    cell_size: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise ValueError("cell_size must be positive")
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError("grid width and height must be positive")
        if not (math.isfinite(self.x0) and math.isfinite(self.y0)):
            raise ValueError("grid origin must be finite")

    def centers(self) -> np.ndarray:
        """``(height * width, 2)`` cell centers, row-major from the bottom row."""
        xs = self.x0 + (np.arange(self.width) + 0.5) * self.cell_size
        ys = self.y0 + (np.arange(self.height) + 0.5) * self.cell_size
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])

    @classmethod
    def covering(cls, bbox: BBox, cell_size: float, margin: float = 0.0) -> "GridSpec":
        """Smallest grid of ``cell_size`` cells covering ``bbox`` grown by ``margin``."""
        x0, y0 = bbox.xmin - margin, bbox.ymin - margin
        width = max(1, math.ceil((bbox.xmax + margin - x0) / cell_size))
        height = max(1, math.ceil((bbox.ymax + margin - y0) / cell_size))
        return cls(x0, y0, cell_size, width, height)

    @classmethod
    def fit(cls, bbox: BBox, cells: int, margin: float = 0.0) -> "GridSpec":
        """Grid with ``cells`` cells along the longer side of the grown bbox."""
        span = max(bbox.xmax - bbox.xmin, bbox.ymax - bbox.ymin) + 2 * margin
        if span <= 0:
            span = 1.0
        return cls.covering(bbox, span / cells, margin)


@dataclass(frozen=True, eq=False)
class Raster:
    """Density sampled at cell centers; ``values[row, col]``, row 0 at the bottom."""

    grid: GridSpec
    values: np.ndarray
    category: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.grid.height, self.grid.width):
            raise ValueError("raster values do not match grid shape")
        if not (np.all(np.isfinite(values)) and np.all(values >= 0)):
            raise ValueError("raster values must be finite and nonnegative")
        object.__setattr__(self, "values", values)


def intensity_raster(ds: PointDataset, c: int, grid: GridSpec, cfg: KdeConfig) -> Raster:
    c = _check_category(ds, c)
    vals = map_ordered(lambda p: density_at(ds, c, p, cfg), grid.centers())
    return Raster(grid, np.array(vals).reshape(grid.height, grid.width), c)
