"""End-to-end enhancement benchmark on synthetic clustered terrain classes.

Builds a segregated clustered dataset, a noisy visual classifier, both
locational probability tables, fits fusion weights on the validation split
and reports validation/test accuracy for four configurations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .colocation import LclqConfig, global_clq, second_order_table, training_subset
from .core import PointDataset, SplitAssignment, split_dataset
from .fusion import SOURCES, FusionWeights, ProbTable, fit_weights, predict, render_accuracy_table
from .intensity import KdeConfig, first_order_table
from .synth import OracleSpec, noisy_visual_table, segregated_dataset

CONFIGURATIONS = {
    "DCNN": ("visual",),
    "DCNN + 1st-order effect": ("visual", "first_order"),
    "DCNN + 2nd-order effect": ("visual", "second_order"),
    "DCNN + both effects": SOURCES,
}


def locational_tables(
    ds: PointDataset,
    split: SplitAssignment,
    ids,
    kde: KdeConfig,
    lclq: LclqConfig,
) -> tuple[ProbTable, ProbTable]:
    """First- and second-order probability tables for ``ids``.

    Both statistics are fit on the training split only; ``ids`` are treated
    as free query locations.
    """
    ids = np.array(sorted(int(i) for i in ids), dtype=np.int64)
    train = training_subset(ds, split)
    coords = ds.xy[[ds.position(i) for i in ids]]
    first = first_order_table(train, coords, kde)
    table = global_clq(ds, split, lclq)
    second = second_order_table(train, table, coords, lclq)
    return ProbTable(ids, first, "first_order"), ProbTable(ids, second, "second_order")


@dataclass(frozen=True)
class BenchmarkConfig:
    n: int = 6000
    seed: int = 0
    accuracy: float = 0.68
    concentration: float = 0.8
    fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)
    kde_bandwidth: float = 0.03
    lclq_bandwidth: float = 0.03
    cutoff_multiplier: float = 5.0
    step: float = 0.01
    parents_per_class: float = 12.0
    spread: float = 0.06

    def items(self) -> list[tuple[str, object]]:
        return list(self.__dict__.items())


@dataclass
class BenchmarkResult:
    rows: list[tuple[str, float, float]]
    weights: dict[str, FusionWeights] = field(default_factory=dict)

    def accuracy(self, name: str, split: str = "test") -> float:
        for row in self.rows:
            if row[0] == name:
                return row[2] if split == "test" else row[1]
        raise KeyError(name)

    def render(self) -> str:
        out = render_accuracy_table(self.rows)
        out += "\n"
        for name, w in self.weights.items():
            out += f"{name}: {w.to_text()}"
        return out


def _accuracy(tables, w: FusionWeights, truth, ids) -> float:
    fused = sum(k * t.rows(ids) for k, t in zip(w.as_array(), tables))
    pred = predict(fused)
    return float(np.mean(pred == np.array([truth[i] for i in ids])))


def run_benchmark(cfg: BenchmarkConfig = BenchmarkConfig()) -> BenchmarkResult:
    ds = segregated_dataset(cfg.n, cfg.seed, cfg.parents_per_class, cfg.spread)
    split = split_dataset(ds, cfg.fractions, cfg.seed)
    truth = {int(i): int(c) for i, c in zip(ds.ids, ds.labels)}
    val, test = split.ids("val"), split.ids("test")
    visual = noisy_visual_table(
        truth, ds.n_categories, OracleSpec(cfg.accuracy, cfg.concentration, cfg.seed + 1)
    )
    kde = KdeConfig(cfg.kde_bandwidth, cfg.cutoff_multiplier)
    lclq = LclqConfig(cfg.lclq_bandwidth, cfg.cutoff_multiplier)
    first, second = locational_tables(ds, split, val + test, kde, lclq)
    tables = (visual, first, second)

    result = BenchmarkResult([])
    for name, active in CONFIGURATIONS.items():
        w, _ = fit_weights(tables, truth, val, cfg.step, active)
        result.weights[name] = w
        result.rows.append((name, _accuracy(tables, w, truth, val), _accuracy(tables, w, truth, test)))
    return result
