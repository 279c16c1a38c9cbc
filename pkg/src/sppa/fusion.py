"""Probability tables, convex fusion of three sources, and accuracy reports."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .core import DataError

SOURCES = ("visual", "first_order", "second_order")
PROB_FLOOR = 1e-12
SUM_TOL = 1e-9
# cross-entropy differences below this are treated as ties
CE_TIE_TOL = 1e-12


def _validate_probs(p: np.ndarray) -> None:
    if p.ndim != 2:
        raise ValueError("probabilities must be a 2-D array")
    if not np.all(np.isfinite(p)) or np.any(p < 0) or np.any(p > 1 + SUM_TOL):
        raise ValueError("probabilities must be finite and within [0, 1]")
    bad = np.flatnonzero(np.abs(p.sum(axis=1) - 1.0) > SUM_TOL)
    if len(bad):
        raise ValueError(f"row {int(bad[0])} does not sum to 1")


@dataclass(frozen=True, eq=False)
class ProbTable:
    """Per-record category probabilities from one source."""

    ids: np.ndarray
    probs: np.ndarray
    source: str = "visual"
    _pos: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64)
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim == 1:
            probs = probs.reshape(len(ids), -1)
        if len(ids) != len(probs):
            raise ValueError("ids and probability rows differ in length")
        if len(np.unique(ids)) != len(ids):
            raise ValueError("duplicate ids in probability table")
        if self.source not in SOURCES + ("fused",):
            raise ValueError(f"unknown source {self.source!r}")
        _validate_probs(probs)
        order = np.argsort(ids, kind="stable")
        object.__setattr__(self, "ids", ids[order])
        object.__setattr__(self, "probs", probs[order])
        self._pos.update({int(i): k for k, i in enumerate(self.ids)})

    @property
    def n_categories(self) -> int:
        return self.probs.shape[1]

    def __len__(self) -> int:
        return len(self.ids)

    def __getitem__(self, record_id: int) -> np.ndarray:
        return self.probs[self._pos[int(record_id)]]

    def rows(self, ids: Sequence[int]) -> np.ndarray:
        try:
            return self.probs[[self._pos[int(i)] for i in ids]]
        except KeyError as exc:
            raise DataError(f"id {exc.args[0]} missing from {self.source} table") from None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["id"] + [f"p_{k}" for k in range(self.n_categories)])
        for rid, row in zip(self.ids, self.probs):
            writer.writerow([int(rid)] + [repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, stream, source: str = "visual", name: str | None = None) -> "ProbTable":
        reader = csv.reader(stream)
        header = next(reader, None)
        if not header or header[0].strip() != "id" or len(header) < 2:
            raise DataError("expected header id,p_0,...", 1, name)
        expected = ["id"] + [f"p_{k}" for k in range(len(header) - 1)]
        if [h.strip() for h in header] != expected:
            raise DataError(f"expected header {','.join(expected)}", 1, name)
        ids, rows = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"expected {len(header)} fields, got {len(row)}", reader.line_num, name)
            try:
                ids.append(int(row[0]))
                vals = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise DataError(str(exc), reader.line_num, name) from None
            p = np.array(vals)
            if not np.all(np.isfinite(p)) or np.any(p < 0) or abs(p.sum() - 1.0) > SUM_TOL:
                raise DataError("not a probability vector", reader.line_num, name)
            rows.append(vals)
        if not rows:
            raise DataError("probability table has no rows", None, name)
        return cls(np.array(ids), np.array(rows), source)


def read_prob_table(path, source: str = "visual") -> ProbTable:
    with open(path, newline="", encoding="utf-8") as fh:
        return ProbTable.from_csv(fh, source, str(path))


@dataclass(frozen=True)
class FusionWeights:
    w_vis: float
    w_1st: float
    w_2nd: float

    def __post_init__(self):
        w = self.as_array()
        if np.any(w < 0) or not np.all(np.isfinite(w)) or abs(w.sum() - 1.0) > SUM_TOL:
            raise ValueError(f"weights {tuple(w)} are not on the simplex")

    def as_array(self) -> np.ndarray:
        return np.array([self.w_vis, self.w_1st, self.w_2nd], dtype=np.float64)

    def to_text(self) -> str:
        return f"w_vis={self.w_vis:.10g} w_1st={self.w_1st:.10g} w_2nd={self.w_2nd:.10g}\n"

    @classmethod
    def from_text(cls, text: str) -> "FusionWeights":
        values = {}
        for token in text.split():
            key, sep, val = token.partition("=")
            if not sep:
                raise DataError(f"bad weights token {token!r}")
            try:
                values[key] = float(val)
            except ValueError:
                raise DataError(f"bad weight value {val!r}") from None
        try:
            return cls(values["w_vis"], values["w_1st"], values["w_2nd"])
        except KeyError as exc:
            raise DataError(f"weights file lacks {exc.args[0]}") from None


def fuse(w: FusionWeights, pv, p1, p2) -> np.ndarray:
    """Weighted sum of three probability vectors (or row-aligned matrices)."""
    pv, p1, p2 = (np.asarray(p, dtype=np.float64) for p in (pv, p1, p2))
    if not (pv.shape == p1.shape == p2.shape):
        raise ValueError(f"shape mismatch: {pv.shape}, {p1.shape}, {p2.shape}")
    return w.w_vis * pv + w.w_1st * p1 + w.w_2nd * p2


def predict(p) -> int | np.ndarray:
    """Argmax category; ties go to the lowest index."""
    p = np.asarray(p)
    out = np.argmax(p, axis=-1)
    return int(out) if p.ndim == 1 else out


def lattice(step: float, active: Sequence[str] = SOURCES) -> list[tuple[float, float, float]]:
    """Simplex lattice ``(a*step, b*step, 1-(a+b)*step)`` plus the three corners.

    Candidates that give weight to a source outside ``active`` are dropped.
    """
    if not 0 < step <= 0.5:
        raise ValueError("step must be in (0, 0.5]")
    bad = set(active) - set(SOURCES)
    if bad or not active:
        raise ValueError(f"active sources must be a nonempty subset of {SOURCES}")
    k = math.floor(1.0 / step + 1e-9)
    points = []
    for a in range(k + 1):
        for b in range(k + 1 - a):
            points.append((a * step, b * step, max(0.0, 1.0 - (a + b) * step)))
    for corner in ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0)):
        if corner not in points:
            points.append(corner)
    mask = [s in active for s in SOURCES]
    return [p for p in points if all(m or v == 0 for m, v in zip(mask, p))]


@dataclass
class FitReport:
    weights: FusionWeights
    accuracy: float
    cross_entropy: float
    corner_accuracy: dict[str, float]
    n_candidates: int
    n_samples: int

    def render(self) -> str:
        lines = [f"samples={self.n_samples}", f"candidates={self.n_candidates}"]
        for name, acc in self.corner_accuracy.items():
            lines.append(f"corner_accuracy[{name}]={acc:.6f}")
        lines.append(f"fitted_accuracy={self.accuracy:.6f}")
        lines.append(f"fitted_cross_entropy={self.cross_entropy:.6f}")
        w = self.weights
        lines += [f"fitted_w_vis={w.w_vis:.10g}", f"fitted_w_1st={w.w_1st:.10g}", f"fitted_w_2nd={w.w_2nd:.10g}"]
        return "\n".join(lines) + "\n"


def _score(stack: np.ndarray, w, truth: np.ndarray) -> tuple[int, float]:
    fused = np.tensordot(w, stack, axes=1)
    correct = int(np.count_nonzero(np.argmax(fused, axis=1) == truth))
    p_true = fused[np.arange(len(truth)), truth]
    ce = float(np.mean(-np.log(np.maximum(p_true, PROB_FLOOR))))
    return correct, ce


def fit_weights(
    tables: Sequence[ProbTable],
    truth: Mapping[int, int],
    ids: Sequence[int],
    step: float = 0.01,
    active: Sequence[str] = SOURCES,
) -> tuple[FusionWeights, FitReport]:
    """Exhaustive lattice search for the most accurate fusion weights.

    Ties on accuracy go to the lower mean cross-entropy of the true class,
    then to the larger visual weight, then to the larger first-order weight.
    Because the corners are candidates, the winner is never less accurate
    than the best single source on ``ids``.
    """
    if len(tables) != 3:
        raise ValueError("need visual, first-order and second-order tables")
    ids = [int(i) for i in ids]
    if not ids:
        raise ValueError("no ids to fit on")
    try:
        y = np.array([truth[i] for i in ids], dtype=np.int64)
    except KeyError as exc:
        raise DataError(f"id {exc.args[0]} has no ground truth") from None
    stack = np.stack([t.rows(ids) for t in tables])
    if y.max() >= stack.shape[2] or y.min() < 0:
        raise DataError("ground-truth category outside probability table width")

    candidates = lattice(step, active)
    scored = [(w, *_score(stack, np.array(w), y)) for w in candidates]
    best_correct = max(s[1] for s in scored)
    top = [s for s in scored if s[1] == best_correct]
    best_ce = min(s[2] for s in top)
    top = [s for s in top if s[2] <= best_ce + CE_TIE_TOL * max(1.0, abs(best_ce))]
    w, correct, ce = max(top, key=lambda s: (s[0][0], s[0][1]))
    weights = FusionWeights(*w)

    corners = {}
    for name, k in zip(SOURCES, range(3)):
        corner = np.zeros(3)
        corner[k] = 1.0
        corners[name] = _score(stack, corner, y)[0] / len(ids)
    report = FitReport(weights, correct / len(ids), ce, corners, len(candidates), len(ids))
    return weights, report


@dataclass(frozen=True, eq=False)
class EvalReport:
    accuracy: float
    per_category: np.ndarray
    confusion: np.ndarray
    n_samples: int
    category_names: tuple[str, ...] = ()

    def _names(self) -> list[str]:
        if self.category_names:
            return list(self.category_names)
        return [str(k) for k in range(len(self.confusion))]

    def render(self) -> str:
        names = self._names()
        width = max(8, *(len(n) for n in names))
        lines = [f"samples  {self.n_samples}", f"accuracy {self.accuracy:.3f}", ""]
        lines.append(f"{'category':<{width}} {'n':>6} {'accuracy':>8}")
        for k, name in enumerate(names):
            n = int(self.confusion[k].sum())
            acc = "-" if n == 0 else f"{self.per_category[k]:.3f}"
            lines.append(f"{name:<{width}} {n:>6} {acc:>8}")
        lines.append("")
        lines.append("confusion (rows = truth, columns = prediction)")
        cell = max(6, len(str(int(self.confusion.max(initial=0)))) + 1)
        lines.append(" " * width + "".join(f"{k:>{cell}}" for k in range(len(names))))
        for k, name in enumerate(names):
            lines.append(f"{name:<{width}}" + "".join(f"{int(v):>{cell}}" for v in self.confusion[k]))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        names = self._names()
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["category", "n", "correct", "accuracy"] + [f"pred_{k}" for k in range(len(names))])
        for k, name in enumerate(names):
            n = int(self.confusion[k].sum())
            acc = "" if n == 0 else f"{self.per_category[k]:.6f}"
            writer.writerow([name, n, int(self.confusion[k, k]), acc] + [int(v) for v in self.confusion[k]])
        correct = int(np.trace(self.confusion))
        writer.writerow(["overall", self.n_samples, correct, f"{self.accuracy:.6f}"] + [""] * len(names))
        return buf.getvalue()


def evaluate(
    preds: Mapping[int, int],
    truth: Mapping[int, int],
    n_categories: int,
    category_names: Sequence[str] = (),
) -> EvalReport:
    if set(preds) != set(truth):
        raise ValueError("prediction and truth ids differ")
    if not preds:
        raise ValueError("nothing to evaluate")
    confusion = np.zeros((n_categories, n_categories), dtype=np.int64)
    for i in sorted(truth):
        confusion[truth[i], preds[i]] += 1
    totals = confusion.sum(axis=1)
    per_cat = np.divide(
        np.diag(confusion), totals, out=np.full(n_categories, np.nan), where=totals > 0
    )
    n = int(confusion.sum())
    return EvalReport(float(np.trace(confusion) / n), per_cat, confusion, n, tuple(category_names))


def render_accuracy_table(rows: Sequence[tuple[str, float, float]]) -> str:
    """Configuration / validation / testing accuracy table, three decimals."""
    width = max(len("Configuration"), *(len(r[0]) for r in rows))
    lines = [f"{'Configuration':<{width}}  Validation Accuracy  Testing Accuracy"]
    for name, val, test in rows:
        lines.append(f"{name:<{width}}  {val:>19.3f}  {test:>16.3f}")
    return "\n".join(lines) + "\n"
