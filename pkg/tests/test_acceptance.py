"""Acceptance gate: one test per criterion, each reporting a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` (add ``-s`` to see the lines
as they happen; they are repeated in the terminal summary either way).
"""

import filecmp
import math
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np
import pytest

from oracles import brute_density, brute_lclq, random_dataset
from sppa.benchmark import run_benchmark
from sppa.cli import main
from sppa.colocation import LclqConfig, lclq, mean_lclq, lclq_vectors, neighbor_fractions
from sppa.core import Category, PointDataset, PointRecord
from sppa.fusion import FusionWeights, ProbTable, fit_weights
from sppa.intensity import GridSpec, KdeConfig, density_at, first_order_probs
from sppa.synth import csr_dataset

RESULTS: list[str] = []


@contextmanager
def criterion(number, title):
    t0 = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        line = f"[{number}] FAIL {title} ({time.perf_counter() - t0:.2f}s): {type(exc).__name__}: {exc}"
        RESULTS.append(line.splitlines()[0])
        print(RESULTS[-1])
        raise
    RESULTS.append(f"[{number}] PASS {title} ({time.perf_counter() - t0:.2f}s)")
    print(RESULTS[-1])


def _seeded_sizes(k):
    rng = np.random.default_rng(10_000 + k)
    return int(rng.integers(50, 1001)), int(rng.integers(2, 7))


def test_kde_matches_double_loop():
    with criterion(1, "KDE oracle, 20 datasets x 100 queries, rel 1e-12, < 10 s"):
        t0 = time.perf_counter()
        worst = 0.0
        for k in range(20):
            n, c = _seeded_sizes(k)
            ds = random_dataset(k, n, c)
            rng = np.random.default_rng(500 + k)
            h = float(rng.uniform(0.02, 0.2))
            cfg = KdeConfig(h, truncation=False)
            for q in rng.uniform(-0.1, 1.1, (100, 2)):
                cat = int(rng.integers(0, c))
                got = density_at(ds, cat, q, cfg)
                want = brute_density(ds, cat, q, h)
                if want > 0:
                    worst = max(worst, abs(got - want) / want)
                else:
                    assert got == 0.0
        elapsed = time.perf_counter() - t0
        assert worst <= 1e-12, worst
        assert elapsed < 10, elapsed


def test_kde_mass():
    with criterion(2, "KDE mass 1 +/- 0.01, grid 6h beyond bbox, cell h/4"):
        for k in range(3):
            ds = random_dataset(40 + k, 200, 3)
            h = 0.05
            cfg = KdeConfig(h, truncation=False)
            cell = h / 4
            grid = GridSpec.covering(ds.bbox, cell, margin=6 * h)
            centers = grid.centers()
            for c in range(ds.n_categories):
                mass = sum(density_at(ds, c, q, cfg) for q in centers) * cell * cell
                assert abs(mass - 1) <= 0.01, (k, c, mass)


def test_lclq_matches_double_loop():
    with criterion(3, "LCLQ oracle, 20 datasets, rel 1e-12, fractions in [0,1] summing to 1"):
        worst = worst_sum = 0.0
        for k in range(20):
            n, c = _seeded_sizes(k)
            n = min(n, 400)
            ds = random_dataset(100 + k, n, c)
            rng = np.random.default_rng(900 + k)
            h = float(rng.uniform(0.05, 0.3))
            cfg = LclqConfig(h, truncation=False)
            anchors = rng.choice(ds.ids, size=15, replace=False)
            for a in anchors:
                frac = neighbor_fractions(ds, int(a), cfg).values
                assert np.all((frac >= 0) & (frac <= 1))
                worst_sum = max(worst_sum, abs(math.fsum(frac) - 1))
                for y in range(c):
                    want = brute_lclq(ds, int(a), y, h)
                    got = lclq(ds, int(a), y, cfg)
                    if want == 0:
                        assert got == 0
                    else:
                        worst = max(worst, abs(got - want) / want)
        assert worst <= 1e-12, worst
        # "exactly" read as: equal to 1 up to floating-point rounding of the sum
        assert worst_sum <= 4 * np.finfo(float).eps, worst_sum


def test_lclq_calibration_csr():
    with criterion(4, "LCLQ calibration under CSR, n=5000, mean in [0.95, 1.05], < 60 s"):
        t0 = time.perf_counter()
        ds = csr_dataset(5000, 3, seed=7)
        vecs = lclq_vectors(ds, ds.ids, LclqConfig(0.05))
        means = mean_lclq(vecs)
        elapsed = time.perf_counter() - t0
        assert np.all((means >= 0.95) & (means <= 1.05)), means
        assert elapsed < 60, elapsed


def _fixture_tables(ids, pv, p1, p2):
    return (ProbTable(ids, pv, "visual"), ProbTable(ids, p1, "first_order"), ProbTable(ids, p2, "second_order"))


def _dominance_fixtures():
    rng = np.random.default_rng(77)
    for k in range(25):
        c = int(rng.integers(2, 7))
        m = int(rng.integers(5, 120))
        y = rng.integers(0, c, m)
        probs = [rng.dirichlet(np.ones(c) * rng.uniform(0.3, 3), m) for _ in range(3)]
        dominant = None
        if k % 3 == 0:
            # one source is perfectly calibrated on the truth
            dominant = k % 9 // 3
            probs[dominant] = np.eye(c)[y] * 0.7 + 0.3 / c
        yield list(range(m)), y, probs, dominant


def test_fusion_dominance():
    with criterion(5, "fusion dominance on fixtures, equality under a dominant source"):
        sources = ("visual", "first_order", "second_order")
        for ids, y, probs, dominant in _dominance_fixtures():
            truth = dict(zip(ids, y.tolist()))
            w, report = fit_weights(_fixture_tables(ids, *probs), truth, ids, 0.01)
            assert report.accuracy >= max(report.corner_accuracy.values())
            if dominant is not None:
                assert report.accuracy == report.corner_accuracy[sources[dominant]] == 1.0
        # identical sources: every candidate ties, visual corner wins
        rng = np.random.default_rng(78)
        p = rng.dirichlet(np.ones(4), 30)
        ids = list(range(30))
        truth = dict(zip(ids, rng.integers(0, 4, 30).tolist()))
        w, report = fit_weights(_fixture_tables(ids, p, p, p), truth, ids, 0.01)
        assert w == FusionWeights(1.0, 0.0, 0.0)
        assert report.accuracy == report.corner_accuracy["visual"]


@pytest.mark.slow
def test_directional_benchmark():
    with criterion(6, "synthetic benchmark: +1st >= baseline + 0.02, both >= +1st - 0.005, < 5 min"):
        t0 = time.perf_counter()
        result = run_benchmark()
        elapsed = time.perf_counter() - t0
        print(result.render())
        base = result.accuracy("DCNN", "test")
        first = result.accuracy("DCNN + 1st-order effect", "test")
        both = result.accuracy("DCNN + both effects", "test")
        assert first >= base + 0.02, (base, first)
        assert both >= first - 0.005, (first, both)
        assert elapsed < 300, elapsed


def _pipeline(workdir: Path):
    steps = [
        ["synth", "--preset", "segregated", "--n", "1500", "--seed", "11", "--out", "data.csv",
         "--visual-out", "visual.csv"],
        ["split", "--dataset", "data.csv", "--seed", "11", "--out", "splits.csv"],
        ["locprobs", "--dataset", "data.csv", "--splits", "splits.csv", "--order", "first",
         "--kde-h", "0.04", "--out", "first.csv"],
        ["globalclq", "--dataset", "data.csv", "--splits", "splits.csv", "--h", "0.04", "--out", "gclq.csv"],
        ["locprobs", "--dataset", "data.csv", "--splits", "splits.csv", "--order", "second",
         "--h", "0.04", "--table", "gclq.csv", "--out", "second.csv"],
        ["fuse-fit", "--visual", "visual.csv", "--first", "first.csv", "--second", "second.csv",
         "--truth", "data.csv", "--splits", "splits.csv", "--out", "weights.txt", "--report", "fit.txt"],
        ["evaluate", "--visual", "visual.csv", "--first", "first.csv", "--second", "second.csv",
         "--weights", "weights.txt", "--truth", "data.csv", "--splits", "splits.csv",
         "--out", "report.txt", "--csv", "report.csv"],
        ["intensity", "--dataset", "data.csv", "--splits", "splits.csv", "--category", "lake",
         "--kde-h", "0.04", "--grid-cells", "48", "--out", "lake.csv"],
        ["heatmap", "--raster", "lake.csv", "--mode", "pgm16", "--out", "lake.pgm"],
        ["heatmap", "--dataset", "data.csv", "--category", "bay", "--kde-h", "0.04", "--out", "bay.pgm"],
    ]
    for argv in steps:
        assert main(argv) == 0, argv


def test_pipeline_determinism(tmp_path, monkeypatch):
    with criterion(7, "full CLI pipeline twice: byte-identical outputs"):
        runs = []
        for name, threads in (("run_a", "0"), ("run_b", "1")):
            monkeypatch.setenv("SPPA_THREADS", threads)
            d = tmp_path / name
            d.mkdir()
            monkeypatch.chdir(d)
            _pipeline(d)
            runs.append(d)
        names = sorted(p.name for p in runs[0].iterdir())
        assert names == sorted(p.name for p in runs[1].iterdir())
        kinds = {Path(n).suffix for n in names}
        assert {".csv", ".pgm", ".txt", ".meta"} <= kinds
        match, mismatch, errors = filecmp.cmpfiles(runs[0], runs[1], names, shallow=False)
        assert not mismatch and not errors, (mismatch, errors)


def _scaled(ds, s):
    recs = tuple(PointRecord(r.id, r.x * s, r.y * s, r.category) for r in ds.records)
    return PointDataset(recs, tuple(Category(c.index, c.name) for c in ds.categories))


def test_scale_invariance():
    with criterion(8, "x1000 scaling of coordinates and bandwidths, tol 1e-9"):
        s = 1000.0
        for k in range(3):
            ds = random_dataset(300 + k, 600, 4)
            big = _scaled(ds, s)
            h_kde, h_lclq = 0.06, 0.09
            for a, b in zip(lclq_vectors(ds, ds.ids, LclqConfig(h_lclq)),
                            lclq_vectors(big, big.ids, LclqConfig(h_lclq * s))):
                assert a.isolated == b.isolated
                np.testing.assert_allclose(b.values, a.values, rtol=1e-9, atol=1e-9)
            rng = np.random.default_rng(k)
            for q in rng.uniform(0, 1, (200, 2)):
                p = first_order_probs(ds, q, KdeConfig(h_kde))
                p_big = first_order_probs(big, q * s, KdeConfig(h_kde * s))
                np.testing.assert_allclose(p_big, p, rtol=1e-9, atol=1e-9)
