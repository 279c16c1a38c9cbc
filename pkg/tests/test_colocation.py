import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_lclq, plain_points, random_dataset
from sppa.colocation import (
    GlobalClqTable,
    LclqConfig,
    cosine,
    global_clq,
    lclq,
    lclq_vector,
    lclq_vectors,
    neighbor_fraction,
    neighbor_fractions,
    second_order_probs,
    similarity_probs,
    vectors_to_csv,
    weight,
)
from sppa.core import Category, DataError, PointDataset, PointRecord, SplitAssignment, ingest_csv

EXACT = dict(truncation=False)


def _ds(text):
    return ingest_csv(io.StringIO("id,x,y,category\n" + text))


def _table(rows):
    rows = np.asarray(rows, dtype=float)
    c = len(rows)
    return GlobalClqTable(rows, np.ones(c, dtype=int), np.zeros(c, dtype=int), tuple(f"k{k}" for k in range(c)))


class TestWeight:
    def test_values(self):
        assert weight(0.0, 2.0) == 1.0
        assert weight(2.0, 2.0) == pytest.approx(0.6065307, abs=1e-7)
        assert weight(10.0, 2.0) == pytest.approx(3.727e-6, rel=1e-3)
        assert weight(10.0, 2.0) == pytest.approx(math.exp(-12.5), rel=1e-15)

    def test_decreasing(self):
        d = np.linspace(0, 20, 300)
        w = weight(d, 1.5)
        assert np.all(np.diff(w) < 0) and np.all(w > 0) and np.all(w <= 1)


class TestNeighborFraction:
    def test_all_neighbors_b(self, abb):
        cfg = LclqConfig(1.0)
        assert neighbor_fraction(abb, 1, 1, cfg) == 1.0
        assert neighbor_fraction(abb, 1, 0, cfg) == 0.0

    def test_matches_weighted_average_oracle(self):
        ds = random_dataset(41, 50, 3)
        h = 0.2
        cfg = LclqConfig(h, **EXACT)
        pts = plain_points(ds)
        for i, ax, ay, _ in pts:
            weights = [(math.exp(-0.5 * ((x - ax) ** 2 + (y - ay) ** 2) / h**2), c) for j, x, y, c in pts if j != i]
            den = sum(w for w, _ in weights)
            for y_cat in range(3):
                expected = sum(w for w, c in weights if c == y_cat) / den
                assert neighbor_fraction(ds, i, y_cat, cfg) == pytest.approx(expected, rel=1e-12, abs=1e-300)

    def test_free_anchor_includes_coincident_point(self, abb):
        cfg = LclqConfig(1.0)
        assert neighbor_fraction(abb, (0.0, 0.0), 0, cfg) > 0
        assert neighbor_fraction(abb, 1, 0, cfg) == 0

    def test_isolation(self):
        ds = _ds("1,0,0,A\n2,100,0,B\n3,100,1,B\n")
        frac = neighbor_fractions(ds, 1, LclqConfig(1.0))
        assert frac.isolated and not frac.values.any()

    def test_unknown_id(self, abb):
        with pytest.raises(KeyError):
            neighbor_fraction(abb, 99, 0, LclqConfig(1.0))

    def test_point_anchor_needs_two_points(self):
        with pytest.raises(ValueError):
            neighbor_fraction(_ds("1,0,0,A\n"), 1, 0, LclqConfig(1.0))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 100_000), st.integers(2, 60), st.integers(1, 6), st.floats(0.01, 2.0), st.booleans())
    def test_range_and_sum_rule(self, seed, n, c, h, trunc):
        c = min(c, n)
        ds = random_dataset(seed, n, c)
        cfg = LclqConfig(h, truncation=trunc)
        for rid in ds.ids[:10]:
            frac = neighbor_fractions(ds, int(rid), cfg)
            assert np.all((frac.values >= 0) & (frac.values <= 1))
            if not frac.isolated:
                assert abs(math.fsum(frac.values) - 1.0) <= 2e-15


class TestLclq:
    def test_examples(self, abb):
        cfg = LclqConfig(1.0)
        assert lclq(abb, 1, 1, cfg) == 1.0
        assert lclq(abb, 1, 0, cfg) == 0.0
        assert list(lclq_vector(abb, 1, cfg).values) == [0.0, 1.0]

    def test_single_category(self):
        ds = _ds("1,0,0,a\n2,1,0,a\n3,0,1,a\n4,1,1,a\n")
        for rid in range(1, 5):
            assert lclq(ds, rid, 0, LclqConfig(0.7)) == pytest.approx(0.75, rel=1e-15)

    def test_isolated_vector(self):
        ds = _ds("1,0,0,A\n2,100,0,B\n3,100,1,B\n")
        v = lclq_vector(ds, 1, LclqConfig(1.0))
        assert v.isolated
        assert list(v.values) == [0.0, 0.0]

    def test_vector_entries_match_scalar_calls(self):
        ds = random_dataset(42, 120, 4)
        cfg = LclqConfig(0.1)
        for rid in ds.ids[:30]:
            v = lclq_vector(ds, int(rid), cfg)
            assert [lclq(ds, int(rid), c, cfg) for c in range(4)] == list(v.values)

    def test_matches_double_loop(self):
        ds = random_dataset(43, 300, 4)
        cfg = LclqConfig(0.07, **EXACT)
        for rid in ds.ids[::7]:
            for c in range(4):
                assert lclq(ds, int(rid), c, cfg) == pytest.approx(brute_lclq(ds, int(rid), c, 0.07), rel=1e-12)

    def test_self_correction(self):
        ds = _ds("1,0,0,A\n2,0,1,A\n3,0,2,B\n4,1,0,B\n")
        plain = lclq_vector(ds, 1, LclqConfig(1.0))
        corrected = lclq_vector(ds, 1, LclqConfig(1.0, self_correction=True))
        # own category A: (N-1)/N_A = 3/2 becomes (N-1)/(N_A-1) = 3
        assert corrected.values[0] == pytest.approx(2 * plain.values[0], rel=1e-15)
        assert corrected.values[1] == plain.values[1]

    def test_free_anchor_uses_same_denominator(self, abb):
        cfg = LclqConfig(1.0)
        frac = neighbor_fractions(abb, (0.0, 0.5), cfg).values
        v = lclq_vector(abb, (0.0, 0.5), cfg).values
        assert np.allclose(v, frac * np.array([2 / 1, 2 / 2]), rtol=1e-15)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 100_000), st.sampled_from([1e-3, 7.0, 1000.0]), st.booleans())
    def test_scale_invariance(self, seed, factor, trunc):
        ds = random_dataset(seed, 40, 3)
        scaled = PointDataset(
            tuple(PointRecord(r.id, r.x * factor, r.y * factor, r.category) for r in ds.records), ds.categories
        )
        a = LclqConfig(0.15, truncation=trunc)
        b = LclqConfig(0.15 * factor, truncation=trunc)
        for rid in ds.ids[:10]:
            np.testing.assert_allclose(
                lclq_vector(scaled, int(rid), b).values, lclq_vector(ds, int(rid), a).values, rtol=1e-12, atol=1e-300
            )

    def test_threads_do_not_change_results(self, monkeypatch):
        ds = random_dataset(44, 400, 3)
        cfg = LclqConfig(0.05)
        anchors = [int(i) for i in ds.ids]
        monkeypatch.setenv("SPPA_THREADS", "1")
        one = np.array([v.values for v in lclq_vectors(ds, anchors, cfg)])
        monkeypatch.setenv("SPPA_THREADS", "3")
        three = np.array([v.values for v in lclq_vectors(ds, anchors, cfg)])
        assert one.tobytes() == three.tobytes()

    def test_random_labels_are_near_one(self):
        rng = np.random.default_rng(45)
        xy = rng.uniform(0, 1, (2000, 2))
        labels = rng.integers(0, 2, 2000)
        ds = PointDataset(
            tuple(PointRecord(k, float(x), float(y), int(c)) for k, ((x, y), c) in enumerate(zip(xy, labels))),
            (Category(0, "a"), Category(1, "b")),
        )
        means = np.mean([v.values for v in lclq_vectors(ds, [int(i) for i in ds.ids], LclqConfig(0.06))], axis=0)
        assert np.all(np.abs(means - 1) < 0.05)


class TestGlobalClq:
    def test_single_category(self):
        ds = _ds("1,0,0,a\n2,1,0,a\n3,0,1,a\n4,1,1,a\n")
        table = global_clq(ds, SplitAssignment({i: "train" for i in range(1, 5)}), LclqConfig(0.7))
        assert table.rows.shape == (1, 1)
        assert table.rows[0, 0] == pytest.approx(0.75, rel=1e-15)
        assert list(table.n_contributing) == [4]

    def test_identical_vectors_average_to_themselves(self):
        ds = _ds("1,0,0,A\n2,10,0,A\n3,0,1,B\n4,10,1,B\n")
        cfg = LclqConfig(1.0)
        v1, v2 = lclq_vector(ds, 1, cfg).values, lclq_vector(ds, 2, cfg).values
        assert np.array_equal(v1, v2)
        table = global_clq(ds, None, cfg)
        np.testing.assert_allclose(table.rows[0], v1, rtol=1e-15)

    def test_matches_brute_force(self):
        ds = random_dataset(46, 200, 3)
        split = SplitAssignment({int(i): "train" for i in ds.ids})
        h = 0.12
        table = global_clq(ds, split, LclqConfig(h, **EXACT))
        for c in range(3):
            members = [r.id for r in ds.records if r.category == c]
            expected = [sum(brute_lclq(ds, i, y, h) for i in members) / len(members) for y in range(3)]
            np.testing.assert_allclose(table.rows[c], expected, rtol=1e-12)

    def test_uses_training_points_only(self):
        ds = random_dataset(47, 120, 3)
        ids = [int(i) for i in ds.ids]
        split = SplitAssignment({i: ("train" if k % 3 else "test") for k, i in enumerate(ids)})
        cfg = LclqConfig(0.2)
        table = global_clq(ds, split, cfg)
        train = ds.subset(split.ids("train"))
        np.testing.assert_array_equal(table.rows, global_clq(train, None, cfg).rows)

    def test_missing_training_category(self):
        ds = _ds("1,0,0,A\n2,0,1,B\n3,1,1,B\n")
        split = SplitAssignment({1: "test", 2: "train", 3: "train"})
        with pytest.raises(DataError, match="A"):
            global_clq(ds, split, LclqConfig(1.0))

    def test_isolated_points_excluded(self):
        ds = _ds("1,0,0,A\n2,0,1,A\n3,0,2,B\n4,500,500,B\n")
        table = global_clq(ds, None, LclqConfig(1.0))
        assert list(table.n_contributing) == [2, 1]
        assert list(table.n_isolated) == [0, 1]

    def test_csv_round_trip(self):
        table = global_clq(random_dataset(48, 60, 3), None, LclqConfig(0.2))
        text = table.to_csv()
        assert text.splitlines()[0] == "category,v_0,v_1,v_2,n_contributing"
        again = GlobalClqTable.from_csv(io.StringIO(text))
        np.testing.assert_array_equal(again.rows, table.rows)
        assert again.category_names == table.category_names


class TestSecondOrder:
    def test_exact_match_orthogonal_rows(self):
        p = similarity_probs(np.array([0.0, 2.0, 0.0]), _table([[1, 0, 0], [0, 2, 0], [0, 0, 3]]))
        assert list(p) == [0.0, 1.0, 0.0]

    def test_zero_vector_is_uniform(self):
        p = similarity_probs(np.zeros(3), _table(np.eye(3)))
        assert list(p) == [1 / 3] * 3

    def test_hand_computed_cosines(self):
        # s = (1, 1/sqrt2) -> p0 = 1/(1 + 1/sqrt2) = 2 - sqrt2
        p = similarity_probs(np.array([1.0, 0.0]), _table([[1, 0], [1, 1]]))
        assert p[0] == pytest.approx(2 - math.sqrt(2), rel=1e-14)
        assert p[1] == pytest.approx(math.sqrt(2) - 1, rel=1e-14)
        assert round(p[0], 4) == 0.5858 and round(p[1], 4) == 0.4142

    def test_isolated_location(self):
        ds = random_dataset(49, 50, 3)
        table = global_clq(ds, None, LclqConfig(0.2))
        p = second_order_probs(ds, table, (50.0, 50.0), LclqConfig(0.2))
        assert list(p) == [1 / 3] * 3

    def test_cosine_of_nonnegative_vectors_in_unit_interval(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            u, v = rng.uniform(0, 5, 4), rng.uniform(0, 5, 4)
            assert 0 <= cosine(u, v) <= 1 + 1e-15

    @settings(max_examples=50, deadline=None)
    @given(
        st.lists(st.floats(0.01, 10), min_size=3, max_size=3),
        st.integers(0, 2),
        st.floats(0.01, 100),
        st.floats(0.01, 100),
        st.integers(0, 10_000),
    )
    def test_argmax_scale_free(self, v, row, a, b, seed):
        rows = np.random.default_rng(seed).uniform(0, 3, (3, 3))
        v = np.array(v)
        base = np.argmax(similarity_probs(v, _table(rows)))
        scaled = rows.copy()
        scaled[row] *= a
        p = similarity_probs(v * b, _table(scaled))
        sims = [cosine(v, r) for r in rows]
        if sorted(sims)[-1] - sorted(sims)[-2] > 1e-9:
            assert np.argmax(p) == base


def test_vector_export_format(abb):
    vectors = lclq_vectors(abb, [1, 2, 3], LclqConfig(1.0))
    lines = vectors_to_csv(vectors, 2).splitlines()
    assert lines[0] == "id,v_0,v_1,isolated"
    assert lines[1] == "1,0.0,1.0,0"
