import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nmsosd.path import (
    LambdaVector,
    PathBuffer,
    almlt_order,
    cvt_order,
    estimate_lambda,
    load_lambda,
    load_path_buffer,
    save_lambda,
    save_path_buffer,
)
from nmsosd.osd import Tep


def brute_rank(lam_mrb, p_max, budget):
    k = len(lam_mrb)
    allt = [()]
    for w in range(1, p_max + 1):
        allt += list(combinations(range(k), w))
    return sorted(allt, key=lambda f: (sum(lam_mrb[list(f)]), len(f), f))[:budget]


class TestLambda:
    def test_monotone_and_deterministic(self):
        a = estimate_lambda(63, 2.5, 45 / 63, samples=150000, seed=1)
        b = estimate_lambda(63, 2.5, 45 / 63, samples=150000, seed=1)
        assert np.array_equal(a.lam, b.lam)
        assert np.all(np.diff(a.lam) >= 0)
        c = estimate_lambda(63, 2.5, 45 / 63, samples=150000, seed=2)
        assert not np.array_equal(a.lam, c.lam)

    def test_mean_matches_folded_normal(self):
        # the average of the ordered means equals the plain mean of |y|,
        # which has a closed form for y ~ N(1, sigma^2)
        n, snr, rate = 32, 2.0, 0.5
        lv = estimate_lambda(n, snr, rate, samples=400000, seed=3)
        s2 = 10 ** (-snr / 10) / (2 * rate)
        s = math.sqrt(s2)
        want = (s * math.sqrt(2 / math.pi) * math.exp(-1 / (2 * s2))
                + (1 - 2 * 0.5 * math.erfc(1 / (s * math.sqrt(2)))))
        assert lv.lam.mean() == pytest.approx(want, rel=5e-3)

    def test_sample_guard(self):
        with pytest.raises(ValueError):
            estimate_lambda(16, 2.0, 0.5, samples=10, seed=0)

    def test_vector_validation_and_mrb_slice(self):
        lam = LambdaVector([0.1, 0.2, 0.3, 0.4], 2.0, 10 ** 5, 0)
        assert np.array_equal(lam.mrb(2), np.array([0.3, 0.4]))
        with pytest.raises(ValueError):
            LambdaVector([0.3, 0.2], 2.0, 10 ** 5, 0)


class TestAlmltOrder:
    def test_matches_brute_force_small(self):
        rng = np.random.default_rng(0)
        for trial in range(10):
            k = int(rng.integers(4, 11))
            p_max = int(rng.integers(1, 4))
            lam = np.sort(rng.uniform(0.05, 2.0, k))
            budget = int(rng.integers(1, min(80, 2 ** k)))
            got = [t.flips for t in almlt_order(lam, p_max, budget)]
            want = [tuple(f) for f in brute_rank(lam, p_max, budget)]
            assert got == want, (k, p_max, budget)

    def test_scores_nondecreasing_and_distinct(self):
        rng = np.random.default_rng(1)
        lam = np.sort(rng.uniform(0.1, 1.0, 24))
        teps = almlt_order(lam, 4, 500)
        assert len({t.flips for t in teps}) == 500
        scores = [lam[list(t.flips)].sum() for t in teps]
        assert all(a <= b + 1e-12 for a, b in zip(scores, scores[1:]))
        assert teps[0].flips == ()

    def test_large_basis_budget(self):
        # the criterion-scale case: basis 99, path length 1000
        lam = estimate_lambda(127, 3.5, 99 / 127, samples=200000, seed=4).mrb(99)
        teps = almlt_order(lam, 4, 1000)
        assert len(teps) == 1000
        assert len({t.flips for t in teps}) == 1000
        scores = [lam[list(t.flips)].sum() for t in teps]
        assert all(a <= b + 1e-12 for a, b in zip(scores, scores[1:]))


def test_cvt_order_is_weight_then_lex():
    teps = cvt_order(5, 2, 9)
    assert [t.flips for t in teps] == [(), (0,), (1,), (2,), (3,), (4,),
                                       (0, 1), (0, 2), (0, 3)]


class TestPathBuffer:
    def make(self, l_t=10, beta=2.0):
        lam = np.linspace(0.1, 1.0, 8)
        teps = almlt_order(lam, 3, int(round(l_t * beta)))
        return PathBuffer(teps, l_t=l_t, beta=beta), teps

    def test_construction_sizes(self):
        buf, teps = self.make()
        assert buf.size == 20
        assert len(buf.current_path()) == 10
        assert [t.flips for t in buf.current_path()] == [t.flips for t in teps[:10]]

    def test_too_few_patterns_rejected(self):
        lam = np.linspace(0.1, 1.0, 4)
        teps = almlt_order(lam, 2, 8)
        with pytest.raises(ValueError):
            PathBuffer(teps, l_t=10, beta=2.0)

    def test_update_counters_and_promotion(self):
        buf, teps = self.make()
        target = teps[12].flips
        # four observations pull rank-12 to counter 8; the tie with the
        # untouched rank-8 entry resolves by initial rank, so it lands at 9
        matched = buf.update_with_batch([target] * 4)
        assert matched == 4
        assert buf.batch_count == 1
        flips = [e.tep.flips for e in buf.entries]
        assert flips.index(target) == 9
        assert target in {t.flips for t in buf.current_path()}

    def test_tie_keeps_initial_order(self):
        buf, teps = self.make()
        # one hit drops rank 5 to counter 4, tying rank 4; initial order wins
        buf.update_with_batch([teps[5].flips])
        flips = [e.tep.flips for e in buf.entries]
        assert flips.index(teps[4].flips) == 4
        assert flips.index(teps[5].flips) == 5

    def test_unknown_patterns_ignored(self):
        buf, _ = self.make()
        assert buf.update_with_batch([(0, 1, 2, 3, 4, 5)]) == 0
        assert buf.batch_count == 1

    def test_accepts_tep_objects(self):
        buf, teps = self.make()
        assert buf.update_with_batch([Tep(teps[3].flips)]) == 1


def test_lambda_roundtrip(tmp_path):
    lv = estimate_lambda(31, 2.0, 21 / 31, samples=120000, seed=5)
    p = tmp_path / "lam.csv"
    save_lambda(p, lv)
    back = load_lambda(p)
    assert np.array_equal(back.lam, lv.lam)
    assert back.snr_db == lv.snr_db
    assert back.sample_count == lv.sample_count


def test_path_buffer_roundtrip(tmp_path):
    lam = np.linspace(0.05, 1.0, 9)
    teps = almlt_order(lam, 3, 30)
    buf = PathBuffer(teps, l_t=15, beta=2.0)
    buf.update_with_batch([teps[7].flips, teps[7].flips, teps[20].flips])
    p = tmp_path / "path.csv"
    save_path_buffer(p, buf, meta={"snr_db": 3.5})
    back = load_path_buffer(p)
    assert back.l_t == 15 and back.beta == 2.0 and back.batch_count == 1
    assert [e.tep.flips for e in back.entries] == [e.tep.flips for e in buf.entries]
    assert [e.counter for e in back.entries] == [e.counter for e in buf.entries]
    # a further update behaves the same on both copies
    buf.update_with_batch([teps[2].flips])
    back.update_with_batch([teps[2].flips])
    assert [e.tep.flips for e in back.entries] == [e.tep.flips for e in buf.entries]


def test_load_rejects_wrong_kind(tmp_path):
    lv = estimate_lambda(16, 2.0, 0.5, samples=120000, seed=6)
    p = tmp_path / "lam.csv"
    save_lambda(p, lv)
    with pytest.raises(ValueError):
        load_path_buffer(p)


@given(st.lists(st.integers(0, 19), min_size=0, max_size=30))
@settings(max_examples=30, deadline=None)
def test_counter_bookkeeping_property(hits):
    lam = np.linspace(0.1, 1.0, 10)
    teps = almlt_order(lam, 3, 20)
    buf = PathBuffer(teps, l_t=10, beta=2.0)
    flips_by_rank = [t.flips for t in teps]
    buf.update_with_batch([flips_by_rank[h] for h in hits])
    # every entry's counter equals initial rank minus its hit count
    from collections import Counter

    hist = Counter(hits)
    for e in buf.entries:
        r = e.initial_rank
        assert e.counter == r - hist.get(r, 0)
    # entries stay sorted by (counter, initial rank)
    keys = [(e.counter, e.initial_rank) for e in buf.entries]
    assert keys == sorted(keys)
