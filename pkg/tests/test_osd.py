import math

import numpy as np
import pytest

from nmsosd.channel import llr, modulate, sigma_from_snr, worker_stream
from nmsosd.codes import hamming_7_4, random_code
from nmsosd.gf2 import Gf2Matrix, encode, gf2_rank, syndrome
from nmsosd.osd import (
    OrderedProblem,
    OsdProblem,
    Tep,
    apply_tep,
    candidate_distance,
    flips_matrix,
    order_and_reduce,
    osd_order_p,
    path_block_minima,
    swa_sample_points,
    tep_weight_order,
    traverse_with_swa,
)


def codebook(code):
    k = code.k
    msgs = np.array(np.meshgrid(*[[0, 1]] * k)).T.reshape(-1, k).astype(np.uint8)
    return encode(code.g, msgs)


def ml_decode(cws, y):
    corr = (1.0 - 2.0 * cws.astype(np.float64)) @ y
    return cws[np.argmax(corr)]


def test_tep_weight_order_is_weight_then_lex():
    teps = tep_weight_order(4, 2, 100)
    flips = [t.flips for t in teps]
    assert flips == [(), (0,), (1,), (2,), (3,), (0, 1), (0, 2), (0, 3),
                     (1, 2), (1, 3), (2, 3)]
    short = tep_weight_order(4, 2, 6)
    assert [t.flips for t in short] == flips[:6]


def test_tep_identity_and_hash():
    assert Tep((2, 0)).flips == (0, 2)
    assert Tep((0, 2)) == Tep((2, 0))
    assert len({Tep(()), Tep((1,)), Tep((1,))}) == 2


def test_ordered_problem_structure():
    code = hamming_7_4()
    rng = worker_stream(1, 0)
    y = rng.standard_normal(7)
    prob = OsdProblem.from_signed(llr(y, 0.5), code.h)
    ordered = order_and_reduce(prob)
    # reliabilities ascending after the sort
    assert np.all(np.diff(ordered.y2_mag) >= 0)
    # systematized matrix starts with the identity
    r = code.h.rows
    assert np.array_equal(ordered.h_sys.a[:, :r], np.eye(r, dtype=np.uint8))
    # base candidate and every flipped candidate re-encode into codewords
    teps = tep_weight_order(code.k, 2, 50)
    cands = ordered.candidates(flips_matrix(teps, code.k))
    back = np.stack([ordered.to_original(c) for c in cands]).astype(np.uint8)
    assert not syndrome(code.h, back).any()


def test_apply_tep_matches_batch_candidates():
    code = hamming_7_4()
    rng = worker_stream(11, 0)
    prob = OsdProblem.from_signed(rng.standard_normal(7), code.h)
    ordered = order_and_reduce(prob)
    teps = tep_weight_order(code.k, 2, 11)
    cands = ordered.candidates(flips_matrix(teps, code.k))
    for i, tep in enumerate(teps):
        single = apply_tep(ordered.c_m, tep, ordered.q2)
        assert np.array_equal(single, cands[i])


def test_candidate_distance_counts_weighted_mismatches():
    hard = np.array([0, 1, 0], dtype=np.uint8)
    mags = np.array([0.5, 1.0, 2.0])
    assert candidate_distance(np.array([0, 1, 0], dtype=np.uint8), hard, mags) == 0.0
    assert candidate_distance(np.array([1, 1, 1], dtype=np.uint8), hard, mags) == 2.5


def test_distance_argmin_equals_correlation_ml():
    code = hamming_7_4()
    cws = codebook(code)
    rng = worker_stream(2, 0)
    s2 = sigma_from_snr(1.0, code.rate)
    for _ in range(300):
        tx = cws[rng.integers(0, len(cws))]
        y = modulate(tx[None, :])[0] + math.sqrt(s2) * rng.standard_normal(7)
        hard = (y < 0).astype(np.uint8)
        dists = np.array([candidate_distance(c, hard, np.abs(y)) for c in cws])
        ml = ml_decode(cws, y)
        assert np.array_equal(cws[np.argmin(dists)], ml)


@pytest.mark.parametrize("make_code", [hamming_7_4, lambda: random_code(10, 5, seed=9)])
def test_full_order_osd_equals_ml(make_code):
    code = make_code()
    cws = codebook(code)
    rng = worker_stream(3, 0)
    for snr in (0.0, 2.0, 4.0):
        s2 = sigma_from_snr(snr, code.rate)
        for _ in range(60):
            tx = cws[rng.integers(0, len(cws))]
            y = modulate(tx[None, :])[0] + math.sqrt(s2) * rng.standard_normal(code.n)
            prob = OsdProblem.from_signed(llr(y, s2), code.h)
            out, stats = osd_order_p(prob, p=code.k)
            ml = ml_decode(cws, y)
            # distances tie only between equal-distance codewords; compare scores
            d_out = candidate_distance(out, (y < 0).astype(np.uint8), np.abs(y))
            d_ml = candidate_distance(ml, (y < 0).astype(np.uint8), np.abs(y))
            assert d_out == pytest.approx(d_ml, abs=1e-12)


def test_osd_tie_break_prefers_earliest_rank():
    # craft a problem where two candidates have exactly equal distance: the
    # traversal must keep the first one it saw (lowest rank)
    h = Gf2Matrix(np.array([[1, 1, 0], [0, 1, 1]], dtype=np.uint8))
    # reliabilities all equal: sort is stable, basis is the last position
    signed = np.array([1.0, 1.0, 1.0])
    prob = OsdProblem.from_signed(signed, h)
    out, stats = osd_order_p(prob, p=1)
    assert stats.best_tep_rank == 0
    assert not out.any()


def test_osd_chunked_traversal_matches_small_chunks():
    code = random_code(12, 6, seed=4)
    rng = worker_stream(5, 0)
    s2 = sigma_from_snr(2.0, code.rate)
    cws = codebook(code)
    for _ in range(40):
        tx = cws[rng.integers(0, len(cws))]
        y = modulate(tx[None, :])[0] + math.sqrt(s2) * rng.standard_normal(code.n)
        prob = OsdProblem.from_signed(llr(y, s2), code.h)
        a, sa = osd_order_p(prob, p=3, chunk=7)
        b, sb = osd_order_p(prob, p=3, chunk=4096)
        assert np.array_equal(a, b)
        assert sa.best_tep_rank == sb.best_tep_rank


class TestSwaTraversal:
    def setup_method(self):
        self.code = random_code(12, 6, seed=6)
        self.rng = worker_stream(7, 0)
        s2 = sigma_from_snr(1.5, self.code.rate)
        cws = codebook(self.code)
        tx = cws[self.rng.integers(0, len(cws))]
        y = modulate(tx[None, :])[0] + math.sqrt(s2) * self.rng.standard_normal(12)
        self.prob = OsdProblem.from_signed(llr(y, s2), self.code.h)
        self.path = tep_weight_order(6, 3, 40)

    def test_full_walk_when_margin_disables_gate(self):
        out, stats = traverse_with_swa(self.prob, self.path, swa=None,
                                       b_s=4, w_t=2, s_m=1.0)
        assert stats.swa_calls == 0
        assert not stats.stopped_early
        assert stats.teps_checked == len(self.path)
        ordered = order_and_reduce(self.prob)
        cands = ordered.candidates(flips_matrix(self.path, 6))
        dists = ordered.distances(cands)
        assert stats.best_distance == pytest.approx(dists.min(), abs=1e-12)

    def test_short_path_never_consults(self):
        from nmsosd.models import SwaModel

        swa = SwaModel.build(2, seed=0)
        out, stats = traverse_with_swa(self.prob, self.path[:8], swa=swa,
                                       b_s=4, w_t=2, s_m=0.9)
        assert stats.swa_calls == 0
        assert stats.teps_checked == 8

    def test_gated_walk_calls_and_stops(self):
        from nmsosd.models import SwaModel

        # an untrained gate emits p_stop = p_cont = 0.5, so margin 0 stops at
        # the first consultation and margin 0.9 never stops
        swa = SwaModel.build(2, seed=1)
        out, stats = traverse_with_swa(self.prob, self.path, swa=swa,
                                       b_s=4, w_t=2, s_m=0.0)
        assert stats.swa_calls == 1
        assert stats.stopped_early
        out2, stats2 = traverse_with_swa(self.prob, self.path, swa=swa,
                                         b_s=4, w_t=2, s_m=0.9)
        assert not stats2.stopped_early
        assert stats2.teps_checked == len(self.path)

    def test_zero_global_minimum_stops_without_call(self):
        from nmsosd.models import SwaModel

        # noiseless input: the base candidate already matches every hard
        # decision, distance zero, nothing can improve
        cws = codebook(self.code)
        y = modulate(cws[3][None, :])[0] * 2.0
        prob = OsdProblem.from_signed(y, self.code.h)
        swa = SwaModel.build(2, seed=2)
        out, stats = traverse_with_swa(prob, self.path, swa=swa,
                                       b_s=4, w_t=2, s_m=0.9)
        assert stats.best_distance == 0.0
        assert stats.stopped_early
        assert stats.swa_calls == 0
        assert np.array_equal(out, cws[3])


def test_block_minima_and_sample_point_replay():
    code = random_code(12, 6, seed=8)
    rng = worker_stream(9, 0)
    s2 = sigma_from_snr(1.5, code.rate)
    y = modulate(np.zeros((1, 12), dtype=np.uint8))[0] + \
        math.sqrt(s2) * rng.standard_normal(12)
    prob = OsdProblem.from_signed(llr(y, s2), code.h)
    ordered = order_and_reduce(prob)
    path = tep_weight_order(6, 3, 40)
    b_s, w_t = 4, 2
    dist, bmins = path_block_minima(ordered, path, b_s)
    assert bmins.shape == (10,)
    # oracle: block minima from a flat distance walk
    cands = ordered.candidates(flips_matrix(path, 6))
    dists = ordered.distances(cands)
    assert np.allclose(dist, dists, atol=1e-12)
    want = dists.reshape(-1, b_s).min(axis=1)
    assert np.allclose(bmins, want, atol=1e-12)

    samples = swa_sample_points(bmins, w_t)
    # replay: g_m is the running min over completed blocks; the first sample
    # happens when the initial window fills, later ones when a block improves
    assert all(len(s[0]) == w_t for s in samples)
    gm0 = samples[0][1]
    assert gm0 == pytest.approx(bmins[:w_t].min(), abs=1e-12)


def test_swa_sample_points_short_path_empty():
    assert swa_sample_points(np.array([1.0, 2.0]), 3) == []
