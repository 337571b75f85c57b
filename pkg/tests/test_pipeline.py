import numpy as np
import pytest

from nmsosd.channel import llr as channel_llr
from nmsosd.channel import modulate, sigma_from_snr, worker_stream
from nmsosd.codes import array_ldpc_49_36, bch_63_45, hamming_7_4
from nmsosd.models import DiaModel, GateConfig, SwaModel, UdeModel
from nmsosd.nms import NmsParams, make_decoder_fn
from nmsosd.path import almlt_order, estimate_lambda
from nmsosd.pipeline import (
    HybridConfig,
    HybridRunner,
    OsdMode,
    collect_failures,
    hybrid_decode,
)


def frames(code, snr_db, count, seed):
    sigma2 = sigma_from_snr(snr_db, code.rate)
    rng = worker_stream(seed, 0)
    msgs = rng.integers(0, 2, size=(count, code.k), dtype=np.int64)
    tx = ((msgs @ code.g.a.astype(np.int64)) & 1).astype(np.uint8)
    y = modulate(tx) + np.sqrt(sigma2) * rng.standard_normal((count, code.n))
    return tx, channel_llr(y, sigma2)


class TestConfigValidation:
    def setup_method(self):
        self.nms = NmsParams(0.0, 4)

    def test_gate_needs_model(self):
        with pytest.raises(ValueError):
            HybridConfig(self.nms, GateConfig(0.5, 1.0), OsdMode.order_p(1))

    def test_path_mode_needs_patterns(self):
        with pytest.raises(ValueError):
            HybridConfig(self.nms, GateConfig(), OsdMode.path(10, 5))

    def test_swa_margin_needs_model(self):
        teps = almlt_order(np.linspace(0.1, 1.0, 4), 2, 8)
        with pytest.raises(ValueError):
            HybridConfig(self.nms, GateConfig(-1.0, 0.5), OsdMode.path(2, 2),
                         path=teps)

    def test_mode_strings_checked(self):
        with pytest.raises(ValueError):
            HybridConfig(self.nms, GateConfig(), OsdMode.order_p(1),
                         dia_mode="average")
        with pytest.raises(ValueError):
            HybridConfig(self.nms, GateConfig(), OsdMode.order_p(1),
                         reliability_source="oracle")

    def test_model_budget_must_match(self):
        dia = DiaModel.build(6, seed=0)
        with pytest.raises(ValueError):
            HybridConfig(self.nms, GateConfig(), OsdMode.order_p(1), dia=dia)


class TestOsdOffPassthrough:
    def test_matches_first_stage_exactly(self):
        code = hamming_7_4()
        nms = NmsParams(0.0, 8)
        tx, llr_b = frames(code, 1.0, 400, 11)
        runner = HybridRunner(code, HybridConfig(nms, GateConfig(), OsdMode.off()))
        outs = runner.run_batch(llr_b, tx)
        res = make_decoder_fn(code, nms)(llr_b, nms.alpha_raw, early_stop=True)
        for b, o in enumerate(outs):
            assert np.array_equal(o.decoded, res.final_hard[b])
            assert o.converged == bool(res.converged[b])
            assert o.correct == o.nms_correct


class TestGateForcedOpen:
    def test_margin_minus_one_ignores_attached_model(self):
        code = hamming_7_4()
        nms = NmsParams(0.0, 8)
        ude = UdeModel.build(nms.i_m, seed=3)
        tx, llr_b = frames(code, 1.0, 300, 12)
        base = HybridRunner(code, HybridConfig(nms, GateConfig(-1.0, 1.0),
                                               OsdMode.order_p(1)))
        with_ude = HybridRunner(code, HybridConfig(nms, GateConfig(-1.0, 1.0),
                                                   OsdMode.order_p(1), ude=ude))
        a = base.run_batch(llr_b, tx)
        b = with_ude.run_batch(llr_b, tx)
        for oa, ob in zip(a, b):
            assert np.array_equal(oa.decoded, ob.decoded)
            assert oa.stage == ob.stage
            # the attached model still reports a margin on converged frames
            if ob.converged:
                assert ob.ude_margin is not None
            assert oa.ude_margin is None


class TestSecondStageOnlyHelps:
    def test_forced_open_gate_never_loses_frames(self):
        # with m_g = -1 the second stage sees only non-converged frames,
        # whose first-stage output is never a codeword, so it cannot hurt
        code = array_ldpc_49_36()
        nms = NmsParams(0.0, 6, pcm_choice="h")
        tx, llr_b = frames(code, 2.5, 400, 13)
        off = HybridRunner(code, HybridConfig(nms, GateConfig(), OsdMode.off()))
        osd = HybridRunner(code, HybridConfig(nms, GateConfig(),
                                              OsdMode.order_p(1)))
        outs_off = off.run_batch(llr_b, tx)
        outs_osd = osd.run_batch(llr_b, tx)
        fixed = 0
        for oo, oh in zip(outs_off, outs_osd):
            if oo.correct:
                assert oh.correct
            fixed += (not oo.correct) and oh.correct
        assert fixed > 0

    def test_stage_and_traversal_accounting(self):
        code = hamming_7_4()
        nms = NmsParams(0.0, 8)
        tx, llr_b = frames(code, 0.0, 300, 14)
        runner = HybridRunner(code, HybridConfig(nms, GateConfig(),
                                                 OsdMode.order_p(2)))
        outs = runner.run_batch(llr_b, tx)
        saw_osd = False
        for o in outs:
            assert o.stage in ("nms_accepted", "osd")
            assert (o.stage == "nms_accepted") == o.converged
            assert 1 <= o.nms_iters <= nms.i_m
            if o.stage == "osd":
                saw_osd = True
                assert o.traversal is not None
                assert o.traversal.teps_checked >= 1
            else:
                assert o.traversal is None
        assert saw_osd


def test_single_frame_wrapper_matches_batch():
    code = hamming_7_4()
    nms = NmsParams(0.0, 8)
    cfg = HybridConfig(nms, GateConfig(), OsdMode.order_p(1))
    tx, llr_b = frames(code, 0.0, 50, 15)
    runner = HybridRunner(code, cfg)
    outs = runner.run_batch(llr_b, tx)
    for b in (0, 7, 23, 49):
        one = hybrid_decode(llr_b[b], code, cfg, tx_bits=tx[b])
        assert np.array_equal(one.decoded, outs[b].decoded)
        assert one.stage == outs[b].stage
        assert one.correct == outs[b].correct


def test_zero_weight_refiner_is_identity():
    # an untrained refiner emits the final posterior, so wiring it into
    # the pipeline must not change any decoded frame
    code = hamming_7_4()
    nms = NmsParams(0.0, 8)
    dia = DiaModel(nms.i_m)  # zero weights by construction
    tx, llr_b = frames(code, 0.5, 300, 16)
    plain = HybridRunner(code, HybridConfig(nms, GateConfig(),
                                            OsdMode.order_p(2)))
    wired = HybridRunner(code, HybridConfig(nms, GateConfig(),
                                            OsdMode.order_p(2), dia=dia))
    for oa, ob in zip(plain.run_batch(llr_b, tx), wired.run_batch(llr_b, tx)):
        assert np.array_equal(oa.decoded, ob.decoded)


class TestCollect:
    def test_shapes_and_accounting(self):
        code = hamming_7_4()
        cfg = HybridConfig(NmsParams(0.0, 8), GateConfig(), OsdMode.order_p(1))
        rec = collect_failures(code, 1.0, 600, cfg, seed=21)
        assert rec.frames_run == 600
        assert rec.failures == rec.dia_posteriors.shape[0]
        assert rec.dia_posteriors.shape[1:] == (8, code.n)
        assert rec.dia_bits.shape == (rec.failures, code.n)
        assert rec.patterns.shape == (rec.failures, code.k)
        assert set(np.unique(rec.patterns)) <= {0, 1}
        assert rec.ude_d.shape == (600 - rec.failures, 8)
        assert rec.ude_labels.shape == (600 - rec.failures,)
        assert set(np.unique(rec.ude_labels)) <= {0, 1}
        assert rec.failures > 0
        # at 1 dB on this code some convergences land on the wrong codeword
        assert rec.ude_labels.sum() > 0

    def test_deterministic(self):
        code = hamming_7_4()
        cfg = HybridConfig(NmsParams(0.0, 8), GateConfig(), OsdMode.order_p(1))
        a = collect_failures(code, 1.0, 300, cfg, seed=5)
        b = collect_failures(code, 1.0, 300, cfg, seed=5)
        assert np.array_equal(a.patterns, b.patterns)
        assert np.array_equal(a.ude_d, b.ude_d)
        assert np.array_equal(a.dia_posteriors, b.dia_posteriors)

    def test_swa_records_need_path_mode(self):
        code = bch_63_45(with_h_o=True)
        nms = NmsParams(-2.5, 4, shifts=(0, 21, 42), autos=(0, 1, 2),
                        pcm_choice="h_o")
        lam = estimate_lambda(code.n, 2.5, code.rate, samples=150000, seed=2)
        teps = almlt_order(lam.mrb(code.k), 3, 60)
        cfg = HybridConfig(nms, GateConfig(-1.0, 1.0), OsdMode.path(5, 4),
                           path=teps)
        rec = collect_failures(code, 2.5, 200, cfg, seed=22, batch=100)
        assert rec.failures > 0
        assert rec.swa_windows.shape[0] > 0
        assert rec.swa_windows.shape[1] == 4
        assert set(np.unique(rec.swa_labels)) <= {0, 1}
        # every failure's walk has one globally best block, labeled stop
        assert rec.swa_labels.tolist().count(0) >= rec.failures
        assert np.all(rec.swa_gms > 0)

    def test_no_swa_records_in_order_mode(self):
        code = hamming_7_4()
        cfg = HybridConfig(NmsParams(0.0, 8), GateConfig(), OsdMode.order_p(1))
        rec = collect_failures(code, 1.0, 200, cfg, seed=23)
        assert rec.swa_windows.shape[0] == 0


def test_collected_pattern_reproduces_truth():
    # decoding a failure with a budget that includes its recorded basis
    # pattern must recover the transmitted word via the re-encode map
    code = hamming_7_4()
    cfg = HybridConfig(NmsParams(0.0, 8), GateConfig(), OsdMode.order_p(1))
    rec = collect_failures(code, 2.0, 400, cfg, seed=24)
    assert rec.failures > 0
    weights = rec.patterns.sum(axis=1)
    # order-k coverage would always contain the pattern; most sit at low order
    assert weights.min() <= 1
    assert weights.max() <= code.k
