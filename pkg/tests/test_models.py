import numpy as np
import pytest

from nmsosd.models import (
    DiaModel,
    GateConfig,
    SwaModel,
    UdeModel,
    dia_infer_batch,
    dia_train,
    load_bundle,
    load_records,
    save_bundle,
    save_dia_records,
    save_pattern_records,
    save_swa_records,
    save_ude_records,
    swa_infer,
    swa_train,
    trajectory_window,
    ude_gate,
    ude_infer_batch,
    ude_train,
)
from nmsosd.neural import TrainConfig


def test_trajectory_window_values():
    assert trajectory_window(10) == 6
    assert trajectory_window(6) == 4
    assert trajectory_window(4) == 3
    assert trajectory_window(1) == 1


class TestDia:
    def test_learns_window_visible_rule(self):
        i_m, n = 6, 20
        t_len = trajectory_window(i_m)
        rng = np.random.default_rng(0)
        posts = rng.standard_normal((150, i_m, n))
        bits = (posts[:, t_len - 1, :] < 0).astype(np.uint8)
        model, info = dia_train(posts, bits, i_m,
                                TrainConfig(steps=300, lr0=0.01, batch=128, seed=1))
        out = dia_infer_batch(model, posts)
        acc = np.mean((out < 0).astype(np.uint8) == bits)
        assert acc > 0.9

    def test_zero_weight_model_falls_back_to_final_posterior(self):
        i_m, n = 6, 11
        model = DiaModel(i_m)  # zero weights by construction
        rng = np.random.default_rng(1)
        posts = rng.standard_normal((5, i_m, n))
        out = dia_infer_batch(model, posts)
        assert np.array_equal(out, posts[:, -1, :])

    def test_deterministic(self):
        i_m, n = 4, 9
        model = DiaModel.build(i_m, seed=3)
        rng = np.random.default_rng(2)
        posts = rng.standard_normal((4, i_m, n))
        assert np.array_equal(dia_infer_batch(model, posts),
                              dia_infer_batch(model, posts))


class TestUde:
    def test_probability_pairs(self):
        model = UdeModel.build(6, seed=0)
        rng = np.random.default_rng(3)
        d = np.abs(rng.standard_normal((30, 6)))
        probs = ude_infer_batch(model, d)
        assert probs.shape == (30, 2)
        assert np.all(np.abs(probs.sum(axis=1) - 1.0) < 1e-12)

    def test_gate_threshold_and_open_gate(self):
        assert ude_gate(0.9, 0.1, 0.5)
        assert not ude_gate(0.7, 0.3, 0.5)
        # margin -1 accepts even a certain reject
        assert ude_gate(0.0, 1.0, -1.0)

    def test_all_accept_dataset_gives_trivial_classifier(self):
        rng = np.random.default_rng(4)
        d = np.abs(rng.standard_normal((200, 6)))
        labels = np.zeros(200, dtype=np.int64)
        model, _ = ude_train(d, labels, TrainConfig(steps=200, lr0=0.05,
                                                    batch=64, seed=5))
        probs = ude_infer_batch(model, d)
        assert np.all(probs[:, 0] > 0.95)

    def test_learns_separable_rule_and_class_weights_shift_errors(self):
        rng = np.random.default_rng(5)
        base = np.abs(rng.standard_normal((400, 6)))
        shift = rng.integers(0, 2, 400)
        d = base + 2.5 * shift[:, None]
        labels = shift.astype(np.int64)
        model, _ = ude_train(d, labels, TrainConfig(steps=300, lr0=0.02,
                                                    batch=64, seed=6))
        probs = ude_infer_batch(model, d)
        acc = np.mean((probs[:, 1] > probs[:, 0]).astype(np.int64) == labels)
        assert acc > 0.9
        # upweighting rejects makes the model reject at least as often
        heavy, _ = ude_train(d, labels, TrainConfig(steps=300, lr0=0.02,
                                                    batch=64, seed=6),
                             class_weight=np.array([1.0, 8.0]))
        r_plain = np.mean(probs[:, 1] > probs[:, 0])
        pr_heavy = ude_infer_batch(heavy, d)
        assert np.mean(pr_heavy[:, 1] > pr_heavy[:, 0]) >= r_plain


class TestSwa:
    def test_scale_invariance(self):
        model = SwaModel.build(5, seed=0)
        rng = np.random.default_rng(6)
        win = np.abs(rng.standard_normal(5)) + 0.1
        gm = 0.37
        a = swa_infer(model, win, gm)
        b = swa_infer(model, win * 1000.0, gm * 1000.0)
        assert a[0] == pytest.approx(b[0], abs=1e-12)
        assert a[1] == pytest.approx(b[1], abs=1e-12)

    def test_probabilities_sum_to_one(self):
        model = SwaModel.build(4, seed=1)
        p_stop, p_cont = swa_infer(model, np.array([1.0, 2.0, 3.0, 4.0]), 0.5)
        assert p_stop + p_cont == pytest.approx(1.0, abs=1e-12)

    def test_rejects_bad_inputs(self):
        model = SwaModel.build(4, seed=2)
        with pytest.raises(ValueError):
            swa_infer(model, np.ones(3), 1.0)
        with pytest.raises(ValueError):
            swa_infer(model, np.ones(4), 0.0)

    def test_learns_stop_rule(self):
        rng = np.random.default_rng(7)
        w_t = 5
        wins = np.abs(rng.standard_normal((600, w_t))) + 0.5
        better_outside = rng.integers(0, 2, 600)
        gms = wins.min(axis=1) * np.where(better_outside, 1.0, 0.6)
        # stop (0) when the current best is already below everything shown
        labels = better_outside.astype(np.int64)
        model, _ = swa_train(wins, gms, labels,
                             TrainConfig(steps=400, lr0=0.02, batch=64, seed=8))
        correct = 0
        for i in range(200):
            ps, pc = swa_infer(model, wins[i], gms[i])
            correct += int((ps > pc) == (labels[i] == 0))
        assert correct / 200 > 0.85


def test_gate_config_validation():
    g = GateConfig(-1.0, 1.0)
    assert not g.ude_enabled and not g.swa_enabled
    g2 = GateConfig(0.5, 0.9)
    assert g2.ude_enabled and g2.swa_enabled
    with pytest.raises(ValueError):
        GateConfig(2.0, 1.0)
    with pytest.raises(ValueError):
        GateConfig(0.0, -2.0)


def test_record_files_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    posts = rng.standard_normal((7, 4, 9))
    bits = rng.integers(0, 2, (7, 9)).astype(np.uint8)
    p = tmp_path / "dia.npz"
    save_dia_records(p, posts, bits)
    r = load_records(p, "dia")
    assert np.array_equal(r["posteriors"], posts)
    assert np.array_equal(r["true_bits"], bits)

    d = np.abs(rng.standard_normal((7, 4)))
    labels = rng.integers(0, 2, 7).astype(np.int64)
    p = tmp_path / "ude.npz"
    save_ude_records(p, d, labels)
    r = load_records(p, "ude")
    assert np.array_equal(r["d"], d)
    assert np.array_equal(r["labels"], labels)

    wins = np.abs(rng.standard_normal((7, 5)))
    gms = np.abs(rng.standard_normal(7))
    p = tmp_path / "swa.npz"
    save_swa_records(p, wins, gms, labels)
    r = load_records(p, "swa")
    assert np.array_equal(r["windows"], wins)
    assert np.array_equal(r["g_ms"], gms)

    masks = rng.integers(0, 2, (7, 12)).astype(np.uint8)
    p = tmp_path / "pat.npz"
    save_pattern_records(p, masks)
    assert np.array_equal(load_records(p, "patterns")["masks"], masks)

    with pytest.raises(ValueError):
        load_records(p, "swa")


def test_bundle_roundtrip(tmp_path):
    dia = DiaModel.build(6, seed=0)
    ude = UdeModel.build(6, seed=1)
    swa = SwaModel.build(5, seed=2)
    path = tmp_path / "bundle.json"
    save_bundle(path, alpha_raw=-1.25, dia=dia, ude=ude, swa=swa,
                gate=GateConfig(0.3, 0.9), meta={"note": "round trip"})
    b = load_bundle(path)
    assert b["alpha_raw"] == -1.25
    assert np.array_equal(b["dia"].net.get_flat(), dia.net.get_flat())
    assert np.array_equal(b["ude"].net.get_flat(), ude.net.get_flat())
    assert np.array_equal(b["swa"].net.get_flat(), swa.net.get_flat())
    assert b["gate"].m_g == 0.3 and b["gate"].s_m == 0.9
    assert b["meta"]["note"] == "round trip"


def test_bundle_partial(tmp_path):
    path = tmp_path / "bundle.json"
    save_bundle(path, alpha_raw=0.5)
    b = load_bundle(path)
    assert b["alpha_raw"] == 0.5
    assert b.get("dia") is None and b.get("ude") is None and b.get("swa") is None


def test_bundle_creates_missing_directories(tmp_path):
    path = tmp_path / "deep" / "nested" / "bundle.json"
    save_bundle(path, alpha_raw=0.5)
    assert load_bundle(path)["alpha_raw"] == 0.5
