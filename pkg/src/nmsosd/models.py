"""Gate models around the two decoding stages.

Three small networks with fixed architectures:

* bit reliability refiner: per-bit CNN over the posterior trajectory of
  the first half of the iterations; its signed output replaces (or, for
  cyclic codes, augments) the posterior before ordered-statistics
  reprocessing.
* undetected-error gate: CNN over the weighted discrepancy sequence of a
  converged frame, emitting accept/reject probabilities compared against
  a margin.
* stop gate: dense classifier over a window of block-minimum distances,
  normalized by the running global minimum, deciding whether traversal
  of the candidate list can end early.

Training-sample records persist as versioned npz archives.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .neural import (Conv1d, Dense, Flatten, Sequential, Softplus, TrainConfig,
                     bce_with_logit, cross_entropy, softmax, train_model)
from .nms import DecodeTrajectory, DiscrepancySeq

RECORD_VERSION = 1


class GateConfig:
    """Decision margins: m_g gates converged frames, s_m gates traversal."""

    def __init__(self, m_g: float = -1.0, s_m: float = 1.0):
        if not (-1.0 <= m_g <= 1.0):
            raise ValueError("m_g must lie in [-1, 1]")
        if not (-1.0 <= s_m <= 1.0):
            raise ValueError("s_m must lie in [-1, 1]")
        self.m_g = float(m_g)
        self.s_m = float(s_m)

    @property
    def ude_enabled(self) -> bool:
        return self.m_g > -1.0

    @property
    def swa_enabled(self) -> bool:
        return self.s_m < 1.0


def trajectory_window(i_m: int) -> int:
    """Number of leading iterations the reliability refiner consumes."""
    return i_m // 2 + 1


# ---------------------------------------------------------------------
# DIA: per-bit reliability refinement from posterior trajectories
# ---------------------------------------------------------------------

class DiaModel:
    def __init__(self, i_m: int, net: Sequential | None = None):
        self.i_m = int(i_m)
        self.t_len = trajectory_window(i_m)
        if net is None:
            net = Sequential([Conv1d(1, 4, 3), Softplus(), Conv1d(4, 2, 3),
                              Softplus(), Flatten(), Dense(2 * self.t_len, 1)])
        self.net = net

    @classmethod
    def build(cls, i_m: int, seed: int = 0) -> "DiaModel":
        rng = np.random.Generator(np.random.Philox(seed))
        t = trajectory_window(i_m)
        net = Sequential([Conv1d(1, 4, 3, rng), Softplus(), Conv1d(4, 2, 3, rng),
                          Softplus(), Flatten(), Dense(2 * t, 1, rng)])
        return cls(i_m, net)

    def to_dict(self):
        return {"kind": "dia", "i_m": self.i_m, "net": self.net.to_dict()}

    @classmethod
    def from_dict(cls, d):
        if d.get("kind") != "dia":
            raise ValueError("not a reliability-refiner weight blob")
        return cls(d["i_m"], Sequential.from_dict(d["net"]))


def dia_features(traj: DecodeTrajectory) -> np.ndarray:
    """(N, 1, T) per-bit posterior sequences over the first T iterations."""
    t_len = trajectory_window(traj.i_m)
    padded = traj.padded_posteriors()
    return padded[:t_len].T[:, None, :].copy()


def dia_features_batch(padded_posteriors: np.ndarray, i_m: int) -> np.ndarray:
    """(B, i_m, N) padded posteriors -> (B*N, 1, T) feature rows."""
    t_len = trajectory_window(i_m)
    x = padded_posteriors[:, :t_len, :]
    return np.swapaxes(x, 1, 2).reshape(-1, t_len)[:, None, :]


def dia_infer(model: DiaModel, traj: DecodeTrajectory,
              mode: str = "replace") -> np.ndarray:
    """Refined signed reliabilities, one per bit; positive means bit 0.

    mode "sum_with_input" adds the last consumed posterior (the cyclic-code
    variant); "replace" returns the raw model output.  A degenerate all-zero
    output falls back to the final posterior so ordering stays defined.
    """
    if mode not in ("replace", "sum_with_input"):
        raise ValueError("mode must be 'replace' or 'sum_with_input'")
    feats = dia_features(traj)
    out = model.net.forward(feats)[:, 0]
    if mode == "sum_with_input":
        out = out + traj.padded_posteriors()[model.t_len - 1]
    if not np.any(out):
        return traj.final_posterior.copy()
    return out


def dia_infer_batch(model: DiaModel, padded_posteriors: np.ndarray,
                    mode: str = "replace") -> np.ndarray:
    bsz, i_m, n = padded_posteriors.shape
    feats = dia_features_batch(padded_posteriors, i_m)
    out = model.net.forward(feats)[:, 0].reshape(bsz, n)
    if mode == "sum_with_input":
        out = out + padded_posteriors[:, model.t_len - 1, :]
    dead = ~np.any(out, axis=1)
    if np.any(dead):
        out[dead] = padded_posteriors[dead, -1, :]
    return out


def dia_train(posteriors: np.ndarray, true_bits: np.ndarray, i_m: int,
              cfg: TrainConfig, val_fraction: float = 0.1):
    """Fit the refiner on failure trajectories.

    posteriors: (F, i_m, N) padded posterior stacks; true_bits: (F, N).
    Every bit of every frame is one sample; target 1 encodes bit value 0
    so the output logit reads as a sign-consistent reliability.
    """
    x = dia_features_batch(posteriors, i_m)
    y = 1.0 - true_bits.reshape(-1).astype(np.float64)
    n_val = max(1, int(x.shape[0] * val_fraction))
    model = DiaModel.build(i_m, seed=cfg.seed)

    def loss_fn(logits, target):
        return bce_with_logit(logits[:, 0], target)

    def wrapped(logits, target):
        loss, g = loss_fn(logits, target)
        return loss, g[:, None]

    info = train_model(model.net, wrapped, x[n_val:], y[n_val:], cfg,
                       val=(x[:n_val], y[:n_val]))
    return model, info


# ---------------------------------------------------------------------
# UDE: accept/reject gate on converged outputs
# ---------------------------------------------------------------------

class UdeModel:
    def __init__(self, i_m: int, net: Sequential | None = None):
        self.i_m = int(i_m)
        if net is None:
            net = Sequential([Conv1d(1, 2, 3), Softplus(), Flatten(),
                              Dense(2 * i_m, 2)])
        self.net = net

    @classmethod
    def build(cls, i_m: int, seed: int = 0) -> "UdeModel":
        rng = np.random.Generator(np.random.Philox(seed))
        net = Sequential([Conv1d(1, 2, 3, rng), Softplus(), Flatten(),
                          Dense(2 * i_m, 2, rng)])
        return cls(i_m, net)

    def to_dict(self):
        return {"kind": "ude", "i_m": self.i_m, "net": self.net.to_dict()}

    @classmethod
    def from_dict(cls, d):
        if d.get("kind") != "ude":
            raise ValueError("not an undetected-error gate weight blob")
        return cls(d["i_m"], Sequential.from_dict(d["net"]))


def ude_infer(model: UdeModel, d: DiscrepancySeq) -> tuple[float, float]:
    """(p_accept, p_reject) for one discrepancy sequence."""
    x = d.d[None, None, :]
    p = softmax(model.net.forward(x))[0]
    return float(p[0]), float(p[1])


def ude_infer_batch(model: UdeModel, d: np.ndarray) -> np.ndarray:
    """(B, i_m) discrepancy rows -> (B, 2) probability pairs."""
    return softmax(model.net.forward(d[:, None, :]))


def ude_gate(p_a: float, p_r: float, m_g: float) -> bool:
    """Accept when the probability margin clears the threshold."""
    return (p_a - p_r) >= m_g


def ude_train(d: np.ndarray, labels: np.ndarray, cfg: TrainConfig,
              class_weight=None, val_fraction: float = 0.1):
    """Fit the gate.  labels: 0 = accept (correct output), 1 = reject."""
    d = np.asarray(d, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    i_m = d.shape[1]
    x = d[:, None, :]
    n_val = max(1, int(x.shape[0] * val_fraction))
    model = UdeModel.build(i_m, seed=cfg.seed)

    def loss_fn(logits, target):
        return cross_entropy(logits, target, class_weight=class_weight)

    info = train_model(model.net, loss_fn, x[n_val:], labels[n_val:], cfg,
                       val=(x[:n_val], labels[:n_val]))
    return model, info


# ---------------------------------------------------------------------
# SWA: early-stop gate over windowed block minima
# ---------------------------------------------------------------------

class SwaModel:
    def __init__(self, w_t: int, net: Sequential | None = None):
        self.w_t = int(w_t)
        if net is None:
            net = Sequential([Dense(w_t, 2 * w_t), Softplus(), Dense(2 * w_t, 2)])
        self.net = net

    @classmethod
    def build(cls, w_t: int, seed: int = 0) -> "SwaModel":
        rng = np.random.Generator(np.random.Philox(seed))
        net = Sequential([Dense(w_t, 2 * w_t, rng), Softplus(),
                          Dense(2 * w_t, 2, rng)])
        return cls(w_t, net)

    def to_dict(self):
        return {"kind": "swa", "w_t": self.w_t, "net": self.net.to_dict()}

    @classmethod
    def from_dict(cls, d):
        if d.get("kind") != "swa":
            raise ValueError("not a stop-gate weight blob")
        return cls(d["w_t"], Sequential.from_dict(d["net"]))


def swa_infer(model: SwaModel, window: np.ndarray, g_m: float) -> tuple[float, float]:
    """(p_stop, p_continue).  Inputs are scale-free: window / g_m."""
    window = np.asarray(window, dtype=np.float64)
    if window.shape != (model.w_t,):
        raise ValueError("window length does not match the model")
    if g_m <= 0:
        raise ValueError("global minimum must be positive for normalization")
    p = softmax(model.net.forward((window / g_m)[None, :]))[0]
    return float(p[0]), float(p[1])


def swa_train(windows: np.ndarray, g_ms: np.ndarray, labels: np.ndarray,
              cfg: TrainConfig, class_weight=None, val_fraction: float = 0.1):
    """Fit the stop gate.  labels: 0 = stop (optimum already seen), 1 = continue."""
    windows = np.asarray(windows, dtype=np.float64)
    g_ms = np.asarray(g_ms, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    x = windows / g_ms[:, None]
    n_val = max(1, int(x.shape[0] * val_fraction))
    model = SwaModel.build(windows.shape[1], seed=cfg.seed)

    def loss_fn(logits, target):
        return cross_entropy(logits, target, class_weight=class_weight)

    info = train_model(model.net, loss_fn, x[n_val:], labels[n_val:], cfg,
                       val=(x[:n_val], labels[:n_val]))
    return model, info


# ---------------------------------------------------------------------
# training-record persistence (versioned binary archives)
# ---------------------------------------------------------------------

def save_dia_records(path, posteriors: np.ndarray, true_bits: np.ndarray):
    np.savez_compressed(path, version=np.int64(RECORD_VERSION), kind="dia",
                        posteriors=posteriors.astype(np.float64),
                        true_bits=true_bits.astype(np.uint8))


def save_ude_records(path, d: np.ndarray, labels: np.ndarray):
    np.savez_compressed(path, version=np.int64(RECORD_VERSION), kind="ude",
                        d=d.astype(np.float64), labels=labels.astype(np.int64))


def save_swa_records(path, windows: np.ndarray, g_ms: np.ndarray,
                     labels: np.ndarray):
    np.savez_compressed(path, version=np.int64(RECORD_VERSION), kind="swa",
                        windows=windows.astype(np.float64),
                        g_ms=g_ms.astype(np.float64),
                        labels=labels.astype(np.int64))


def save_pattern_records(path, masks: np.ndarray):
    """Observed basis error patterns as 0/1 flip masks, one row per frame."""
    np.savez_compressed(path, version=np.int64(RECORD_VERSION), kind="patterns",
                        masks=masks.astype(np.uint8))


def load_records(path, expect_kind: str) -> dict:
    with np.load(path, allow_pickle=False) as z:
        if int(z["version"]) != RECORD_VERSION:
            raise ValueError(f"unsupported record version {int(z['version'])}")
        kind = str(z["kind"])
        if kind != expect_kind:
            raise ValueError(f"expected {expect_kind} records, found {kind}")
        return {k: z[k] for k in z.files if k not in ("version", "kind")}


# ---------------------------------------------------------------------
# one-file experiment bundles
# ---------------------------------------------------------------------

BUNDLE_VERSION = 1

_MODEL_KINDS = {"dia": DiaModel, "ude": UdeModel, "swa": SwaModel}


def save_bundle(path, alpha_raw: float, dia: DiaModel | None = None,
                ude: UdeModel | None = None, swa: SwaModel | None = None,
                gate: GateConfig | None = None, meta: dict | None = None):
    doc = {"format": "nmsosd-bundle", "version": BUNDLE_VERSION,
           "alpha_raw": float(alpha_raw)}
    for name, model in (("dia", dia), ("ude", ude), ("swa", swa)):
        if model is not None:
            doc[name] = model.to_dict()
    if gate is not None:
        doc["gate"] = {"m_g": gate.m_g, "s_m": gate.s_m}
    if meta:
        doc["meta"] = meta
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_bundle(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "nmsosd-bundle":
        raise ValueError("not a model bundle file")
    if doc.get("version") != BUNDLE_VERSION:
        raise ValueError(f"unsupported bundle version {doc.get('version')}")
    out = {"alpha_raw": float(doc["alpha_raw"]), "meta": doc.get("meta", {})}
    for name, cls in _MODEL_KINDS.items():
        out[name] = cls.from_dict(doc[name]) if name in doc else None
    if "gate" in doc:
        out["gate"] = GateConfig(doc["gate"]["m_g"], doc["gate"]["s_m"])
    else:
        out["gate"] = None
    return out
