"""Two-stage hybrid decoder.

Stage one is iterative (standard or dilated NMS).  Converged outputs
pass the undetected-error gate; everything else falls through to
ordered-statistics reprocessing, optionally on refined reliabilities and
optionally walking a precomputed pattern list with the stop gate.

Every frame exits through exactly one of the two stages, so error
counts decompose additively across stages.
"""

from __future__ import annotations

import numpy as np

from .channel import llr as channel_llr
from .channel import modulate, sigma_from_snr, worker_stream
from .codes import CodeSpec
from .models import (DiaModel, GateConfig, SwaModel, UdeModel, dia_infer_batch,
                     trajectory_window, ude_infer_batch)
from .nms import NmsParams, discrepancy_batch, make_decoder_fn
from .osd import (OsdProblem, Tep, TraversalStats, flips_matrix, order_and_reduce,
                  osd_order_p, path_block_minima, swa_sample_points,
                  traverse_with_swa)


class OsdMode:
    """Second-stage selector: disabled, exhaustive order-p, or path walk."""

    def __init__(self, kind: str, p: int = 0, b_s: int = 10, w_t: int = 5):
        if kind not in ("off", "order_p", "path"):
            raise ValueError("osd mode must be 'off', 'order_p' or 'path'")
        if kind == "order_p" and p < 0:
            raise ValueError("reprocessing order must be >= 0")
        if kind == "path" and (b_s < 1 or w_t < 1):
            raise ValueError("block size and window length must be positive")
        self.kind = kind
        self.p = int(p)
        self.b_s = int(b_s)
        self.w_t = int(w_t)

    @classmethod
    def off(cls):
        return cls("off")

    @classmethod
    def order_p(cls, p: int):
        return cls("order_p", p=p)

    @classmethod
    def path(cls, b_s: int, w_t: int):
        return cls("path", b_s=b_s, w_t=w_t)


class HybridConfig:
    def __init__(self, nms: NmsParams, gate: GateConfig, osd_mode: OsdMode,
                 dia: DiaModel | None = None, ude: UdeModel | None = None,
                 swa: SwaModel | None = None, path: list[Tep] | None = None,
                 dia_mode: str = "replace", reliability_source: str = "model"):
        if gate.ude_enabled and ude is None:
            raise ValueError("m_g > -1 requires an undetected-error model")
        if osd_mode.kind == "path":
            if not path:
                raise ValueError("path mode requires a nonempty pattern list")
            if gate.swa_enabled and swa is None:
                raise ValueError("s_m < 1 requires a stop-gate model")
        if dia_mode not in ("replace", "sum_with_input"):
            raise ValueError("dia_mode must be 'replace' or 'sum_with_input'")
        if reliability_source not in ("model", "raw"):
            raise ValueError("reliability_source must be 'model' or 'raw'")
        if dia is not None and dia.i_m != nms.i_m:
            raise ValueError("refiner was built for a different iteration budget")
        if ude is not None and ude.i_m != nms.i_m:
            raise ValueError("gate was built for a different iteration budget")
        if swa is not None and osd_mode.kind == "path" and swa.w_t != osd_mode.w_t:
            raise ValueError("stop gate window length disagrees with osd mode")
        self.nms = nms
        self.gate = gate
        self.osd_mode = osd_mode
        self.dia = dia
        self.ude = ude
        self.swa = swa
        self.path = list(path) if path else None
        self.dia_mode = dia_mode
        self.reliability_source = reliability_source

    @property
    def needs_trajectory(self) -> bool:
        return self.dia is not None or self.ude is not None


class FrameOutcome:
    def __init__(self, decoded, stage, nms_iters, ude_margin=None,
                 traversal: TraversalStats | None = None, correct=None,
                 converged=False, nms_correct=None):
        self.decoded = decoded
        self.stage = stage              # "nms_accepted" or "osd"
        self.nms_iters = int(nms_iters)
        self.ude_margin = ude_margin
        self.traversal = traversal
        self.correct = correct
        self.converged = bool(converged)
        self.nms_correct = nms_correct  # first-stage output vs truth, if known


class HybridRunner:
    """Prebuilt decoding context; decodes batches of frames."""

    def __init__(self, code: CodeSpec, cfg: HybridConfig):
        self.code = code
        self.cfg = cfg
        self.decode_fn = make_decoder_fn(code, cfg.nms)
        if cfg.osd_mode.kind == "path":
            self._path_fm = flips_matrix(cfg.path, code.k)
        else:
            self._path_fm = None

    def _signed_reliabilities(self, res, rows: np.ndarray) -> np.ndarray:
        cfg = self.cfg
        if cfg.reliability_source == "raw":
            return res.input_llr[rows]
        if cfg.dia is not None:
            return dia_infer_batch(cfg.dia, res.posteriors[rows], mode=cfg.dia_mode)
        return res.final_post[rows]

    def run_batch(self, llr_b: np.ndarray, tx_bits: np.ndarray | None = None
                  ) -> list[FrameOutcome]:
        cfg = self.cfg
        res = self.decode_fn(llr_b, cfg.nms.alpha_raw,
                             record=cfg.needs_trajectory, early_stop=True)
        bsz = llr_b.shape[0]
        conv = res.converged

        margins = np.full(bsz, np.nan)
        if cfg.ude is not None and np.any(conv):
            d = discrepancy_batch(res)[conv]
            p = ude_infer_batch(cfg.ude, d)
            margins[conv] = p[:, 0] - p[:, 1]
        if cfg.gate.ude_enabled:
            accepted = conv & (margins >= cfg.gate.m_g)
        else:
            accepted = conv.copy()

        decoded = res.final_hard.copy()
        osd_rows = np.flatnonzero(~accepted)
        traversals: dict[int, TraversalStats] = {}
        if cfg.osd_mode.kind != "off" and osd_rows.size:
            signed = self._signed_reliabilities(res, osd_rows)
            for j, b in enumerate(osd_rows):
                problem = OsdProblem.from_signed(signed[j], self.code.h)
                if cfg.osd_mode.kind == "order_p":
                    cand, stats = osd_order_p(problem, cfg.osd_mode.p)
                else:
                    cand, stats = traverse_with_swa(
                        problem, cfg.path, cfg.swa, cfg.osd_mode.b_s,
                        cfg.osd_mode.w_t, cfg.gate.s_m, fm=self._path_fm)
                decoded[b] = cand
                traversals[int(b)] = stats

        outcomes = []
        nms_ok = None
        if tx_bits is not None:
            nms_ok = np.all(res.final_hard == tx_bits, axis=1)
        for b in range(bsz):
            correct = None
            if tx_bits is not None:
                correct = bool(np.array_equal(decoded[b], tx_bits[b]))
            outcomes.append(FrameOutcome(
                decoded[b], "nms_accepted" if accepted[b] else "osd",
                res.iters_used[b],
                None if np.isnan(margins[b]) else float(margins[b]),
                traversals.get(b), correct, converged=bool(conv[b]),
                nms_correct=None if nms_ok is None else bool(nms_ok[b])))
        return outcomes


def hybrid_decode(llr_vec: np.ndarray, code: CodeSpec, cfg: HybridConfig,
                  tx_bits: np.ndarray | None = None) -> FrameOutcome:
    """Single-frame convenience wrapper around HybridRunner."""
    runner = HybridRunner(code, cfg)
    tx = None if tx_bits is None else np.asarray(tx_bits, dtype=np.uint8)[None, :]
    return runner.run_batch(np.asarray(llr_vec, dtype=np.float64)[None, :], tx)[0]


class CollectedRecords:
    """Training samples harvested from one Monte Carlo collection run."""

    def __init__(self, n, k, i_m, w_t):
        t_len = trajectory_window(i_m)
        self.dia_posteriors = np.empty((0, i_m, n))
        self.dia_bits = np.empty((0, n), dtype=np.uint8)
        self.ude_d = np.empty((0, i_m))
        self.ude_labels = np.empty(0, dtype=np.int64)
        self.swa_windows = np.empty((0, w_t))
        self.swa_gms = np.empty(0)
        self.swa_labels = np.empty(0, dtype=np.int64)
        self.patterns = np.empty((0, k), dtype=np.uint8)
        self.frames_run = 0
        self.failures = 0
        self.t_len = t_len


def collect_failures(code: CodeSpec, snr_db: float, count: int,
                     cfg: HybridConfig, seed: int = 0,
                     batch: int = 512) -> CollectedRecords:
    """Run the first stage over `count` frames and harvest training records.

    Non-converged frames yield refiner records (posterior stacks + truth)
    and basis error patterns; converged frames yield gate records labeled
    from the truth.  When a pattern list is configured, failures also yield
    stop-gate records from a full offline walk of the list.
    """
    sigma2 = sigma_from_snr(snr_db, code.rate)
    rng = worker_stream(seed, 0)
    decode_fn = make_decoder_fn(code, cfg.nms)
    rec = CollectedRecords(code.n, code.k, cfg.nms.i_m, cfg.osd_mode.w_t)
    make_swa = cfg.osd_mode.kind == "path" and cfg.path is not None
    fm = flips_matrix(cfg.path, code.k) if make_swa else None

    dia_p, dia_b, ude_d, ude_l = [], [], [], []
    swa_w, swa_g, swa_l = [], [], []
    pats = []
    done = 0
    while done < count:
        b = min(batch, count - done)
        msgs = rng.integers(0, 2, size=(b, code.k), dtype=np.int64)
        tx = (msgs @ code.g.a.astype(np.int64)) & 1
        tx = tx.astype(np.uint8)
        y = modulate(tx) + np.sqrt(sigma2) * rng.standard_normal((b, code.n))
        llr_b = channel_llr(y, sigma2)
        res = decode_fn(llr_b, cfg.nms.alpha_raw, record=True, early_stop=True)
        conv = res.converged
        done += b
        if np.any(conv):
            d = discrepancy_batch(res)[conv]
            ok = np.all(res.final_hard[conv] == tx[conv], axis=1)
            ude_d.append(d)
            ude_l.append(np.where(ok, 0, 1))
        fail = np.flatnonzero(~conv)
        rec.failures += fail.size
        if fail.size:
            dia_p.append(res.posteriors[fail])
            dia_b.append(tx[fail])
            if cfg.dia is not None:
                signed = dia_infer_batch(cfg.dia, res.posteriors[fail],
                                         mode=cfg.dia_mode)
            elif cfg.reliability_source == "raw":
                signed = res.input_llr[fail]
            else:
                signed = res.final_post[fail]
            for j, b_idx in enumerate(fail):
                problem = OsdProblem.from_signed(signed[j], code.h)
                ordered = order_and_reduce(problem)
                tx2 = ordered.perm.apply(tx[b_idx])
                epat = ordered.hard2[code.n - code.k:] ^ tx2[code.n - code.k:]
                pats.append(epat)
                if make_swa:
                    dist, bmins = path_block_minima(ordered, cfg.path,
                                                    cfg.osd_mode.b_s, fm=fm)
                    global_min = float(dist.min())
                    for window, g_m in swa_sample_points(bmins, cfg.osd_mode.w_t):
                        swa_w.append(window)
                        swa_g.append(g_m)
                        swa_l.append(0 if g_m == global_min else 1)
    rec.frames_run = done
    if dia_p:
        rec.dia_posteriors = np.concatenate(dia_p)
        rec.dia_bits = np.concatenate(dia_b)
    if ude_d:
        rec.ude_d = np.concatenate(ude_d)
        rec.ude_labels = np.concatenate(ude_l)
    if swa_w:
        rec.swa_windows = np.stack(swa_w)
        rec.swa_gms = np.array(swa_g)
        rec.swa_labels = np.array(swa_l)
    if pats:
        rec.patterns = np.stack(pats)
    return rec
