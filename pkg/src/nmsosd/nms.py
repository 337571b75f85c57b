"""Normalized min-sum decoding on Tanner graphs.

Two decoders share one check-node kernel:

* decode_standard: classic flooding NMS with message memory across
  iterations and early termination on a zero syndrome.
* decode_enhanced: per outer iteration the working LLR vector is dilated
  into several permuted copies (cyclic shifts composed with doubling-map
  automorphisms), each copy runs a single variable->check->variable pass
  on the redundant parity-check matrix, the per-copy aggregates are
  inverse-permuted and summed, and the fused posterior replaces the
  working vector for the next iteration.

Everything operates on batches internally; the public single-frame
functions wrap batches of one.  Message arrays are float64 and the
aggregation order is fixed, so runs are bit-reproducible.
"""

from __future__ import annotations

import math

import numpy as np

from .codes import CodeSpec
from .gf2 import Gf2Matrix, Permutation, cyclic_shift_perm, frobenius_perm


def softplus(x):
    return np.logaddexp(0.0, x)


class TannerGraph:
    """Edge-indexed view of a parity-check matrix for flooding decoders."""

    def __init__(self, pcm: Gf2Matrix):
        h = pcm.a
        m, n = h.shape
        row_w = h.sum(axis=1)
        if np.any(row_w < 2):
            raise ValueError("check rows of weight < 2 have no extrinsic set")
        if np.any(h.sum(axis=0) < 1):
            raise ValueError("variable column with no checks")
        chk, var = np.nonzero(h)          # row-major: sorted by check, then var
        self.pcm = pcm
        self.n_checks = m
        self.n_vars = n
        self.n_edges = chk.size
        self.chk_of_edge = chk.astype(np.int64)
        self.var_of_edge = var.astype(np.int64)
        self.chk_ptr = np.concatenate([[0], np.cumsum(row_w)]).astype(np.int64)
        order = np.argsort(var, kind="stable")
        self.var_order = order
        col_w = h.sum(axis=0)
        self.var_ptr = np.concatenate([[0], np.cumsum(col_w)]).astype(np.int64)
        self._h_f64 = h.astype(np.float64)
        self._edge_idx = np.arange(self.n_edges, dtype=np.int64)

    def var_sums(self, msgs: np.ndarray) -> np.ndarray:
        """Sum check->variable messages per variable node.  msgs: (B, E)."""
        gathered = msgs[:, self.var_order]
        return np.add.reduceat(gathered, self.var_ptr[:-1], axis=1)

    def syndrome_ok(self, hard: np.ndarray) -> np.ndarray:
        """hard: (B, N) 0/1 -> (B,) bool, True when every check is satisfied."""
        counts = hard.astype(np.float64) @ self._h_f64.T
        return ~np.any(counts.astype(np.int64) & 1, axis=1)


class NmsParams:
    """Decoder knobs: normalization pre-activation, iteration budget, dilation."""

    def __init__(self, alpha_raw: float, i_m: int, shifts=(), autos=(),
                 pcm_choice: str = "h"):
        if i_m < 1:
            raise ValueError("i_m must be >= 1")
        if pcm_choice not in ("h", "h_o"):
            raise ValueError("pcm_choice must be 'h' or 'h_o'")
        self.alpha_raw = float(alpha_raw)
        self.i_m = int(i_m)
        self.shifts = tuple(int(s) for s in shifts)
        self.autos = tuple(int(a) for a in autos)
        self.pcm_choice = pcm_choice

    @property
    def alpha(self) -> float:
        return float(softplus(self.alpha_raw))

    @property
    def i_s(self) -> int:
        """Dilation factor; empty shift list means no dilation."""
        return len(self.shifts) * max(1, len(self.autos))

    @property
    def dilated(self) -> bool:
        return len(self.shifts) > 0

    def with_alpha(self, alpha_raw: float) -> "NmsParams":
        return NmsParams(alpha_raw, self.i_m, self.shifts, self.autos, self.pcm_choice)


class DecodeTrajectory:
    """Per-frame record of one decoding run.

    posteriors/hard hold one row per executed iteration (iters_used rows).
    input_llr doubles as the iteration-0 state: with zero initial messages
    the first posterior before any check update is the channel LLR itself.
    """

    def __init__(self, posteriors, hard, converged, iters_used, input_llr,
                 input_abs_y, i_m):
        self.posteriors = np.asarray(posteriors, dtype=np.float64)
        self.hard = np.asarray(hard, dtype=np.uint8)
        self.converged = bool(converged)
        self.iters_used = int(iters_used)
        self.input_llr = np.asarray(input_llr, dtype=np.float64)
        self.input_abs_y = np.asarray(input_abs_y, dtype=np.float64)
        self.i_m = int(i_m)

    @property
    def final_posterior(self) -> np.ndarray:
        return self.posteriors[self.iters_used - 1]

    @property
    def final_hard(self) -> np.ndarray:
        return self.hard[self.iters_used - 1]

    def padded_posteriors(self) -> np.ndarray:
        """(i_m, N) array, final iteration repeated past iters_used."""
        if self.posteriors.shape[0] == self.i_m:
            return self.posteriors
        pad = np.repeat(self.final_posterior[None, :],
                        self.i_m - self.iters_used, axis=0)
        return np.concatenate([self.posteriors, pad], axis=0)


class DiscrepancySeq:
    def __init__(self, d: np.ndarray):
        self.d = np.asarray(d, dtype=np.float64)
        if np.any(self.d < 0):
            raise ValueError("discrepancy entries must be nonnegative")


class BatchDecodeResult:
    """Vectorized decode output for a batch of frames."""

    def __init__(self, posteriors, converged, iters_used, final_post,
                 final_hard, input_llr, i_m):
        self.posteriors = posteriors            # (B, i_m, N) padded, or None
        self.converged = converged              # (B,) bool
        self.iters_used = iters_used            # (B,) int
        self.final_post = final_post            # (B, N)
        self.final_hard = final_hard            # (B, N) uint8
        self.input_llr = input_llr              # (B, N)
        self.i_m = i_m

    def trajectory(self, b: int) -> DecodeTrajectory:
        used = int(self.iters_used[b])
        if self.posteriors is None:
            raise ValueError("batch was decoded without trajectory recording")
        posts = self.posteriors[b, :used]
        return DecodeTrajectory(posts, (posts < 0).astype(np.uint8),
                                bool(self.converged[b]), used,
                                self.input_llr[b], np.abs(self.input_llr[b]),
                                self.i_m)


def _check_update(v2c: np.ndarray, graph: TannerGraph, alpha: float) -> np.ndarray:
    """Normalized min-sum check-node rule for a batch of edge messages."""
    chk = graph.chk_of_edge
    starts = graph.chk_ptr[:-1]
    absv = np.abs(v2c)
    sgn = np.where(v2c < 0, -1.0, 1.0)
    min1 = np.minimum.reduceat(absv, starts, axis=1)
    is_min = absv == min1[:, chk]
    cand = np.where(is_min, graph._edge_idx[None, :], graph.n_edges)
    first_min = np.minimum.reduceat(cand, starts, axis=1)
    at_first = graph._edge_idx[None, :] == first_min[:, chk]
    masked = np.where(at_first, np.inf, absv)
    min2 = np.minimum.reduceat(masked, starts, axis=1)
    ext_min = np.where(at_first, min2[:, chk], min1[:, chk])
    sign_prod = np.multiply.reduceat(sgn, starts, axis=1)
    return alpha * sign_prod[:, chk] * sgn * ext_min


def decode_standard_batch(llr: np.ndarray, graph: TannerGraph, params: NmsParams,
                          record: bool = True, early_stop: bool = True) -> BatchDecodeResult:
    """Flooding NMS over a batch.  llr: (B, N)."""
    llr = np.asarray(llr, dtype=np.float64)
    if llr.ndim == 1:
        llr = llr[None, :]
    bsz, n = llr.shape
    if n != graph.n_vars:
        raise ValueError("llr length does not match the graph")
    alpha = params.alpha
    i_m = params.i_m
    var = graph.var_of_edge

    c2v = np.zeros((bsz, graph.n_edges))
    posts = np.empty((bsz, i_m, n)) if record else None
    final_post = llr.copy()
    final_hard = (llr < 0).astype(np.uint8)
    converged = np.zeros(bsz, dtype=bool)
    iters_used = np.zeros(bsz, dtype=np.int64)

    for t in range(i_m):
        var_sum = graph.var_sums(c2v)
        v2c = llr[:, var] + var_sum[:, var] - c2v
        c2v = _check_update(v2c, graph, alpha)
        post = llr + graph.var_sums(c2v)
        live = ~converged
        final_post[live] = post[live]
        hard = (post < 0).astype(np.uint8)
        final_hard[live] = hard[live]
        iters_used[live] = t + 1
        if record:
            posts[:, t, :] = final_post
        if early_stop:
            ok = graph.syndrome_ok(final_hard)
            converged = converged | (ok & live)
            if bool(np.all(converged)):
                if record:
                    for tt in range(t + 1, i_m):
                        posts[:, tt, :] = final_post
                break

    return BatchDecodeResult(posts, converged, iters_used, final_post,
                             final_hard, llr, i_m)


def decode_standard(llr: np.ndarray, graph: TannerGraph,
                    params: NmsParams) -> DecodeTrajectory:
    res = decode_standard_batch(llr, graph, params)
    return res.trajectory(0)


def dilation_perms(params: NmsParams, n: int) -> list[Permutation]:
    """Composed shift-after-automorphism permutations, one per dilated row."""
    autos = params.autos if params.autos else (0,)
    perms = []
    for s in params.shifts:
        for a in autos:
            perms.append(cyclic_shift_perm(n, s).compose(frobenius_perm(n, a)))
    return perms


def decode_enhanced_batch(llr: np.ndarray, graph_o: TannerGraph,
                          perms: list[Permutation], params: NmsParams,
                          record: bool = True, early_stop: bool = True) -> BatchDecodeResult:
    """Dilated single-pass NMS with posterior feedback.  llr: (B, N)."""
    llr = np.asarray(llr, dtype=np.float64)
    if llr.ndim == 1:
        llr = llr[None, :]
    bsz, n = llr.shape
    if n != graph_o.n_vars:
        raise ValueError("llr length does not match the redundant graph")
    if not perms:
        raise ValueError("enhanced decoding requires at least one permutation")
    alpha = params.alpha
    i_m = params.i_m
    var = graph_o.var_of_edge
    i_s = len(perms)
    src = np.stack([p._src for p in perms])      # (I_s, N) gather for dilation
    dst = np.stack([p.map for p in perms])       # (I_s, N) gather for inversion

    work = llr.copy()
    posts = np.empty((bsz, i_m, n)) if record else None
    final_post = llr.copy()
    final_hard = (llr < 0).astype(np.uint8)
    converged = np.zeros(bsz, dtype=bool)
    iters_used = np.zeros(bsz, dtype=np.int64)

    for t in range(i_m):
        block = work[:, None, :].repeat(i_s, axis=1)
        block = np.take_along_axis(block, src[None, :, :].repeat(bsz, 0), axis=2)
        flat = block.reshape(bsz * i_s, n)
        # zero message memory inside one outer iteration: V2C is the LLR itself
        v2c = flat[:, var]
        c2v = _check_update(v2c, graph_o, alpha)
        agg = graph_o.var_sums(c2v).reshape(bsz, i_s, n)
        agg = np.take_along_axis(agg, dst[None, :, :].repeat(bsz, 0), axis=2)
        fused = work + agg.sum(axis=1)
        live = ~converged
        final_post[live] = fused[live]
        hard = (fused < 0).astype(np.uint8)
        final_hard[live] = hard[live]
        iters_used[live] = t + 1
        if record:
            posts[:, t, :] = final_post
        if early_stop:
            ok = graph_o.syndrome_ok(final_hard)
            converged = converged | (ok & live)
            if bool(np.all(converged)):
                if record:
                    for tt in range(t + 1, i_m):
                        posts[:, tt, :] = final_post
                break
        work = np.where(converged[:, None], work, fused)

    return BatchDecodeResult(posts, converged, iters_used, final_post,
                             final_hard, llr, i_m)


def decode_enhanced(llr: np.ndarray, spec: CodeSpec,
                    params: NmsParams) -> DecodeTrajectory:
    if params.pcm_choice != "h_o" or spec.h_o is None:
        raise ValueError("enhanced decoding runs on the redundant PCM h_o")
    graph = TannerGraph(spec.h_o)
    perms = dilation_perms(params, spec.n)
    res = decode_enhanced_batch(llr, graph, perms, params)
    return res.trajectory(0)


# ---------------------------------------------------------------------
# discrepancy sequences
# ---------------------------------------------------------------------

def discrepancy_sequence(traj: DecodeTrajectory) -> DiscrepancySeq:
    """Weighted mismatch of each iteration's hard decisions vs the final ones.

    Index 0 is the pre-iteration state (channel hard decisions); iterations
    beyond iters_used repeat the final iteration and contribute zero.
    """
    if not traj.converged:
        raise ValueError("discrepancy features are defined for converged outputs")
    final = traj.final_hard
    w = traj.input_abs_y
    d = np.zeros(traj.i_m, dtype=np.float64)
    hard0 = (traj.input_llr < 0).astype(np.uint8)
    d[0] = float(((hard0 != final) * w).sum())
    for i in range(1, traj.i_m):
        if i <= traj.iters_used:
            row = traj.hard[i - 1]
            d[i] = float(((row != final) * w).sum())
    return DiscrepancySeq(d)


def discrepancy_batch(result: BatchDecodeResult, abs_y: np.ndarray | None = None) -> np.ndarray:
    """(B, i_m) discrepancy sequences from a recorded batch decode."""
    if result.posteriors is None:
        raise ValueError("needs a batch decoded with record=True")
    w = np.abs(result.input_llr) if abs_y is None else np.asarray(abs_y)
    final = result.final_hard
    bsz, i_m = result.input_llr.shape[0], result.i_m
    d = np.empty((bsz, i_m))
    hard0 = result.input_llr < 0
    d[:, 0] = ((hard0 != final) * w).sum(axis=1)
    for i in range(1, i_m):
        rows = result.posteriors[:, i - 1, :] < 0
        d[:, i] = ((rows != final) * w).sum(axis=1)
    return d


# ---------------------------------------------------------------------
# alpha training
# ---------------------------------------------------------------------

class AlphaTrainResult:
    def __init__(self, alpha_raw, lr, val_fer, history):
        self.alpha_raw = alpha_raw
        self.lr = lr
        self.val_fer = val_fer
        self.history = history


def _bce_loss(final_post: np.ndarray, bits: np.ndarray) -> float:
    # -log p(correct bit) with p formed by sigmoid of the posterior LLR
    s = 1.0 - 2.0 * bits.astype(np.float64)
    return float(np.mean(softplus(-s * final_post)))


def make_decoder_fn(code: CodeSpec, params: NmsParams):
    """Closure decoding a batch under `params` with a given alpha_raw."""
    if params.dilated:
        if code.h_o is None:
            raise ValueError("dilated decoding requires the code's h_o")
        graph = TannerGraph(code.h_o)
        perms = dilation_perms(params, code.n)

        def run(llr_b, alpha_raw, record=False, early_stop=True):
            return decode_enhanced_batch(llr_b, graph, perms,
                                         params.with_alpha(alpha_raw),
                                         record=record, early_stop=early_stop)
    else:
        pcm = code.h_o if (params.pcm_choice == "h_o" and code.h_o is not None) else code.h
        graph = TannerGraph(pcm)

        def run(llr_b, alpha_raw, record=False, early_stop=True):
            return decode_standard_batch(llr_b, graph,
                                         params.with_alpha(alpha_raw),
                                         record=record, early_stop=early_stop)
    return run


def alpha_loss(decode_fn, llr_b, bits_b, alpha_raw: float) -> float:
    res = decode_fn(llr_b, alpha_raw, record=False, early_stop=False)
    return _bce_loss(res.final_post, bits_b)


def alpha_fd_gradient(decode_fn, llr_b, bits_b, alpha_raw: float,
                      step: float = 1e-3) -> float:
    up = alpha_loss(decode_fn, llr_b, bits_b, alpha_raw + step)
    dn = alpha_loss(decode_fn, llr_b, bits_b, alpha_raw - step)
    return (up - dn) / (2.0 * step)


def train_alpha(dataset, code: CodeSpec, params: NmsParams, schedule,
                lrs=(0.001, 0.01, 0.1), val_fraction: float = 0.2,
                fd_step: float = 1e-3) -> AlphaTrainResult:
    """Fit the normalization pre-activation by finite-difference descent.

    dataset: (llr array (F, N), tx_bits array (F, N)).  Each learning-rate
    candidate is trained independently; the one with the lowest validation
    FER wins.
    """
    llr_all, bits_all = dataset
    llr_all = np.asarray(llr_all, dtype=np.float64)
    bits_all = np.asarray(bits_all, dtype=np.uint8)
    if llr_all.shape[0] == 0:
        raise ValueError("empty alpha-training dataset")
    n_frames = llr_all.shape[0]
    n_val = max(1, int(n_frames * val_fraction))
    val_llr, val_bits = llr_all[:n_val], bits_all[:n_val]
    trn_llr, trn_bits = llr_all[n_val:], bits_all[n_val:]
    if trn_llr.shape[0] == 0:
        trn_llr, trn_bits = val_llr, val_bits
    decode_fn = make_decoder_fn(code, params)

    def val_fer(alpha_raw: float) -> float:
        res = decode_fn(val_llr, alpha_raw, record=False, early_stop=True)
        errs = np.any(res.final_hard != val_bits, axis=1)
        return float(np.mean(errs))

    best = None
    for lr0 in lrs:
        rng = np.random.Generator(np.random.Philox(schedule.seed))
        alpha = params.alpha_raw
        m = v = 0.0
        history = []
        for step in range(schedule.steps):
            idx = rng.integers(0, trn_llr.shape[0], size=schedule.batch)
            g = alpha_fd_gradient(decode_fn, trn_llr[idx], trn_bits[idx],
                                  alpha, step=fd_step)
            lr = lr0 * schedule.decay ** (step // schedule.decay_every)
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            mhat = m / (1.0 - 0.9 ** (step + 1))
            vhat = v / (1.0 - 0.999 ** (step + 1))
            alpha -= lr * mhat / (math.sqrt(vhat) + 1e-8)
            if step % 200 == 0:
                history.append((step, alpha))
        fer = val_fer(alpha)
        cand = AlphaTrainResult(alpha, lr0, fer, history)
        if best is None or cand.val_fer < best.val_fer:
            best = cand
    return best
