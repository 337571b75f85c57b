"""Ordered-statistics reprocessing.

Both entry points share the same preparation: sort bits by ascending
reliability, Gauss-reduce the parity-check matrix to [I | Q2] with
least-reliable pivot priority, and re-encode candidate codewords from
flipped most-reliable-basis bits.  `osd_order_p` enumerates every test
error pattern up to a weight cap; `traverse_with_swa` walks a
precomputed ordered pattern list in blocks and may stop early on the
stop gate's verdict.

Distances follow the weighted-mismatch metric: the sum of permuted
reliability magnitudes over positions where a candidate disagrees with
the hard decisions.  Ties go to the earliest candidate encountered.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .gf2 import Gf2Matrix, Permutation, gaussian_systematize
from .models import SwaModel, swa_infer


class Tep:
    """Test error pattern: positions to flip inside the K-bit basis."""

    __slots__ = ("flips", "weight")

    def __init__(self, flips=()):
        flips = tuple(sorted(int(f) for f in flips))
        if len(set(flips)) != len(flips):
            raise ValueError("flip positions must be distinct")
        if flips and flips[0] < 0:
            raise ValueError("flip positions must be nonnegative")
        self.flips = flips
        self.weight = len(flips)

    def __eq__(self, other):
        return isinstance(other, Tep) and self.flips == other.flips

    def __hash__(self):
        return hash(self.flips)

    def __repr__(self):
        return f"Tep{self.flips}"


def tep_weight_order(k: int, p_max: int, budget: int | None = None) -> list[Tep]:
    """All patterns of weight <= p_max in (weight, lexicographic) order."""
    out = []
    for w in range(min(p_max, k) + 1):
        for flips in itertools.combinations(range(k), w):
            out.append(Tep(flips))
            if budget is not None and len(out) >= budget:
                return out
    return out


class OsdProblem:
    """One reprocessing instance: reliabilities, their signs, and the PCM."""

    def __init__(self, reliabilities, hard, h: Gf2Matrix):
        self.reliabilities = np.asarray(reliabilities, dtype=np.float64)
        self.hard = np.asarray(hard, dtype=np.uint8)
        if np.any(self.reliabilities < 0):
            raise ValueError("reliabilities must be nonnegative")
        if self.reliabilities.shape != self.hard.shape:
            raise ValueError("reliability/hard length mismatch")
        if self.reliabilities.shape[0] != h.cols:
            raise ValueError("frame length does not match the PCM")
        self.h = h
        self.y2_mag = None      # filled by order_and_reduce

    @classmethod
    def from_signed(cls, signed, h: Gf2Matrix) -> "OsdProblem":
        signed = np.asarray(signed, dtype=np.float64)
        return cls(np.abs(signed), (signed < 0).astype(np.uint8), h)


class OrderedProblem:
    """Problem after sorting and systematizing; basis views precomputed."""

    def __init__(self, problem: OsdProblem):
        rel, hard, h = problem.reliabilities, problem.hard, problem.h
        n = h.cols
        srt = np.argsort(rel, kind="stable")
        pi1 = Permutation(np.argsort(srt))
        h1 = pi1.apply_cols(h)
        h_sys, pi2 = gaussian_systematize(h1, np.arange(n))
        combined = pi2.compose(pi1)
        self.problem = problem
        self.pi1, self.pi2, self.perm = pi1, pi2, combined
        self.h_sys = h_sys
        self.n = n
        self.k = n - h.rows
        self.q2 = h_sys.a[:, (n - self.k):]         # (N-K, K) parity completion
        self.hard2 = combined.apply(hard)
        self.y2_mag = combined.apply(rel)
        self.c_m = self.hard2[n - self.k:].copy()
        problem.y2_mag = self.y2_mag
        self._q2_i64 = self.q2.astype(np.int64)

    def candidates(self, flips_matrix: np.ndarray) -> np.ndarray:
        """(B, K) 0/1 flip masks -> (B, N) candidates in permuted order."""
        c2 = self.c_m[None, :] ^ flips_matrix
        c1 = (c2.astype(np.int64) @ self._q2_i64.T) & 1
        return np.concatenate([c1.astype(np.uint8), c2], axis=1)

    def distances(self, candidates: np.ndarray) -> np.ndarray:
        return ((candidates != self.hard2[None, :]) * self.y2_mag).sum(axis=1)

    def to_original(self, candidate2: np.ndarray) -> np.ndarray:
        return self.perm.inverse().apply(candidate2)


def order_and_reduce(problem: OsdProblem) -> OrderedProblem:
    return OrderedProblem(problem)


def flips_matrix(teps: list[Tep], k: int) -> np.ndarray:
    m = np.zeros((len(teps), k), dtype=np.uint8)
    for i, tep in enumerate(teps):
        if tep.flips and tep.flips[-1] >= k:
            raise ValueError("flip position outside the basis")
        for f in tep.flips:
            m[i, f] = 1
    return m


def apply_tep(c_m: np.ndarray, tep: Tep, q2: np.ndarray) -> np.ndarray:
    """Single-candidate form: flip, complete parity, concatenate."""
    c2 = c_m.copy()
    for f in tep.flips:
        c2[f] ^= 1
    c1 = (c2.astype(np.int64) @ q2.astype(np.int64).T) & 1
    return np.concatenate([c1.astype(np.uint8), c2])


def candidate_distance(candidate: np.ndarray, hard2: np.ndarray,
                       y2_mag: np.ndarray) -> float:
    return float(((candidate != hard2) * y2_mag).sum())


class TraversalStats:
    def __init__(self, teps_checked=0, swa_calls=0, stopped_early=False,
                 best_distance=math.inf, best_tep_rank=-1):
        self.teps_checked = teps_checked
        self.swa_calls = swa_calls
        self.stopped_early = stopped_early
        self.best_distance = best_distance
        self.best_tep_rank = best_tep_rank


def _best_of(dist: np.ndarray) -> int:
    # argmin keeps the first occurrence, which is the lowest-rank tie-break
    return int(np.argmin(dist))


def osd_order_p(problem: OsdProblem, p: int, chunk: int = 4096):
    """Exhaustive reprocessing over every pattern of weight <= p."""
    ordered = order_and_reduce(problem)
    teps = tep_weight_order(ordered.k, p)
    best_d, best_rank, best_cand = math.inf, -1, None
    for lo in range(0, len(teps), chunk):
        batch = teps[lo:lo + chunk]
        cands = ordered.candidates(flips_matrix(batch, ordered.k))
        dist = ordered.distances(cands)
        j = _best_of(dist)
        if dist[j] < best_d:
            best_d, best_rank, best_cand = float(dist[j]), lo + j, cands[j]
    stats = TraversalStats(teps_checked=len(teps), best_distance=best_d,
                           best_tep_rank=best_rank)
    return ordered.to_original(best_cand), stats


def path_block_minima(ordered: OrderedProblem, path: list[Tep], b_s: int,
                      fm: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Distances for the whole path plus per-block minima (offline labeling)."""
    if fm is None:
        fm = flips_matrix(path, ordered.k)
    dist = ordered.distances(ordered.candidates(fm))
    n_blocks = math.ceil(len(path) / b_s)
    bmins = np.array([dist[b * b_s:(b + 1) * b_s].min() for b in range(n_blocks)])
    return dist, bmins


def swa_sample_points(block_minima: np.ndarray, w_t: int):
    """Replay the trigger rule over recorded block minima.

    Returns (window, g_m) pairs at every point the stop gate would be
    consulted during a real traversal, in order.
    """
    samples = []
    if len(block_minima) <= w_t:
        return samples
    window = list(block_minima[:w_t])
    g_m = float(min(window))
    samples.append((np.array(window), g_m))
    for bmin in block_minima[w_t:]:
        trigger = bmin < g_m
        if trigger:
            g_m = float(bmin)
        window = window[1:] + [float(bmin)]
        if trigger:
            samples.append((np.array(window), g_m))
    return samples


def traverse_with_swa(problem: OsdProblem, path: list[Tep],
                      swa: SwaModel | None, b_s: int, w_t: int, s_m: float,
                      fm: np.ndarray | None = None):
    """Walk the pattern list in blocks; the stop gate may cut it short.

    The first w_t blocks always run and prime the window; that priming
    consultation counts as one gate call.  Afterwards the gate fires only
    when a block improves on the global minimum.  s_m = 1.0 disables the
    gate entirely (the full path is walked); a zero-distance minimum stops
    immediately since nothing can beat it.  `fm` optionally supplies the
    path's precomputed flip-mask matrix for reuse across frames.
    """
    if not path:
        raise ValueError("decoding path is empty")
    if b_s < 1 or w_t < 1:
        raise ValueError("block size and window length must be positive")
    use_swa = s_m < 1.0
    if use_swa and swa is None:
        raise ValueError("stop gate enabled (s_m < 1) but no model supplied")

    ordered = order_and_reduce(problem)
    if fm is None:
        fm = flips_matrix(path, ordered.k)
    length = len(path)
    stats = TraversalStats()

    def eval_rows(lo, hi):
        cands = ordered.candidates(fm[lo:hi])
        return cands, ordered.distances(cands)

    if length <= b_s * w_t or not use_swa:
        best_d, best_rank, best_cand = math.inf, -1, None
        if not use_swa:
            # still walk in blocks so memory stays bounded on long paths
            step = max(b_s * w_t, 4096)
        else:
            step = length
        for lo in range(0, length, step):
            cands, dist = eval_rows(lo, min(lo + step, length))
            j = _best_of(dist)
            if dist[j] < best_d:
                best_d, best_rank, best_cand = float(dist[j]), lo + j, cands[j]
        stats.teps_checked = length
        stats.best_distance, stats.best_tep_rank = best_d, best_rank
        return ordered.to_original(best_cand), stats

    n_blocks = math.ceil(length / b_s)
    window = []
    g_m, best_rank, best_cand = math.inf, -1, None
    stopped = False
    checked = 0
    for b in range(n_blocks):
        lo, hi = b * b_s, min((b + 1) * b_s, length)
        cands, dist = eval_rows(lo, hi)
        checked += hi - lo
        j = _best_of(dist)
        bmin = float(dist[j])
        improved = bmin < g_m
        if improved:
            g_m, best_rank, best_cand = bmin, lo + j, cands[j]
        window.append(bmin)
        if len(window) > w_t:
            window.pop(0)
        if len(window) < w_t or b < w_t - 1:
            continue
        consult = (b == w_t - 1) or improved
        if not consult:
            continue
        if g_m == 0.0:
            stopped = True
            break
        stats.swa_calls += 1
        p_stop, p_cont = swa_infer(swa, np.array(window), g_m)
        if (p_stop - p_cont) >= s_m:
            stopped = True
            break
    stats.teps_checked = checked
    stats.stopped_early = stopped
    stats.best_distance, stats.best_tep_rank = g_m, best_rank
    return ordered.to_original(best_cand), stats
