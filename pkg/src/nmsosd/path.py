"""Construction and empirical refinement of the candidate-pattern list.

The a-priori list ranks test error patterns by the expected cost of the
bits they flip: the mean reliability of each sorted position, estimated
once per SNR by Monte Carlo, summed over the flipped positions.  The
running buffer then adjusts ranks from observed error patterns with
per-pattern counters, so patterns the channel actually produces migrate
toward the front.

Files are plain CSV with a versioned comment header.
"""

from __future__ import annotations

import math
from itertools import combinations

import numpy as np

from .channel import sigma_from_snr
from .osd import Tep, tep_weight_order

FILE_VERSION = 1


class LambdaVector:
    """Mean ascending-sorted channel magnitudes at one operating point."""

    def __init__(self, lam, snr_db, sample_count, seed):
        lam = np.asarray(lam, dtype=np.float64)
        if np.any(np.diff(lam) < 0):
            raise ValueError("lambda must be nondecreasing")
        self.lam = lam
        self.snr_db = float(snr_db)
        self.sample_count = int(sample_count)
        self.seed = int(seed)

    @property
    def n(self) -> int:
        return self.lam.shape[0]

    def mrb(self, k: int) -> np.ndarray:
        """Per-position means for the K most reliable slots (basis coords)."""
        return self.lam[self.n - k:]


def estimate_lambda(n: int, snr_db: float, rate: float, samples: int = 10 ** 6,
                    seed: int = 0, chunk: int = 8192) -> LambdaVector:
    """Monte Carlo means of the ascending order statistics of |y|."""
    if samples < 10 ** 5:
        raise ValueError("need at least 1e5 samples for stable order statistics")
    sigma = math.sqrt(sigma_from_snr(snr_db, rate))
    rng = np.random.Generator(np.random.Philox(seed))
    total = np.zeros(n)
    done = 0
    while done < samples:
        b = min(chunk, samples - done)
        y = 1.0 + sigma * rng.standard_normal((b, n))
        total += np.sort(np.abs(y), axis=1).sum(axis=0)
        done += b
    lam = total / samples
    lam = np.maximum.accumulate(lam)   # isotonic clip against MC jitter
    return LambdaVector(lam, snr_db, samples, seed)


def _count_upto(m: int, p_max: int) -> int:
    return sum(math.comb(m, w) for w in range(min(p_max, m) + 1))


def almlt_order(lambda_mrb: np.ndarray, p_max: int, budget: int) -> list[Tep]:
    """Patterns of weight <= p_max with the smallest reliability sums.

    Scores are sums of lambda over flipped basis positions; ties break by
    (weight, lexicographic flips).  Enumeration is pruned with one prefix
    cap per weight: weight-w patterns are expanded only over the cheapest
    cap_w positions, and each cap grows until every excluded weight-w
    pattern provably scores above the returned worst score (any excluded
    pattern costs at least the w-1 cheapest positions plus lambda[cap_w]).
    """
    lam = np.asarray(lambda_mrb, dtype=np.float64)
    k = lam.shape[0]
    if np.any(np.diff(lam) < 0):
        raise ValueError("lambda over the basis must be nondecreasing")
    if budget < 1:
        raise ValueError("budget must be positive")
    p_max = min(p_max, k)
    budget = min(budget, _count_upto(k, p_max))
    prefix = np.concatenate([[0.0], np.cumsum(lam)])
    lam_l = lam.tolist()

    caps = [0] * (p_max + 1)
    for w in range(1, p_max + 1):
        caps[w] = k if w == 1 else min(k, max(w, 8))
    while True:
        pool = [(0.0, 0, ())]
        for w in range(1, p_max + 1):
            for flips in combinations(range(caps[w]), w):
                s = 0.0
                for f in flips:
                    s += lam_l[f]
                pool.append((s, w, flips))
        pool.sort(key=lambda rec: (rec[0], rec[1], rec[2]))
        if len(pool) < budget:
            for w in range(1, p_max + 1):
                caps[w] = min(k, 2 * caps[w])
            continue
        pool = pool[:budget]
        worst = pool[-1][0]
        grown = False
        for w in range(1, p_max + 1):
            if caps[w] < k and not (prefix[w - 1] + lam[caps[w]] > worst):
                caps[w] = min(k, 2 * caps[w])
                grown = True
        if not grown:
            break
    return [Tep(flips) for _, _, flips in pool]


def cvt_order(k: int, p_max: int, budget: int) -> list[Tep]:
    """Weight-then-lexicographic baseline list."""
    return tep_weight_order(k, p_max, budget=budget)


class TepEntry:
    __slots__ = ("tep", "counter", "initial_rank")

    def __init__(self, tep: Tep, counter: float, initial_rank: int):
        self.tep = tep
        self.counter = float(counter)
        self.initial_rank = int(initial_rank)


class PathBuffer:
    """Counter-ranked pattern buffer; the live path is its first l_t entries.

    Counters start at the initial rank, drop by one per observed occurrence,
    and the buffer re-sorts ascending by counter after each batch (ties keep
    the stable pre-existing order via initial rank).
    """

    def __init__(self, teps: list[Tep], l_t: int, beta: float):
        if l_t < 1:
            raise ValueError("path length must be positive")
        if beta < 1:
            raise ValueError("relaxing factor must be >= 1")
        want = int(round(beta * l_t))
        if len(teps) < want:
            raise ValueError(f"buffer needs {want} patterns, got {len(teps)}")
        self.l_t = int(l_t)
        self.beta = float(beta)
        self.batch_count = 0
        self.entries = [TepEntry(t, i, i) for i, t in enumerate(teps[:want])]
        self._index = {e.tep.flips: e for e in self.entries}

    @property
    def size(self) -> int:
        return len(self.entries)

    def current_path(self) -> list[Tep]:
        return [e.tep for e in self.entries[:self.l_t]]

    def update_with_batch(self, observed) -> int:
        """Subtract occurrence counts and re-sort.  Returns matched count.

        observed: iterable of Tep or flip tuples (true or estimated error
        patterns over the basis).  Patterns not in the buffer are ignored.
        """
        matched = 0
        for pat in observed:
            flips = pat.flips if isinstance(pat, Tep) else tuple(sorted(pat))
            entry = self._index.get(flips)
            if entry is not None:
                entry.counter -= 1.0
                matched += 1
        self.entries.sort(key=lambda e: (e.counter, e.initial_rank))
        self.batch_count += 1
        return matched


# ---------------------------------------------------------------------
# CSV persistence
# ---------------------------------------------------------------------

def _fmt_flips(flips) -> str:
    return ";".join(str(f) for f in flips) if flips else "-"


def _parse_flips(s: str):
    return () if s == "-" else tuple(int(x) for x in s.split(";"))


def save_lambda(path, lv: LambdaVector):
    with open(path, "w") as fh:
        fh.write(f"# version={FILE_VERSION} kind=lambda n={lv.n} "
                 f"snr_db={lv.snr_db!r} samples={lv.sample_count} seed={lv.seed}\n")
        fh.write("index,value\n")
        for i, v in enumerate(lv.lam):
            fh.write(f"{i},{float(v)!r}\n")


def load_lambda(path) -> LambdaVector:
    with open(path) as fh:
        header = fh.readline()
        meta = _parse_header(header, "lambda")
        fh.readline()
        vals = [float(line.split(",")[1]) for line in fh if line.strip()]
    return LambdaVector(vals, float(meta["snr_db"]), int(meta["samples"]),
                        int(meta["seed"]))


def save_path_buffer(path, buf: PathBuffer, meta: dict | None = None):
    extra = " ".join(f"{k}={v}" for k, v in (meta or {}).items())
    with open(path, "w") as fh:
        fh.write(f"# version={FILE_VERSION} kind=path l_t={buf.l_t} "
                 f"beta={buf.beta!r} batch_count={buf.batch_count}"
                 + (f" {extra}" if extra else "") + "\n")
        fh.write("rank,flips,counter\n")
        for rank, e in enumerate(buf.entries):
            fh.write(f"{rank},{_fmt_flips(e.tep.flips)},{float(e.counter)!r}\n")


def load_path_buffer(path) -> PathBuffer:
    with open(path) as fh:
        meta = _parse_header(fh.readline(), "path")
        fh.readline()
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    buf = PathBuffer.__new__(PathBuffer)
    buf.l_t = int(meta["l_t"])
    buf.beta = float(meta["beta"])
    buf.batch_count = int(meta["batch_count"])
    buf.entries = [TepEntry(Tep(_parse_flips(r[1])), float(r[2]), i)
                   for i, r in enumerate(rows)]
    buf._index = {e.tep.flips: e for e in buf.entries}
    if len(buf.entries) < buf.l_t:
        raise ValueError("path file holds fewer entries than its l_t")
    return buf


def _parse_header(line: str, expect_kind: str) -> dict:
    if not line.startswith("# "):
        raise ValueError("missing metadata header line")
    meta = {}
    for tok in line[2:].split():
        key, _, val = tok.partition("=")
        meta[key] = val
    if int(meta.get("version", -1)) != FILE_VERSION:
        raise ValueError(f"unsupported file version {meta.get('version')}")
    if meta.get("kind") != expect_kind:
        raise ValueError(f"expected a {expect_kind} file, found {meta.get('kind')}")
    return meta
