"""Monte Carlo harness and complexity accounting.

Frames are generated in fixed-size batches, each batch from its own
seeded substream, so a run is reproducible regardless of where the stop
rule lands and partial reports merge associatively.

The binary-operation model counts q-bit operations per decoded frame:
min-sum comparisons and additions for the first stage, sorting plus
Gaussian elimination plus re-encoding for the second, and two q-bit
operations per multiply-accumulate for the gate networks.  The hybrid
total charges the second stage only at its invocation rate.
"""

from __future__ import annotations

import math

import numpy as np

from .channel import llr as channel_llr
from .channel import modulate, sigma_from_snr, worker_stream
from .codes import CodeSpec
from .models import trajectory_window
from .pipeline import HybridConfig, HybridRunner


def wilson_interval(k: int, n: int, z: float = 1.96) -> tuple[float, float]:
    """Score interval for a binomial proportion; safe at k=0 and k=n."""
    if n <= 0:
        raise ValueError("need at least one trial")
    phat = k / n
    denom = 1.0 + z * z / n
    center = (phat + z * z / (2 * n)) / denom
    half = (z / denom) * math.sqrt(phat * (1 - phat) / n + z * z / (4 * n * n))
    return max(0.0, center - half), min(1.0, center + half)


class ComplexityModel:
    """Binary-operation counts parameterized by measured run statistics."""

    def __init__(self, n: int, k: int, d_v: float, q: int = 6):
        self.n, self.k, self.d_v, self.q = n, k, float(d_v), q
        self.rate = k / n

    def c_ms(self, i_ai: float) -> float:
        q, dv, r = self.q, self.d_v, self.rate
        return i_ai * self.n * (q * (3 * dv + 2 * r) + 2 * dv - 1 + r)

    def c_nms(self, i_ai: float) -> float:
        return self.c_ms(i_ai) + i_ai * self.n * self.q * (2 * self.d_v + 1)

    def c_bp(self, i_ai: float) -> float:
        q, dv, r = self.q, self.d_v, self.rate
        return i_ai * self.n * (q * (8 * dv + 12 * r - 11) + dv)

    def c_osd(self, i_at: float) -> float:
        q, n, k = self.q, self.n, self.k
        return (q * n * math.log2(n) + (k / 2) ** 3
                + i_at * (q * (n - k) / 2 + n * k / 2))

    def dia_bops(self, i_m: int) -> float:
        t = trajectory_window(i_m)
        macs = self.n * (3 * 1 * 4 * t + 3 * 4 * 2 * t + 2 * t * 1)
        return 2 * macs * self.q

    def ude_bops(self, i_m: int) -> float:
        macs = 3 * 1 * 2 * i_m + 2 * i_m * 2
        return 2 * macs * self.q

    def swa_bops(self, w_t: int) -> float:
        macs = w_t * 2 * w_t + 2 * w_t * 2
        return 2 * macs * self.q

    def hybrid(self, i_ai: float, i_at: float, rho: float, i_s: int = 1,
               i_r: float = 1.0, i_m: int = 0, w_t: int = 0,
               with_dia: bool = False, with_ude: bool = False,
               swa_calls: float = 0.0) -> dict:
        """Full breakdown; the first-stage term scales with dilation."""
        c_first = self.c_nms(i_ai) * i_s * i_r
        c_id = c_first + (self.ude_bops(i_m) if with_ude else 0.0)
        c_second = self.c_osd(i_at)
        if with_dia:
            c_second += self.dia_bops(i_m)
        if swa_calls > 0:
            c_second += swa_calls * self.swa_bops(w_t)
        return {"c_ms": self.c_ms(i_ai), "c_nms": self.c_nms(i_ai),
                "c_bp": self.c_bp(i_ai), "c_first": c_first,
                "c_osd": c_second, "c_hb": c_id + rho * c_second}


class SnrRow:
    """Accumulated statistics for one sweep point."""

    def __init__(self, snr_db: float, i_m: int, n: int):
        self.snr_db = float(snr_db)
        self.i_m = i_m
        self._n = n
        self.frames = 0
        self.frame_errors = 0
        self.bit_errors = 0
        self.iter_hist = np.zeros(i_m, dtype=np.int64)
        self.osd_frames = 0
        self.osd_errors = 0
        self.nms_wrong_accepts = 0
        self.teps_total = 0
        self.swa_calls_total = 0
        self.ude_acc_ok = 0
        self.ude_acc_bad = 0
        self.ude_rej_ok = 0
        self.ude_rej_bad = 0
        self.bops = {}

    # -- derived quantities -------------------------------------------
    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames if self.frames else 0.0

    @property
    def ber(self) -> float:
        return self.bit_errors / (self.frames * self._n) if self.frames else 0.0

    @property
    def i_ai(self) -> float:
        if not self.frames:
            return 0.0
        iters = np.arange(1, self.i_m + 1)
        return float((self.iter_hist * iters).sum() / self.frames)

    @property
    def rho(self) -> float:
        return self.osd_frames / self.frames if self.frames else 0.0

    @property
    def i_at(self) -> float:
        return self.teps_total / self.osd_frames if self.osd_frames else 0.0

    @property
    def swa_calls_mean(self) -> float:
        return self.swa_calls_total / self.osd_frames if self.osd_frames else 0.0

    def fer_interval(self, z: float = 1.96) -> tuple[float, float]:
        return wilson_interval(self.frame_errors, self.frames, z)

    def merge(self, other: "SnrRow") -> "SnrRow":
        if other.snr_db != self.snr_db or other.i_m != self.i_m:
            raise ValueError("rows belong to different sweep points")
        out = SnrRow(self.snr_db, self.i_m, self._n)
        for name in ("frames", "frame_errors", "bit_errors", "osd_frames",
                     "osd_errors", "nms_wrong_accepts", "teps_total",
                     "swa_calls_total", "ude_acc_ok", "ude_acc_bad",
                     "ude_rej_ok", "ude_rej_bad"):
            setattr(out, name, getattr(self, name) + getattr(other, name))
        out.iter_hist = self.iter_hist + other.iter_hist
        return out


class SimReport:
    def __init__(self, label: str, code_name: str, n: int, k: int):
        self.label = label
        self.code_name = code_name
        self.n, self.k = n, k
        self.rows: list[SnrRow] = []

    def row(self, snr_db: float) -> SnrRow:
        for r in self.rows:
            if r.snr_db == snr_db:
                return r
        raise KeyError(f"no row at {snr_db} dB")


def monte_carlo(code: CodeSpec, snrs, cfg: HybridConfig, min_errors: int = 100,
                max_frames: int = 10 ** 5, seed: int = 0, batch: int = 512,
                label: str = "") -> SimReport:
    """FER/BER sweep with an error-count stop rule per point."""
    if min_errors < 1:
        raise ValueError("stop rule needs at least one frame error")
    if max_frames < batch:
        raise ValueError("frame cap smaller than one batch")
    runner = HybridRunner(code, cfg)
    report = SimReport(label or code.name, code.name, code.n, code.k)
    g_i64 = code.g.a.astype(np.int64)
    for si, snr_db in enumerate(snrs):
        sigma2 = sigma_from_snr(snr_db, code.rate)
        row = SnrRow(snr_db, cfg.nms.i_m, code.n)
        batch_idx = 0
        while row.frame_errors < min_errors and row.frames < max_frames:
            b = min(batch, max_frames - row.frames)
            rng = worker_stream(seed, si, batch_idx)
            msgs = rng.integers(0, 2, size=(b, code.k), dtype=np.int64)
            tx = ((msgs @ g_i64) & 1).astype(np.uint8)
            y = modulate(tx) + math.sqrt(sigma2) * rng.standard_normal((b, code.n))
            outcomes = runner.run_batch(channel_llr(y, sigma2), tx)
            for out, tx_row in zip(outcomes, tx):
                row.frames += 1
                nbit = int(np.count_nonzero(out.decoded != tx_row))
                row.bit_errors += nbit
                if nbit:
                    row.frame_errors += 1
                row.iter_hist[out.nms_iters - 1] += 1
                if out.stage == "osd":
                    row.osd_frames += 1
                    if nbit:
                        row.osd_errors += 1
                    if out.traversal is not None:
                        row.teps_total += out.traversal.teps_checked
                        row.swa_calls_total += out.traversal.swa_calls
                elif nbit:
                    row.nms_wrong_accepts += 1
                if out.ude_margin is not None and out.nms_correct is not None:
                    acc = out.stage == "nms_accepted"
                    if acc and out.nms_correct:
                        row.ude_acc_ok += 1
                    elif acc:
                        row.ude_acc_bad += 1
                    elif out.nms_correct:
                        row.ude_rej_ok += 1
                    else:
                        row.ude_rej_bad += 1
            batch_idx += 1
        report.rows.append(row)
    return report


def attach_complexity(report: SimReport, cm: ComplexityModel, cfg: HybridConfig,
                      i_r: float = 1.0):
    """Fill each row's BOPS breakdown from its measured statistics.

    i_r: parity-check redundancy factor of the dilated first stage
    (redundant rows / base rows); leave 1.0 for standard decoding.
    """
    dilated = cfg.nms.dilated
    for row in report.rows:
        row.bops = cm.hybrid(
            row.i_ai, row.i_at, row.rho,
            i_s=cfg.nms.i_s if dilated else 1,
            i_r=i_r if dilated else 1.0, i_m=cfg.nms.i_m,
            w_t=cfg.osd_mode.w_t, with_dia=cfg.dia is not None,
            with_ude=cfg.ude is not None, swa_calls=row.swa_calls_mean)
    return report


CSV_COLUMNS = ("snr_db", "frames", "frame_errors", "fer", "ber", "i_ai",
               "rho", "i_at", "swa_calls", "c_hb_bops")


def export_csv(report: SimReport, path):
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in report.rows:
            vals = (r.snr_db, r.frames, r.frame_errors, r.fer, r.ber, r.i_ai,
                    r.rho, r.i_at, r.swa_calls_mean, r.bops.get("c_hb", 0.0))
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v)
                              for v in vals) + "\n")


def parse_csv(path) -> list[dict]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        if tuple(header) != CSV_COLUMNS:
            raise ValueError("unexpected results CSV header")
        rows = []
        for line in fh:
            if not line.strip():
                continue
            vals = line.strip().split(",")
            rows.append({k: float(v) for k, v in zip(header, vals)})
    return rows


def plot_fer(series, path):
    """series: list of (label, SimReport); writes a log-FER sweep figure."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for label, rep in series:
        snrs = [r.snr_db for r in rep.rows]
        fers = [max(r.fer, 1e-12) for r in rep.rows]
        los = [max(r.fer_interval()[0], 1e-12) for r in rep.rows]
        his = [max(r.fer_interval()[1], 1e-12) for r in rep.rows]
        ax.semilogy(snrs, fers, marker="o", label=label)
        ax.fill_between(snrs, los, his, alpha=0.15)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("FER")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
