"""BPSK over AWGN: SNR conversions, frame transmission, LLR formation.

SNR convention: snr_db = -10*log10(2*R*sigma^2), i.e. Eb/N0 for unit-energy
BPSK symbols.  The decoder itself is scale invariant, so callers that want
the fixed-variance convention simply form LLRs with sigma2=2 (llr == y).
"""

from __future__ import annotations

import math

import numpy as np


class ChannelConfig:
    def __init__(self, snr_db: float, rate: float):
        if not 0 < rate <= 1:
            raise ValueError("rate must be in (0, 1]")
        self.snr_db = float(snr_db)
        self.rate = float(rate)
        self.sigma2 = sigma_from_snr(snr_db, rate)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)

    def __repr__(self):
        return f"ChannelConfig(snr_db={self.snr_db}, rate={self.rate:.4f}, sigma2={self.sigma2:.6f})"


class Frame:
    """One transmitted frame with its channel observations."""

    def __init__(self, tx_bits, symbols, y, llr, seed_tag=""):
        self.tx_bits = np.asarray(tx_bits, dtype=np.uint8)
        self.symbols = np.asarray(symbols, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)
        self.llr = np.asarray(llr, dtype=np.float64)
        self.seed_tag = seed_tag


def sigma_from_snr(snr_db: float, rate: float) -> float:
    """Noise variance sigma^2 for the given SNR in dB."""
    if not 0 < rate <= 1:
        raise ValueError("rate must be in (0, 1]")
    return 10.0 ** (-snr_db / 10.0) / (2.0 * rate)


def snr_from_sigma(sigma2: float, rate: float) -> float:
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    return -10.0 * math.log10(2.0 * rate * sigma2)


def modulate(bits: np.ndarray) -> np.ndarray:
    """BPSK map 0 -> +1, 1 -> -1, any leading batch shape."""
    return 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)


def llr(y: np.ndarray, sigma2: float) -> np.ndarray:
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    return 2.0 * np.asarray(y, dtype=np.float64) / sigma2


def transmit(bits: np.ndarray, sigma2: float, rng: np.random.Generator,
             seed_tag: str = "") -> Frame:
    """Send one frame of bits through the AWGN channel."""
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    bits = np.asarray(bits, dtype=np.uint8)
    s = modulate(bits)
    y = s + rng.normal(0.0, math.sqrt(sigma2), size=s.shape)
    return Frame(bits, s, y, llr(y, sigma2), seed_tag=seed_tag)


def transmit_batch(bits: np.ndarray, sigma2: float,
                   rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """(B, N) bits -> (y, llr) arrays of shape (B, N)."""
    s = modulate(bits)
    y = s + rng.normal(0.0, math.sqrt(sigma2), size=s.shape)
    return y, llr(y, sigma2)


def worker_stream(master_seed: int, *path: int) -> np.random.Generator:
    """Deterministic counter-based stream for one (worker, task, ...) path.

    Distinct paths give statistically independent streams; the same path
    always reproduces the same draws regardless of scheduling.
    """
    seq = np.random.SeedSequence([int(master_seed), *(int(p) for p in path)])
    return np.random.Generator(np.random.Philox(seq))
