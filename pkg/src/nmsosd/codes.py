"""Linear block code definitions used by the decoders and the harness.

A CodeSpec bundles the parity-check matrix h (full row rank, used by the
ordered-statistics stage), an optional redundant matrix h_o spanning the
same dual (used by the belief-propagation stage when available), and a
generator for encoding.
"""

from __future__ import annotations

import numpy as np

from .gf2 import (Gf2Matrix, build_redundant_pcm, encode, generator_from_h,
                  gf2_matmul, gf2_rank, load_alist, syndrome)


class CodeSpec:
    """Immutable description of one binary linear code."""

    def __init__(self, name: str, n: int, k: int, h: Gf2Matrix,
                 h_o: Gf2Matrix | None = None, g: Gf2Matrix | None = None):
        if h.cols != n:
            raise ValueError(f"h has {h.cols} columns, expected n={n}")
        if h.rows != n - k:
            raise ValueError(f"h has {h.rows} rows, expected n-k={n - k}")
        if gf2_rank(h.a) != n - k:
            raise ValueError("h is not full row rank")
        if g is None:
            g = generator_from_h(h)
        if g.rows != k or g.cols != n:
            raise ValueError("generator has wrong shape")
        if np.any(gf2_matmul(g.a, h.a.T)):
            raise ValueError("generator rows are not codewords of h")
        if gf2_rank(g.a) != k:
            raise ValueError("generator is rank deficient")
        if h_o is not None:
            if h_o.cols != n:
                raise ValueError("h_o column count mismatch")
            if np.any(gf2_matmul(h_o.a, g.a.T)):
                raise ValueError("h_o rows are not dual codewords (different code)")
            if gf2_rank(h_o.a) != n - k:
                raise ValueError("h_o does not span the dual (different code)")
        self.name = name
        self.n = n
        self.k = k
        self.h = h
        self.h_o = h_o
        self.g = g

    @property
    def rate(self) -> float:
        return self.k / self.n

    def encode(self, message: np.ndarray) -> np.ndarray:
        return encode(self.g, message)

    def syndrome(self, word: np.ndarray, use_h_o: bool = False) -> np.ndarray:
        pcm = self.h_o if (use_h_o and self.h_o is not None) else self.h
        return syndrome(pcm, word)

    def is_codeword(self, word: np.ndarray) -> bool:
        return not np.any(self.syndrome(word))

    def __repr__(self):
        return f"CodeSpec({self.name}, n={self.n}, k={self.k})"


# ---------------------------------------------------------------------
# small fixed codes
# ---------------------------------------------------------------------

def hamming_7_4() -> CodeSpec:
    h = Gf2Matrix([
        [1, 0, 1, 0, 1, 0, 1],
        [0, 1, 1, 0, 0, 1, 1],
        [0, 0, 0, 1, 1, 1, 1],
    ])
    return CodeSpec("hamming_7_4", 7, 4, h)


def random_code(n: int, k: int, seed: int) -> CodeSpec:
    """Random full-row-rank parity-check matrix; deterministic in seed."""
    rng = np.random.Generator(np.random.Philox(seed))
    while True:
        h = rng.integers(0, 2, size=(n - k, n), dtype=np.uint8)
        if gf2_rank(h) == n - k and np.all(h.sum(axis=1) >= 2) and np.all(h.sum(axis=0) >= 1):
            return CodeSpec(f"random_{n}_{k}", n, k, Gf2Matrix(h))


# ---------------------------------------------------------------------
# array-type LDPC
# ---------------------------------------------------------------------

def array_ldpc_49_36() -> CodeSpec:
    """Two-block-row array code: [I I ... I ; I P P^2 ... P^6], P = 7x7 rotation.

    The stacked 14x49 matrix has rank 13 (each block row sums to all-ones),
    so one dependent row is dropped for the full-rank h while the complete
    stack is kept as the redundant h_o for belief propagation.
    """
    q = 7
    ident = np.eye(q, dtype=np.uint8)
    p = np.roll(ident, 1, axis=1)
    top = np.concatenate([ident] * q, axis=1)
    bottom = np.concatenate(
        [np.linalg.matrix_power(p.astype(np.int64), j).astype(np.uint8) % 2
         for j in range(q)], axis=1)
    full = np.concatenate([top, bottom], axis=0)       # 14 x 49, rank 13
    reduced = full[:-1]                                # drop one dependent row
    if gf2_rank(reduced) != 13:
        raise AssertionError("array code reduction lost rank")
    return CodeSpec("ldpc_49_36", 49, 36, Gf2Matrix(reduced), h_o=Gf2Matrix(full))


# ---------------------------------------------------------------------
# protograph LDPC (128, 64)
# ---------------------------------------------------------------------

def _circ(m: int, k: int) -> np.ndarray:
    return np.roll(np.eye(m, dtype=np.uint8), k % m, axis=1)


def protograph_ldpc_128_64() -> CodeSpec:
    """Telecommand-class short LDPC code built from 16x16 circulants.

    4x8 base matrix; entries are circulant powers, pairs are summed blocks,
    None is the zero block.  Average variable degree 4, full rank 64.
    """
    m = 16
    base: list[list[object]] = [
        [(0, 7), 2, 14, 6, None, 0, 13, (0,)],
        [6, (0, 15), 0, 1, (0,), None, 0, 7],
        [4, 1, (0, 15), 14, 11, (0,), None, 3],
        [0, 1, 9, (0, 13), 14, 1, (0,), None],
    ]
    block_rows = []
    for row in base:
        blocks = []
        for entry in row:
            if entry is None:
                blocks.append(np.zeros((m, m), dtype=np.uint8))
            elif isinstance(entry, tuple):
                acc = np.zeros((m, m), dtype=np.uint8)
                for kk in entry:
                    acc ^= _circ(m, kk)
                blocks.append(acc)
            else:
                blocks.append(_circ(m, int(entry)))
        block_rows.append(np.concatenate(blocks, axis=1))
    h = np.concatenate(block_rows, axis=0)
    if gf2_rank(h) != 64:
        raise AssertionError("protograph matrix is rank deficient")
    return CodeSpec("ldpc_128_64", 128, 64, Gf2Matrix(h))


# ---------------------------------------------------------------------
# binary BCH codes
# ---------------------------------------------------------------------

_PRIMITIVE_POLY = {6: 0b1000011, 7: 0b10001001}   # x^6+x+1, x^7+x^3+1


class _Gf2m:
    """Tiny GF(2^m) table arithmetic for generator-polynomial construction."""

    def __init__(self, m: int):
        if m not in _PRIMITIVE_POLY:
            raise ValueError(f"no primitive polynomial configured for m={m}")
        self.m = m
        self.n = (1 << m) - 1
        poly = _PRIMITIVE_POLY[m]
        self.exp = np.zeros(2 * self.n, dtype=np.int64)
        self.log = np.zeros(self.n + 1, dtype=np.int64)
        x = 1
        for i in range(self.n):
            self.exp[i] = x
            self.log[x] = i
            x <<= 1
            if x & (1 << m):
                x ^= poly
        self.exp[self.n:] = self.exp[: self.n]

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return int(self.exp[self.log[a] + self.log[b]])

    def alpha_pow(self, i: int) -> int:
        return int(self.exp[i % self.n])


def _poly_mul_gf2m(field: _Gf2m, a: list[int], b: list[int]) -> list[int]:
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai == 0:
            continue
        for j, bj in enumerate(b):
            if bj:
                out[i + j] ^= field.mul(ai, bj)
    return out


def _minimal_poly(field: _Gf2m, i: int) -> list[int]:
    """Minimal polynomial of alpha^i over GF(2), coefficients low-to-high."""
    coset = set()
    j = i % field.n
    while j not in coset:
        coset.add(j)
        j = (j * 2) % field.n
    poly = [1]
    for e in sorted(coset):
        poly = _poly_mul_gf2m(field, poly, [field.alpha_pow(e), 1])
    if any(c not in (0, 1) for c in poly):
        raise AssertionError("minimal polynomial has non-binary coefficients")
    return poly


def _poly_mul_gf2(a: list[int], b: list[int]) -> list[int]:
    out = [0] * (len(a) + len(b) - 1)
    for i, ai in enumerate(a):
        if ai:
            for j, bj in enumerate(b):
                out[i + j] ^= ai & bj
    return out


def _poly_divmod_gf2(num: list[int], den: list[int]) -> tuple[list[int], list[int]]:
    num = list(num)
    dd = len(den) - 1
    while den[-1] == 0:
        den = den[:-1]
        dd -= 1
    quot = [0] * max(1, len(num) - dd)
    for i in range(len(num) - 1, dd - 1, -1):
        if num[i]:
            quot[i - dd] = 1
            for j, c in enumerate(den):
                num[i - dd + j] ^= c
    return quot, num[:dd]


def bch_code(n: int, k: int, t: int) -> CodeSpec:
    """Narrow-sense binary BCH code from its generator polynomial.

    g(x) = lcm of minimal polynomials of alpha^1 .. alpha^{2t}; the parity
    check matrix rows are the shifts of the reversed parity polynomial
    h(x) = (x^n - 1) / g(x), which yields a full-rank (n-k) x n band matrix.
    """
    m = (n + 1).bit_length() - 1
    if (1 << m) - 1 != n:
        raise ValueError("BCH length must be 2^m - 1")
    field = _Gf2m(m)
    g = [1]
    covered: set[int] = set()
    for i in range(1, 2 * t + 1):
        if i % field.n in covered:
            continue
        j = i % field.n
        while j not in covered:
            covered.add(j)
            j = (j * 2) % field.n
        g = _poly_mul_gf2(g, _minimal_poly(field, i))
    deg_g = len(g) - 1
    if n - deg_g != k:
        raise ValueError(f"BCH({n},{n - deg_g}) produced; requested k={k}")
    xn1 = [0] * n + [1]
    xn1[0] = 1
    hpoly, rem = _poly_divmod_gf2(xn1, g)
    if any(rem):
        raise AssertionError("generator polynomial does not divide x^n - 1")
    hrev = hpoly[::-1]                      # degree k, length k+1
    rows = np.zeros((n - k, n), dtype=np.uint8)
    for i in range(n - k):
        rows[i, i:i + k + 1] = hrev
    gen = np.zeros((k, n), dtype=np.uint8)
    for i in range(k):
        gen[i, i:i + deg_g + 1] = g
    return CodeSpec(f"bch_{n}_{k}", n, k, Gf2Matrix(rows), g=Gf2Matrix(gen))


def bch_63_45(with_h_o: bool = False, i_r: float = 2.0) -> CodeSpec:
    code = bch_code(63, 45, t=3)
    if with_h_o:
        h_o = build_redundant_pcm(code.h, i_r=i_r)
        return CodeSpec("bch_63_45", 63, 45, code.h, h_o=h_o, g=code.g)
    return code


def bch_127_99() -> CodeSpec:
    return bch_code(127, 99, t=4)


# ---------------------------------------------------------------------
# registry / ingestion
# ---------------------------------------------------------------------

_REGISTRY = {
    "hamming_7_4": hamming_7_4,
    "ldpc_49_36": array_ldpc_49_36,
    "ldpc_128_64": protograph_ldpc_128_64,
    "bch_63_45": bch_63_45,
    "bch_127_99": bch_127_99,
}


def by_name(name: str) -> CodeSpec:
    if name not in _REGISTRY:
        raise ValueError(f"unknown code '{name}'; known: {sorted(_REGISTRY)}")
    return _REGISTRY[name]()


def known_codes() -> list[str]:
    return sorted(_REGISTRY)


def from_alist_files(name: str, n: int, k: int, h_path, h_o_path=None) -> CodeSpec:
    h = load_alist(h_path)
    h_o = load_alist(h_o_path) if h_o_path else None
    return CodeSpec(name, n, k, h, h_o=h_o)
