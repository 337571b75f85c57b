"""GF(2) matrices, permutations, alist ingestion and code-level helpers.

Everything in here is plain dense binary algebra over numpy uint8 arrays.
Matrices are row-major, entries 0/1.  Parity-check matrices follow the
usual shape (rows = checks, cols = variable nodes).
"""

from __future__ import annotations

import hashlib

import numpy as np


def _as_bits(a) -> np.ndarray:
    arr = np.asarray(a)
    if arr.dtype != np.uint8:
        arr = arr.astype(np.uint8)
    if not np.all(arr <= 1):
        raise ValueError("matrix entries must be 0/1")
    return arr


def gf2_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(a @ b) mod 2 without integer-overflow surprises."""
    prod = a.astype(np.int64) @ b.astype(np.int64)
    return (prod & 1).astype(np.uint8)


class Gf2Matrix:
    """Dense binary matrix.

    Attributes:
        a: uint8 ndarray of shape (rows, cols) with 0/1 entries.
    """

    def __init__(self, a):
        arr = _as_bits(a)
        if arr.ndim != 2:
            raise ValueError("need a 2-d array")
        self.a = arr

    @property
    def rows(self) -> int:
        return self.a.shape[0]

    @property
    def cols(self) -> int:
        return self.a.shape[1]

    def copy(self) -> "Gf2Matrix":
        return Gf2Matrix(self.a.copy())

    def rank(self) -> int:
        return gf2_rank(self.a)

    def row_weights(self) -> np.ndarray:
        return self.a.sum(axis=1)

    def col_weights(self) -> np.ndarray:
        return self.a.sum(axis=0)

    def sha256(self) -> str:
        h = hashlib.sha256()
        h.update(b"gf2:%d:%d:" % (self.rows, self.cols))
        h.update(np.packbits(self.a, axis=None).tobytes())
        return h.hexdigest()

    def __eq__(self, other):
        return isinstance(other, Gf2Matrix) and self.a.shape == other.a.shape \
            and bool(np.array_equal(self.a, other.a))

    def __repr__(self):
        return f"Gf2Matrix({self.rows}x{self.cols})"

    # -- dense text (debugging format) --------------------------------

    def to_dense_text(self) -> str:
        return "\n".join("".join(str(int(x)) for x in row) for row in self.a) + "\n"

    @classmethod
    def from_dense_text(cls, text: str) -> "Gf2Matrix":
        rows = [line.strip() for line in text.splitlines() if line.strip()]
        if not rows:
            raise ValueError("empty dense matrix text")
        width = len(rows[0])
        out = np.zeros((len(rows), width), dtype=np.uint8)
        for i, line in enumerate(rows):
            if len(line) != width or set(line) - {"0", "1"}:
                raise ValueError(f"bad dense row at line {i + 1}")
            out[i] = [int(ch) for ch in line]
        return cls(out)


def gf2_rank(a: np.ndarray) -> int:
    """Rank over GF(2) by plain forward elimination."""
    m = _as_bits(a).copy()
    rows, cols = m.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        pivots = np.nonzero(m[r:, c])[0]
        if pivots.size == 0:
            continue
        p = r + pivots[0]
        if p != r:
            m[[r, p]] = m[[p, r]]
        hit = np.nonzero(m[:, c])[0]
        hit = hit[hit != r]
        m[hit] ^= m[r]
        r += 1
    return r


def gf2_nullspace(a: np.ndarray) -> np.ndarray:
    """Basis of {x : a x^T = 0}, one basis vector per row (may be empty)."""
    m = _as_bits(a).copy()
    rows, cols = m.shape
    pivot_cols = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        pivots = np.nonzero(m[r:, c])[0]
        if pivots.size == 0:
            continue
        p = r + pivots[0]
        if p != r:
            m[[r, p]] = m[[p, r]]
        hit = np.nonzero(m[:, c])[0]
        hit = hit[hit != r]
        m[hit] ^= m[r]
        pivot_cols.append(c)
        r += 1
    free_cols = [c for c in range(cols) if c not in set(pivot_cols)]
    basis = np.zeros((len(free_cols), cols), dtype=np.uint8)
    for i, fc in enumerate(free_cols):
        basis[i, fc] = 1
        for rr, pc in enumerate(pivot_cols):
            if m[rr, fc]:
                basis[i, pc] = 1
    return basis


class Permutation:
    """Index permutation with destination semantics: map[i] = new position of i.

    apply(v)[map[i]] == v[i].
    """

    def __init__(self, mapping):
        m = np.asarray(mapping, dtype=np.int64)
        n = m.size
        if n == 0 or sorted(m.tolist()) != list(range(n)):
            raise ValueError("mapping is not a permutation of 0..n-1")
        self.map = m
        self._src = np.argsort(m)  # src[j] = old index landing at position j

    @property
    def n(self) -> int:
        return self.map.size

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(np.arange(n))

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        return v[..., self._src]

    def apply_cols(self, mat: Gf2Matrix) -> Gf2Matrix:
        return Gf2Matrix(mat.a[:, self._src])

    def inverse(self) -> "Permutation":
        return Permutation(self._src)

    def compose(self, inner: "Permutation") -> "Permutation":
        """Return self o inner (apply inner first)."""
        if inner.n != self.n:
            raise ValueError("size mismatch")
        return Permutation(self.map[inner.map])

    def __eq__(self, other):
        return isinstance(other, Permutation) and bool(np.array_equal(self.map, other.map))

    def __repr__(self):
        return f"Permutation(n={self.n})"


def cyclic_shift_perm(n: int, s: int) -> Permutation:
    """Coordinate rotation i -> (i + s) mod n.

    Applied to a codeword polynomial c(x) this realizes x^s * c(x) mod (x^n - 1),
    so it maps cyclic-code codewords to codewords.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    i = np.arange(n)
    return Permutation((i + (s % n)) % n)


def frobenius_perm(n: int, j: int) -> Permutation:
    """Doubling-map automorphism i -> (i * 2^j) mod n, n odd.

    For binary cyclic codes of odd length this is the squaring automorphism
    c(x) -> c(x^2) and preserves the code.
    """
    if n <= 0 or n % 2 == 0:
        raise ValueError("n must be odd and positive")
    mult = pow(2, j, n)
    i = np.arange(n)
    return Permutation((i * mult) % n)


# ---------------------------------------------------------------------
# alist parsing / serialization
# ---------------------------------------------------------------------

def parse_alist(text: str) -> Gf2Matrix:
    """Parse the standard alist layout into a parity-check matrix.

    Layout: "N M" line, "max_col_deg max_row_deg" line, N column degrees,
    M row degrees, then per-column 1-based row indices and per-row 1-based
    column indices.  Zero entries used as padding are ignored.
    """
    lines = [ln for ln in (s.strip() for s in text.splitlines()) if ln]
    if len(lines) < 4:
        raise ValueError("alist: fewer than 4 header lines")

    def ints(line_no: int) -> list[int]:
        try:
            return [int(tok) for tok in lines[line_no].split()]
        except (ValueError, IndexError) as exc:
            raise ValueError(f"alist: bad integer list on line {line_no + 1}") from exc

    head = ints(0)
    if len(head) != 2:
        raise ValueError("alist: first line must hold exactly N and M")
    n, m = head
    if n <= 0 or m <= 0:
        raise ValueError("alist: nonpositive dimensions")
    col_deg = ints(2)
    row_deg = ints(3)
    if len(col_deg) != n:
        raise ValueError(f"alist: expected {n} column degrees on line 3")
    if len(row_deg) != m:
        raise ValueError(f"alist: expected {m} row degrees on line 4")

    body = lines[4:]
    if len(body) < n + m:
        raise ValueError("alist: truncated index section")
    h = np.zeros((m, n), dtype=np.uint8)
    for c in range(n):
        entries = [v for v in ints(4 + c) if v != 0]
        if len(entries) != col_deg[c]:
            raise ValueError(f"alist: column {c + 1} degree mismatch on line {4 + c + 1}")
        for v in entries:
            if not 1 <= v <= m:
                raise ValueError(f"alist: row index {v} out of range on line {4 + c + 1}")
            h[v - 1, c] = 1
    for r in range(m):
        entries = [v for v in ints(4 + n + r) if v != 0]
        if len(entries) != row_deg[r]:
            raise ValueError(f"alist: row {r + 1} degree mismatch on line {4 + n + r + 1}")
        for v in entries:
            if not 1 <= v <= n:
                raise ValueError(f"alist: column index {v} out of range on line {4 + n + r + 1}")
            if h[r, v - 1] != 1:
                raise ValueError(f"alist: row/column sections disagree at ({r + 1},{v})")
    if int(h.sum()) != sum(col_deg) or sum(col_deg) != sum(row_deg):
        raise ValueError("alist: degree totals disagree with index sections")
    return Gf2Matrix(h)


def to_alist(h: Gf2Matrix) -> str:
    """Serialize a parity-check matrix to alist text (unpadded index lists)."""
    a = h.a
    m, n = a.shape
    col_deg = a.sum(axis=0)
    row_deg = a.sum(axis=1)
    out = [f"{n} {m}", f"{int(col_deg.max(initial=0))} {int(row_deg.max(initial=0))}"]
    out.append(" ".join(str(int(d)) for d in col_deg))
    out.append(" ".join(str(int(d)) for d in row_deg))
    for c in range(n):
        out.append(" ".join(str(int(r) + 1) for r in np.nonzero(a[:, c])[0]))
    for r in range(m):
        out.append(" ".join(str(int(c) + 1) for c in np.nonzero(a[r])[0]))
    return "\n".join(out) + "\n"


def load_alist(path) -> Gf2Matrix:
    with open(path, "r", encoding="ascii") as fh:
        return parse_alist(fh.read())


def save_alist(h: Gf2Matrix, path) -> None:
    with open(path, "w", encoding="ascii") as fh:
        fh.write(to_alist(h))


# ---------------------------------------------------------------------
# elimination / systematization
# ---------------------------------------------------------------------

def gaussian_systematize(h: Gf2Matrix, priority) -> tuple[Gf2Matrix, Permutation]:
    """Column-permuted reduced row echelon form [I | Q2].

    `priority` lists all column indices in decreasing pivot preference.
    Columns are scanned in that order; dependent columns are deferred past
    the identity block, keeping their relative priority order.  Returns
    (h_sys, pi2) with h_sys == rref of pi2-applied h, identity occupying
    the first `rows` permuted columns.

    Raises ValueError if h is not full row rank.
    """
    prio = np.asarray(priority, dtype=np.int64)
    if sorted(prio.tolist()) != list(range(h.cols)):
        raise ValueError("priority must list every column exactly once")
    m = h.a[:, prio].copy()
    rows, cols = m.shape
    pivot_cols: list[int] = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hits = np.nonzero(m[r:, c])[0]
        if hits.size == 0:
            continue
        p = r + hits[0]
        if p != r:
            m[[r, p]] = m[[p, r]]
        other = np.nonzero(m[:, c])[0]
        other = other[other != r]
        m[other] ^= m[r]
        pivot_cols.append(c)
        r += 1
    if r < rows:
        raise ValueError("matrix is not full row rank; cannot systematize")
    rest = [c for c in range(cols) if c not in set(pivot_cols)]
    new_order = pivot_cols + rest          # positions within the priority frame
    src = prio[np.asarray(new_order)]      # original column landing at each slot
    mapping = np.empty(h.cols, dtype=np.int64)
    mapping[src] = np.arange(h.cols)
    pi2 = Permutation(mapping)
    h_sys = Gf2Matrix(m[:, new_order])
    return h_sys, pi2


def generator_from_h(h: Gf2Matrix) -> Gf2Matrix:
    """Systematic-derived generator with G H^T = 0 and rank K = N - rows."""
    h_sys, pi2 = gaussian_systematize(h, np.arange(h.cols))
    rows, cols = h.rows, h.cols
    k = cols - rows
    q2 = h_sys.a[:, rows:]                 # rows x k
    g_perm = np.concatenate([q2.T, np.eye(k, dtype=np.uint8)], axis=1)
    inv = pi2.inverse()
    g = inv.apply(g_perm)                  # permute columns back to original order
    g = Gf2Matrix(g)
    if np.any(gf2_matmul(g.a, h.a.T)):
        raise AssertionError("generator construction failed orthogonality")
    return g


def encode(g: Gf2Matrix, message: np.ndarray) -> np.ndarray:
    """message (K,) or (B, K) -> codeword(s) (N,) or (B, N)."""
    msg = _as_bits(message)
    single = msg.ndim == 1
    if single:
        msg = msg[None, :]
    if msg.shape[1] != g.rows:
        raise ValueError(f"message length {msg.shape[1]} != K={g.rows}")
    cw = gf2_matmul(msg, g.a)
    return cw[0] if single else cw


def syndrome(h: Gf2Matrix, word: np.ndarray) -> np.ndarray:
    """word (N,) or (B, N) -> syndrome(s) (rows,) or (B, rows)."""
    w = _as_bits(word)
    single = w.ndim == 1
    if single:
        w = w[None, :]
    if w.shape[1] != h.cols:
        raise ValueError(f"word length {w.shape[1]} != N={h.cols}")
    s = gf2_matmul(w, h.a.T)
    return s[0] if single else s


# ---------------------------------------------------------------------
# redundant parity-check matrices from the dual code
# ---------------------------------------------------------------------

def enumerate_dual_codewords(h: Gf2Matrix, max_dim: int = 24) -> np.ndarray:
    """All nonzero words in rowspace(h), i.e. the dual code of ker(h).

    Enumeration is exponential in the rowspace dimension, so it is guarded.
    Returns an array (2^r - 1, N).
    """
    # reduce to an independent basis first
    basis = []
    acc = h.a.copy()
    for row in acc:
        cand = basis + [row]
        if gf2_rank(np.array(cand, dtype=np.uint8)) == len(cand):
            basis.append(row)
    basis = np.array(basis, dtype=np.uint8)
    r = basis.shape[0]
    if r > max_dim:
        raise ValueError(
            f"dual dimension {r} exceeds enumeration guard {max_dim}; "
            "supply a redundant parity-check matrix from a file instead")
    total = (1 << r) - 1
    words = np.zeros((total, h.cols), dtype=np.uint8)
    # Gray-code walk: one XOR per step
    cur = np.zeros(h.cols, dtype=np.uint8)
    for idx in range(1, total + 1):
        bit = (idx & -idx).bit_length() - 1
        cur = cur ^ basis[bit]
        words[idx - 1] = cur
    return words


class _Gf2Span:
    """Incremental row-space tracker (reduced basis keyed by pivot column)."""

    def __init__(self):
        self.pivots: dict[int, np.ndarray] = {}

    def reduce(self, word: np.ndarray) -> np.ndarray:
        w = word.copy()
        for pivot, row in self.pivots.items():
            if w[pivot]:
                w = w ^ row
        return w

    def add(self, word: np.ndarray) -> bool:
        """Insert word; returns True when it enlarged the span."""
        res = self.reduce(word)
        nz = np.nonzero(res)[0]
        if nz.size == 0:
            return False
        self.pivots[int(nz[0])] = res
        return True

    def __len__(self):
        return len(self.pivots)

    def contains(self, word: np.ndarray) -> bool:
        return not np.any(self.reduce(word))


def build_redundant_pcm(h: Gf2Matrix, i_r: float, weight_cap: int | None = None,
                        max_dim: int = 24) -> Gf2Matrix:
    """Stack ceil(i_r * rows) low-weight dual codewords into a redundant PCM.

    Rows are chosen lowest weight first.  Within a weight class the cyclic
    shifts of an accepted word are preferred next (when those shifts are
    themselves dual codewords, as for cyclic codes) so the checks spread
    over all coordinates.  The result spans rowspace(h) (same code) and has
    exactly ceil(i_r * rows(h)) rows.
    """
    if i_r < 1:
        raise ValueError("i_r must be >= 1")
    words = enumerate_dual_codewords(h, max_dim=max_dim)
    weights = words.sum(axis=1)
    if weight_cap is None:
        weight_cap = int(weights.max())
    keep = weights <= weight_cap
    if not np.any(keep):
        raise ValueError("weight cap excludes every dual codeword")
    pool = words[keep]
    pool_w = weights[keep]
    order = np.lexsort(tuple(pool.T[::-1]) + (pool_w,))
    pool = pool[order]

    dual_span = _Gf2Span()
    for row in h.a:
        dual_span.add(row)
    need_rank = len(dual_span)
    target = int(np.ceil(i_r * h.rows))

    chosen: list[np.ndarray] = []
    chosen_span = _Gf2Span()
    seen: set[bytes] = set()

    def push(word: np.ndarray) -> None:
        key = word.tobytes()
        if key not in seen and len(chosen) < target:
            seen.add(key)
            chosen.append(word)
            chosen_span.add(word)

    # spanning subset first, lowest weight first, so the stack defines the
    # same code no matter how small the row budget is
    for word in pool:
        if len(chosen_span) == need_rank:
            break
        if chosen_span.contains(word):
            continue
        push(word)
    if len(chosen_span) < need_rank:
        raise ValueError("weight cap too tight to span the dual code")

    # fill the remaining budget: shift orbits of accepted words, then pool order
    n = h.cols
    for word in list(chosen):
        if len(chosen) >= target:
            break
        for s in range(1, n):
            shifted = np.roll(word, s)
            if int(shifted.sum()) <= weight_cap and dual_span.contains(shifted):
                push(shifted)
            if len(chosen) >= target:
                break
    for word in pool:
        if len(chosen) >= target:
            break
        push(word)

    return Gf2Matrix(np.array(chosen, dtype=np.uint8))
