"""Admissible columns and weighted transfer matrices of strip shifts.

A height-``n`` column is a vertically admissible sequence of ``n`` symbols,
listed bottom to top.  Columns are kept in lexicographic order of their
symbol indices with the *bottom* entry most significant, so for hard
squares the columns starting with 0 come first and those starting with 1
come last.

The transfer matrix ``B_n`` has a nonzero entry at ``(r, c)`` exactly when
column ``r`` may sit immediately left of column ``c``.  Its Perron root
``lambda`` gives the strip entropy ``h_n = ln lambda``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.sparse as sp

from .errors import ContractError, ResourceError, max_columns
from .sft_model import SftSpec, hard_square

# Transfer matrices with more than this many entries per column cap are refused.
ENTRIES_PER_COLUMN_CAP = 64


@dataclass(frozen=True, eq=False)
class ColumnSet:
    """Admissible columns of one height, stored as an index array.

    ``codes[j]`` holds the symbol indices of column ``j`` from bottom to top.
    """

    spec: SftSpec
    height: int
    codes: np.ndarray

    def __len__(self) -> int:
        return self.codes.shape[0]

    @property
    def columns(self) -> list[tuple]:
        syms = self.spec.symbols
        return [tuple(syms[i] for i in row) for row in self.codes.tolist()]

    def index_of(self, column) -> int:
        """Position of a column (given as symbols, bottom to top)."""
        key = np.array([self.spec.index(s) for s in column])
        if key.shape != (self.height,):
            raise ContractError(f"column must have length {self.height}")
        lo, hi = 0, len(self)
        # binary search in lexicographic order
        while lo < hi:
            mid = (lo + hi) // 2
            row = self.codes[mid]
            diff = np.nonzero(row != key)[0]
            if diff.size == 0:
                return mid
            if row[diff[0]] < key[diff[0]]:
                lo = mid + 1
            else:
                hi = mid
        raise ContractError(f"{tuple(column)!r} is not an admissible column")

    def weights(self) -> np.ndarray:
        """Float product of symbol weights for each column."""
        w = self.spec.weight_array()
        return np.prod(w[self.codes], axis=1)

    def exact_weights(self) -> list:
        """Exact products of symbol weights (ints or Fractions)."""
        if not self.spec.exact_weights:
            raise ContractError("spec has inexact (float) weights")
        ws = self.spec.weights
        out = []
        for row in self.codes.tolist():
            p = 1
            for i in row:
                p *= ws[i]
            out.append(p)
        return out

    def symbol_at(self, height_index: int) -> np.ndarray:
        """Symbol indices at 1-based height ``height_index`` for every column."""
        if not 1 <= height_index <= self.height:
            raise ContractError(f"height {height_index} outside [1, {self.height}]")
        return self.codes[:, height_index - 1]


@dataclass(frozen=True, eq=False)
class TransferMatrix:
    columns: ColumnSet
    matrix: sp.csr_matrix
    column_weight: np.ndarray
    symmetric: bool

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def entries(self) -> sp.csr_matrix:
        return self.matrix

    @property
    def spec(self) -> SftSpec:
        return self.columns.spec

    @property
    def height(self) -> int:
        return self.columns.height

    def pattern(self) -> sp.csr_matrix:
        """0-1 compatibility matrix with the same sparsity as ``matrix``."""
        pat = self.matrix.copy()
        pat.data = np.ones_like(pat.data)
        return pat

    def toarray(self) -> np.ndarray:
        return self.matrix.toarray()


def _check_cap(count: int, cap: int | None, what: str):
    cap = max_columns() if cap is None else cap
    if count > cap:
        raise ResourceError(f"{what}: {count} exceeds cap {cap} (STRIPENT_MAX_COLUMNS)")


def _extend(spec: SftSpec, n: int, cap: int | None):
    """Columns of heights 1..n, returning (codes, child) for the last two levels.

    ``child[p, s]`` is the index in level ``h`` of prefix ``p`` (level
    ``h-1``) extended by symbol ``s`` on top, or -1.
    """
    V = spec.v_matrix()
    q = spec.size
    codes = np.arange(q, dtype=np.int16).reshape(q, 1)
    yield codes, None
    for _ in range(1, n):
        # nonzero() walks parents then symbols in order, which keeps lexicographic order
        parents, syms = np.nonzero(V[codes[:, -1]])
        _check_cap(len(parents), cap, "column count")
        child = np.full((codes.shape[0], q), -1, dtype=np.int64)
        child[parents, syms] = np.arange(len(parents))
        codes = np.concatenate([codes[parents], syms.astype(np.int16)[:, None]], axis=1)
        yield codes, child


def enumerate_columns(spec: SftSpec, n: int, cap: int | None = None) -> ColumnSet:
    """All vertically admissible height-``n`` columns in canonical order."""
    if n < 1:
        raise ContractError("height must be at least 1")
    _check_cap(spec.size, cap, "column count")
    codes = None
    for codes, _ in _extend(spec, n, cap):
        pass
    return ColumnSet(spec, n, codes)


def _is_hardsquare_rule(spec: SftSpec) -> bool:
    H = spec.h_matrix()
    return spec.size == 2 and H[0, 0] and H[0, 1] and H[1, 0] and not H[1, 1]


def _pattern_bitmask(codes: np.ndarray) -> sp.csr_matrix:
    """Compatibility for two-symbol specs forbidding only (1,1) side by side.

    Columns are packed into integers; r and c are compatible iff r & c == 0.
    """
    n = codes.shape[1]
    packed = (codes.astype(np.int64) << np.arange(n - 1, -1, -1)).sum(axis=1)
    rows, cols = [], []
    block = max(1, 2_000_000 // max(1, len(packed)))
    for start in range(0, len(packed), block):
        chunk = packed[start : start + block]
        r, c = np.nonzero((chunk[:, None] & packed[None, :]) == 0)
        rows.append(r + start)
        cols.append(c)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    d = len(packed)
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(d, d))


def _pattern_generic(spec: SftSpec, n: int, cap: int | None):
    """Grow compatible column pairs one height at a time."""
    H = spec.h_matrix()
    hpairs = np.argwhere(H)
    cap_entries = (max_columns() if cap is None else cap) * ENTRIES_PER_COLUMN_CAP
    left = right = None
    codes = None
    for codes, child in _extend(spec, n, cap):
        if child is None:
            left, right = hpairs[:, 0].astype(np.int64), hpairs[:, 1].astype(np.int64)
            continue
        new_l, new_r = [], []
        for s, t in hpairs:
            a = child[left, s]
            b = child[right, t]
            keep = (a >= 0) & (b >= 0)
            new_l.append(a[keep])
            new_r.append(b[keep])
        left = np.concatenate(new_l)
        right = np.concatenate(new_r)
        if len(left) > cap_entries:
            raise ResourceError(f"transfer entries: {len(left)} exceeds cap {cap_entries}")
    d = codes.shape[0]
    pat = sp.csr_matrix((np.ones(len(left)), (left, right)), shape=(d, d))
    pat.sort_indices()
    return codes, pat


def _weighted(cols: ColumnSet, pat: sp.csr_matrix) -> TransferMatrix:
    spec = cols.spec
    w = cols.weights()
    symmetric = spec.is_h_symmetric()
    M = pat.tocoo()
    if symmetric:
        data = np.sqrt(w[M.row] * w[M.col])
    else:
        data = w[M.col]
    if np.all(w == 1.0):
        data = np.ones_like(data)
    mat = sp.csr_matrix((data, (M.row, M.col)), shape=pat.shape)
    mat.sort_indices()
    return TransferMatrix(cols, mat, w, symmetric)


def build_transfer(spec: SftSpec, n: int, cap: int | None = None, method: str = "auto") -> TransferMatrix:
    """Weighted transfer matrix of the height-``n`` strip.

    Entries are ``sqrt(w(r) w(c))`` when the horizontal rule is symmetric
    and ``w(c)`` otherwise; both weightings are similar to each other and
    share the spectral radius.  ``method`` is ``"auto"``, ``"bitmask"`` or
    ``"generic"``.
    """
    if n < 1:
        raise ContractError("height must be at least 1")
    if method not in ("auto", "bitmask", "generic"):
        raise ContractError(f"unknown method {method!r}")
    use_bits = _is_hardsquare_rule(spec) and n <= 62
    if method == "bitmask" and not use_bits:
        raise ContractError("bitmask method needs a two-symbol spec forbidding only (1,1) horizontally")
    if method == "generic":
        use_bits = False
    if use_bits:
        cols = enumerate_columns(spec, n, cap)
        pat = _pattern_bitmask(cols.codes)
        cap_entries = (max_columns() if cap is None else cap) * ENTRIES_PER_COLUMN_CAP
        if pat.nnz > cap_entries:
            raise ResourceError(f"transfer entries: {pat.nnz} exceeds cap {cap_entries}")
    else:
        codes, pat = _pattern_generic(spec, n, cap)
        cols = ColumnSet(spec, n, codes)
    return _weighted(cols, pat)


def build_transfer_recursive_hardsquare(n: int) -> TransferMatrix:
    """Hard-square ``B_n`` grown from ``B_1`` by the four-copy rule.

    ``B_{m+1}`` tiles four copies of ``B_m`` as ``[[B, B], [B, B]]`` indexed
    by the new bottom symbol (0 then 1), zeroes the whole lower-right copy
    plus the rows and columns whose new bottom 1 sits on an old bottom 1,
    and drops those inadmissible indices.  The result is mapped onto the
    canonical column order by matching columns, then compared there.
    """
    if n < 1:
        raise ContractError("height must be at least 1")
    spec = hard_square()
    B = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 0.0]]))
    codes = np.array([[0], [1]], dtype=np.int16)
    for m in range(1, n):
        d = B.shape[0]
        _check_cap(2 * d, None, "column count")
        zero = sp.csr_matrix((d, d))
        big = sp.bmat([[B, B], [B, zero]], format="csr")
        new_codes = np.concatenate(
            [
                np.concatenate([np.zeros((d, 1), np.int16), codes], axis=1),
                np.concatenate([np.ones((d, 1), np.int16), codes], axis=1),
            ]
        )
        # new bottom symbol 1 directly under an old bottom 1
        bad = (new_codes[:, 0] == 1) & (new_codes[:, 1] == 1)
        keep = np.nonzero(~bad)[0]
        big = big.tolil()
        big[np.nonzero(bad)[0], :] = 0
        big[:, np.nonzero(bad)[0]] = 0
        B = big.tocsr()[keep][:, keep]
        B.eliminate_zeros()
        codes = new_codes[keep]
    cols = enumerate_columns(spec, n)
    perm = _match_columns(codes, cols.codes)
    # row i of the recursive matrix is canonical column perm[i]
    inv = np.empty_like(perm)
    inv[perm] = np.arange(len(perm))
    P = B[inv][:, inv]
    P.sort_indices()
    return TransferMatrix(cols, P.tocsr(), np.ones(len(perm)), True)


def _match_columns(codes: np.ndarray, canonical: np.ndarray) -> np.ndarray:
    if codes.shape != canonical.shape:
        raise ContractError("column sets differ in size")
    lookup = {tuple(row): i for i, row in enumerate(canonical.tolist())}
    try:
        return np.array([lookup[tuple(row)] for row in codes.tolist()])
    except KeyError as exc:
        raise ContractError(f"column {exc.args[0]} not admissible") from None


def recursive_reindex_permutation(n: int) -> np.ndarray:
    """Map from recursive-builder order to canonical order (identity for this layout)."""
    codes = np.array([[0], [1]], dtype=np.int16)
    for _ in range(1, n):
        d = codes.shape[0]
        new_codes = np.concatenate(
            [
                np.concatenate([np.zeros((d, 1), np.int16), codes], axis=1),
                np.concatenate([np.ones((d, 1), np.int16), codes], axis=1),
            ]
        )
        codes = new_codes[~((new_codes[:, 0] == 1) & (new_codes[:, 1] == 1))]
    return _match_columns(codes, enumerate_columns(hard_square(), n).codes)


# ---------------------------------------------------------------------------
# counting


@dataclass(frozen=True)
class LogCount:
    """A count too large for a float, stored as its natural logarithm."""

    log: float

    def __float__(self) -> float:
        return math.inf if self.log > 709 else math.exp(self.log)


LOG_THRESHOLD = 300 * math.log(10)
EXACT_WORK_CAP = 20_000_000


def _exact_count(tm: TransferMatrix, m: int):
    w = tm.columns.exact_weights()
    pat = tm.pattern().tocsc()
    indptr, indices = pat.indptr, pat.indices
    vec = list(w)
    for _ in range(m - 1):
        nxt = []
        for c in range(len(w)):
            s = 0
            for r in indices[indptr[c] : indptr[c + 1]]:
                s += vec[r]
            nxt.append(s * w[c])
        vec = nxt
    return sum(vec)


def log_weighted_count(spec: SftSpec, n: int, m: int, tm: TransferMatrix | None = None) -> float:
    """Natural log of :func:`weighted_count`, computed in floating point."""
    if n < 1 or m < 1:
        raise ContractError("n and m must be positive")
    tm = tm or build_transfer(spec, n)
    w = tm.column_weight
    patT = tm.pattern().T.tocsr()
    vec = w.copy()
    logscale = 0.0
    for _ in range(m - 1):
        vec = (patT @ vec) * w
        top = vec.max()
        if top == 0:
            return -math.inf
        vec /= top
        logscale += math.log(top)
    total = vec.sum()
    return -math.inf if total == 0 else logscale + math.log(total)


def weighted_count(spec: SftSpec, n: int, m: int, tm: TransferMatrix | None = None):
    """Weighted number of locally admissible configurations on ``[1,m] x [1,n]``.

    Computed as ``w^T A^(m-1) 1`` over columns with ``A[r, c] = [r|c] w(c)``.
    Exact (int or Fraction) for exact weights at modest sizes; above
    ``10**300`` a :class:`LogCount` is returned instead.
    """
    if n < 1 or m < 1:
        raise ContractError("n and m must be positive")
    tm = tm or build_transfer(spec, n)
    if spec.exact_weights and (m - 1) * max(tm.matrix.nnz, 1) + tm.dim <= EXACT_WORK_CAP:
        val = _exact_count(tm, m)
        if val > 0 and math.log(val) > LOG_THRESHOLD:
            return LogCount(math.log(val))
        if isinstance(val, Fraction) and val.denominator == 1:
            return val.numerator
        return val
    lg = log_weighted_count(spec, n, m, tm)
    if lg > LOG_THRESHOLD:
        return LogCount(lg)
    return math.exp(lg)


# ---------------------------------------------------------------------------
# coordinate-list export


def matrix_to_text(tm: TransferMatrix) -> str:
    lines = [
        "# coordinate list; rows/cols index columns in lexicographic order, bottom symbol most significant",
        f"# height {tm.height} spec {tm.spec.name}",
        f"{tm.dim}",
    ]
    coo = tm.matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
        lines.append(f"{r} {c} {float(v)!r}")
    return "\n".join(lines) + "\n"


def matrix_from_text(text: str) -> sp.csr_matrix:
    dim = None
    rows, cols, vals = [], [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if dim is None:
            dim = int(parts[0])
            continue
        if len(parts) != 3:
            raise ContractError(f"line {lineno}: expected 'r c value'")
        rows.append(int(parts[0]))
        cols.append(int(parts[1]))
        vals.append(float(parts[2]))
    if dim is None:
        raise ContractError("missing dimension line")
    return sp.csr_matrix((vals, (rows, cols)), shape=(dim, dim))
