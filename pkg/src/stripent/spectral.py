"""Perron roots of nonnegative matrices with certified enclosures.

Two independent methods are provided.  :func:`perron_power` runs power
iteration on ``M + I`` and brackets the root by Collatz-Wielandt ratios.
:func:`trace_power_bound` uses the sandwich

    lambda^k <= tr(M^k) <= dim * lambda^k      (M symmetric, k even)

evaluated by repeated squaring in log-scaled arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .errors import ContractError, ConvergenceError
from .strip_transfer import TransferMatrix

EPS = np.finfo(float).eps
LD_EPS = np.finfo(np.longdouble).eps
DENSE_LIMIT = 1500


def _down(x):
    return np.nextafter(np.longdouble(x), np.longdouble(-np.inf))


def _up(x):
    return np.nextafter(np.longdouble(x), np.longdouble(np.inf))


@dataclass(frozen=True)
class Interval:
    """Closed interval ``[lo, hi]`` with long-double endpoints.

    Arithmetic rounds outward, so an interval produced from enclosures is
    itself an enclosure.
    """

    lo: float
    hi: float

    def __post_init__(self):
        object.__setattr__(self, "lo", np.longdouble(self.lo))
        object.__setattr__(self, "hi", np.longdouble(self.hi))
        if not self.lo <= self.hi:
            raise ContractError(f"interval with lo={self.lo} > hi={self.hi}")

    @classmethod
    def point(cls, x) -> "Interval":
        return cls(x, x)

    @property
    def width(self):
        return self.hi - self.lo

    @property
    def mid(self):
        return (self.lo + self.hi) / 2

    def contains(self, x, slack=0.0) -> bool:
        return bool(self.lo - slack <= x <= self.hi + slack)

    def intersects(self, other: "Interval", slack=0.0) -> bool:
        return bool(self.lo - slack <= other.hi and other.lo - slack <= self.hi)

    def widen(self, abs_slack) -> "Interval":
        return Interval(_down(self.lo - abs_slack), _up(self.hi + abs_slack))

    def __add__(self, other: "Interval") -> "Interval":
        return Interval(_down(self.lo + other.lo), _up(self.hi + other.hi))

    def __sub__(self, other: "Interval") -> "Interval":
        return Interval(_down(self.lo - other.hi), _up(self.hi - other.lo))

    def log(self) -> "Interval":
        if self.lo <= 0:
            raise ContractError("log of a nonpositive interval")
        # logl is not correctly rounded; two ulps each way covers it
        return Interval(_down(_down(np.log(self.lo))), _up(_up(np.log(self.hi))))

    def as_tuple(self) -> tuple[float, float]:
        """Endpoints rounded outward to float64."""
        lo = float(self.lo)
        hi = float(self.hi)
        if lo > self.lo:
            lo = float(np.nextafter(lo, -np.inf))
        if hi < self.hi:
            hi = float(np.nextafter(hi, np.inf))
        return lo, hi


@dataclass(frozen=True, eq=False)
class PerronResult:
    """Outcome of :func:`perron_power`.

    ``enclosure`` is certified: it contains the spectral radius of the
    matrix as stored (exactly, when the matrix has exact integer weights).
    ``history`` lists the rigorous enclosure found at every iteration.
    """

    lam: float
    enclosure: Interval
    right_vector: np.ndarray
    residual: float
    iterations: int
    certified_exactly: bool = False
    history: list = field(default_factory=list, repr=False)

    @property
    def lambda_(self) -> float:
        return self.lam


def _as_csr(M) -> sp.csr_matrix:
    if isinstance(M, TransferMatrix):
        M = M.matrix
    if sp.issparse(M):
        A = sp.csr_matrix(M, dtype=float)
    else:
        A = sp.csr_matrix(np.asarray(M, dtype=float))
    if A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ContractError("matrix must be square and nonempty")
    if A.nnz and A.data.min() < 0:
        raise ContractError("matrix must be nonnegative")
    A.eliminate_zeros()
    A.sort_indices()
    return A


def _is_symmetric(A: sp.csr_matrix) -> bool:
    D = A - A.T
    return D.nnz == 0 or np.abs(D.data).max() == 0


def _warm_start(A: sp.csr_matrix) -> np.ndarray | None:
    d = A.shape[0]
    sym = _is_symmetric(A)
    try:
        if d <= DENSE_LIMIT:
            dense = A.toarray()
            if sym:
                vals, vecs = scipy.linalg.eigh(dense)
                v = vecs[:, -1]
            else:
                vals, vecs = scipy.linalg.eig(dense)
                v = vecs[:, int(np.argmax(vals.real))].real
        else:
            if sym:
                vals, vecs = spla.eigsh(A, k=1, which="LA", tol=1e-14)
            else:
                vals, vecs = spla.eigs(A, k=1, which="LR", tol=1e-14)
            v = vecs[:, 0].real
    except (np.linalg.LinAlgError, spla.ArpackError, spla.ArpackNoConvergence, ValueError):
        return None
    v = np.abs(v)
    if not np.all(np.isfinite(v)) or v.max() == 0:
        return None
    return v / v.max()


# ---------------------------------------------------------------------------
# exact Collatz-Wielandt certification

EXACT_NNZ_CAP = 12_000_000


def _float_to_ints(x: np.ndarray):
    """Write a positive float array as ``m * 2**e`` with integer ``m`` (object array) and one ``e``."""
    mant, ex = np.frexp(x)
    bits = 64 if x.dtype == np.longdouble else 53
    m = (mant * np.longdouble(2) ** bits).astype(np.uint64).astype(object)
    ex = ex.astype(np.int64) - bits
    emin = int(ex.min())
    return m * (np.ones(len(x), dtype=object) << (ex - emin).astype(object)), emin


def _exact_data(A: sp.csr_matrix, exact_weights):
    """Entries of ``A`` as (object ints or None for all-ones, power-of-two exponent)."""
    if exact_weights is not None:
        return exact_weights[A.indices].astype(object), 0
    if np.all(A.data == 1.0):
        return None, 0
    return _float_to_ints(A.data)


def _ratio_bounds(num, den, dim):
    """Exact min and max of ``num[i] / den[i]`` as Fractions."""
    approx = np.array([n / d for n, d in zip(num, den)])
    out = []
    for pick, sel in ((np.min, lambda a, t: a <= t * (1 + 1e-14)), (np.max, lambda a, t: a >= t * (1 - 1e-14))):
        t = pick(approx)
        cand = np.nonzero(sel(approx, t))[0]
        fr = [Fraction(int(num[i]), int(den[i])) for i in cand]
        out.append(min(fr) if pick is np.min else max(fr))
    return out


def _ld_from_fraction(fr: Fraction, direction: int):
    """Round a positive Fraction to long double, outward in ``direction`` (-1 or +1)."""
    if fr == 0:
        return np.longdouble(0)
    p, q = fr.numerator, fr.denominator
    sp_ = max(p.bit_length() - 63, 0)
    sq = max(q.bit_length() - 63, 0)
    val = np.longdouble(p >> sp_) / np.longdouble(q >> sq)
    val = np.ldexp(val, sp_ - sq)
    # truncations and one division cost at most a few ulps
    for _ in range(6):
        val = _down(val) if direction < 0 else _up(val)
    return val


def _certify_exact(A: sp.csr_matrix, v_ld: np.ndarray, exact_weights):
    data, e_a = _exact_data(A, exact_weights)
    v_int, e_v = _float_to_ints(v_ld)
    terms = v_int[A.indices]
    if data is not None:
        terms = terms * data
    starts = A.indptr[:-1]
    if np.any(np.diff(A.indptr) == 0):
        return None
    u = np.add.reduceat(terms, starts)
    # ratio = (u * 2^(e_a + e_v)) / (v_int * 2^e_v) = u * 2^e_a / v_int
    if e_a >= 0:
        num, den = u * (1 << e_a), v_int
    else:
        num, den = u, v_int * (1 << -e_a)
    lo, hi = _ratio_bounds(num, den, A.shape[0])
    return _ld_from_fraction(lo, -1), _ld_from_fraction(hi, +1)


def _cw_bounds(A_ld, v: np.ndarray, row_nnz: int):
    """Rigorous Collatz-Wielandt bounds from a long-double product.

    Each row sum of ``row_nnz`` positive terms is off by at most
    ``row_nnz`` relative ulps, so the ratios are widened by that much.
    """
    u = A_ld @ v
    r = u / v
    fudge = (row_nnz + 3) * LD_EPS
    lo = _down(r.min() * (1 - fudge))
    hi = _up(r.max() * (1 + fudge))
    return max(lo, np.longdouble(0)), hi, u, r


def _power_irreducible(A, tol, max_iter, v0, warm_start, history, exact_weights):
    d = A.shape[0]
    row_nnz = int(np.diff(A.indptr).max()) if A.nnz else 0
    v = None
    if v0 is not None:
        v = np.abs(np.asarray(v0, dtype=float))
    elif warm_start:
        v = _warm_start(A)
    if v is None or v.max() == 0:
        v = np.ones(d)
    v = v.astype(np.longdouble)
    v /= v.max()
    A_ld = A.astype(np.longdouble)
    floor = np.longdouble(1e-300)
    can_exact = A.nnz <= EXACT_NNZ_CAP
    best_gap = np.inf
    stall = 0
    lo = hi = np.longdouble(0)
    for it in range(1, max_iter + 1):
        v = np.maximum(v, floor)
        lo, hi, u, r = _cw_bounds(A_ld, v, row_nnz)
        history.append((lo, hi))
        if hi == 0 or (lo > 0 and (hi - lo) / lo < tol):
            return lo, hi, v, it, False
        raw_lo, raw_hi = r.min(), r.max()
        raw_gap = (raw_hi - raw_lo) / raw_lo if raw_lo > 0 else np.inf
        if raw_gap < best_gap * 0.5:
            best_gap = raw_gap
            stall = 0
        else:
            stall += 1
        if can_exact and (raw_gap < tol / 8 or stall >= 4):
            cert = _certify_exact(A, v, exact_weights)
            if cert is not None:
                elo, ehi = cert
                history.append((elo, ehi))
                if elo > 0 and (ehi - elo) / elo < tol:
                    return elo, ehi, v, it, True
            can_exact = stall < 4
        if stall >= 12:
            break
        v = u + v
        v /= v.max()
    raise ConvergenceError(
        f"power iteration stopped after {it} steps with relative gap "
        f"{float((hi - lo) / lo) if lo > 0 else float('inf'):.3g} >= tol {tol:g}",
        last=Interval(lo, hi),
    )


def _exact_column_weights(M):
    """Exact integer entries per column when ``M`` is an asymmetric integer-weight transfer matrix."""
    if not isinstance(M, TransferMatrix):
        return None
    spec = M.spec
    if not all(isinstance(w, int) for w in spec.weights):
        return None
    if M.symmetric and not all(w == 1 for w in spec.weights):
        return None
    return np.array(M.columns.exact_weights(), dtype=object)


def perron_power(
    M,
    tol: float = 1e-12,
    max_iter: int = 100_000,
    v0=None,
    warm_start: bool = True,
) -> PerronResult:
    """Spectral radius of a nonnegative square matrix by shifted power iteration.

    Iterates ``v <- (M + I) v`` in long double from a positive start
    (a dense or ARPACK eigenvector when ``warm_start``), stopping once the
    Collatz-Wielandt gap ``(hi - lo) / lo`` is below ``tol``.  Near the
    floating-point floor the bounds are recomputed with exact integer row
    sums, which keeps enclosures of about 1e-18 relative width.

    Reducible matrices are split into strongly connected components; the
    largest component root is the spectral radius of the whole matrix.
    """
    if not tol > 0:
        raise ContractError("tol must be positive")
    A = _as_csr(M)
    exact_w = _exact_column_weights(M)
    d = A.shape[0]
    ncomp, labels = connected_components(A, directed=True, connection="strong")
    history: list = []
    if ncomp == 1:
        lo, hi, v, its, exact = _power_irreducible(A, tol, max_iter, v0, warm_start, history, exact_w)
    else:
        best = None
        its = 0
        exact = False
        for c in range(ncomp):
            idx = np.nonzero(labels == c)[0]
            sub = A[idx][:, idx]
            if sub.nnz == 0:
                continue
            sub_w = None if exact_w is None else exact_w[idx]
            res = _power_irreducible(sub, tol, max_iter, None, warm_start, [], sub_w)
            its += res[3]
            if best is None or res[1] > best[1]:
                best = (res[0], res[1], idx, res[2], res[4])
        if best is None:
            lo = hi = np.longdouble(0)
            v = np.ones(d)
        else:
            lo, hi, exact = best[0], best[1], best[4]
            v = _reducible_vector(A, float((lo + hi) / 2), best[2], best[3].astype(float))
        history.append((lo, hi))
    enc = Interval(lo, hi)
    lam = float(enc.mid)
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    resid = float(np.abs(A @ v - lam * v).max() / max(lam, 1.0))
    return PerronResult(lam, enc, v, resid, its, exact, history)


def _reducible_vector(A, lam, idx, v_sub, steps: int = 2000):
    """Nonnegative approximate eigenvector for a reducible matrix.

    Starts from the dominant component's vector and runs shifted power
    steps so that upstream components pick up their share.
    """
    v = np.zeros(A.shape[0])
    v[idx] = v_sub
    for _ in range(steps):
        w = (A @ v + v) / (lam + 1.0)
        done = np.abs(w - v).max() < 1e-15 * max(v.max(), 1e-300)
        v = w
        if done:
            break
    return v


# ---------------------------------------------------------------------------
# trace-power sandwich


def log_trace_power(M, k: int) -> float:
    """``ln tr(M^k)`` for a nonnegative matrix, by rescaled binary powering."""
    if k < 1:
        raise ContractError("k must be positive")
    A = _as_csr(M).toarray()
    base = A.copy()
    base_log = 0.0
    acc = None
    acc_log = 0.0
    e = k
    while True:
        if e & 1:
            if acc is None:
                acc, acc_log = base.copy(), base_log
            else:
                acc = acc @ base
                acc_log += base_log
                c = np.abs(acc).max()
                if c > 0:
                    acc /= c
                    acc_log += math.log(c)
        e >>= 1
        if not e:
            break
        c = np.abs(base).max()
        if c == 0:
            return -math.inf
        base = base / c
        base = base @ base
        base_log = 2 * (base_log + math.log(c))
    tr = float(np.trace(acc))
    if tr <= 0:
        return -math.inf
    return acc_log + math.log(tr)


def trace_power_bound(M, k: int) -> Interval:
    """``[(tr M^k / dim)^(1/k), (tr M^k)^(1/k)]`` for symmetric ``M`` and even ``k``.

    Every squaring and product rounds relatively by about ``dim * eps``, so
    the log-trace is widened by ``(log2(k) + 2) * dim * eps`` before the
    ``k``-th root.
    """
    if k < 2 or k % 2:
        raise ContractError("k must be a positive even integer")
    A = _as_csr(M)
    if not _is_symmetric(A):
        raise ContractError("trace-power sandwich needs a symmetric matrix")
    d = A.shape[0]
    lt = log_trace_power(A, k)
    if lt == -math.inf:
        return Interval(0.0, 0.0)
    slack = (math.log2(k) + 2) * (d + 2) * EPS * 4
    hi = math.exp((lt + slack) / k)
    lo = math.exp((lt - slack - math.log(d)) / k)
    return Interval(np.nextafter(lo, 0.0), np.nextafter(hi, np.inf))


def trace_power_schedule(n: int, dim: int | None = None) -> int:
    """Smallest ``k`` in ``{2, 4, 8, ...}`` with ``dim^(1/k) <= 1 + 4^(-n)``.

    ``dim`` defaults to ``2**n``, the number of binary columns of height ``n``.
    """
    if n < 1:
        raise ContractError("n must be at least 1")
    if dim is None:
        dim = 2**n
    if dim < 1:
        raise ContractError("dim must be positive")
    target = math.log1p(4.0**-n)
    k = 2
    while math.log(dim) / k > target:
        k *= 2
    return k
