"""Parry (maximal-entropy) Markov chains on strip columns.

For an irreducible transfer matrix ``M`` with Perron root ``lam`` and
left/right Perron vectors ``u``, ``v``, the chain

    P[i, j] = M[i, j] v[j] / (lam v[i]),      pi[i] ~ u[i] v[i]

is the unique measure of maximal entropy of the strip shift.  This module
builds it, reads off site marginals, checks the uniform-conditional
property exactly, and brackets entropy rates of the processes obtained by
reading only some rows of the strip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Iterable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ContractError, ResourceError
from .sft_model import SftSpec
from .spectral import Interval, perron_power
from .strip_transfer import ColumnSet, TransferMatrix, build_transfer

EPS = np.finfo(float).eps
WORD_CAP = 4_000_000
PATH_CAP = 2_000_000


@dataclass(frozen=True, eq=False)
class ParryChain:
    """Stationary Markov chain on the columns of a strip.

    ``P`` is stored in floating point.  When ``exact_kernel`` is true the
    chain is known to be the h-transform of ``transfer`` by ``v`` and
    ``lam``, and exact computations use that representation instead of the
    rounded ``P``.
    """

    column_set: ColumnSet
    pi: np.ndarray
    P: sp.csr_matrix
    lam: float
    v: np.ndarray
    transfer: TransferMatrix | None = None
    exact_kernel: bool = True

    @property
    def height(self) -> int:
        return self.column_set.height

    @property
    def dim(self) -> int:
        return len(self.pi)

    def transition_fraction(self, i: int, j: int) -> Fraction:
        """Exact rational value of ``P[i, j]`` for the kernel this chain represents."""
        if self.exact_kernel:
            m = self.transfer.matrix[i, j]
            if m == 0:
                return Fraction(0)
            return Fraction(float(m)) * Fraction(float(self.v[j])) / (
                Fraction(self.lam) * Fraction(float(self.v[i]))
            )
        return Fraction(float(self.P[i, j]))

    def entropy_rate(self) -> float:
        """``-sum pi_i P_ij ln P_ij`` in nats."""
        coo = self.P.tocoo()
        p = coo.data
        return float(-(self.pi[coo.row] * p * np.log(p)).sum())


@dataclass(frozen=True)
class RowSelector:
    """A nonempty set of 1-based strip heights."""

    heights: tuple

    def __init__(self, heights: Iterable[int]):
        hs = tuple(sorted(set(int(h) for h in heights)))
        if not hs:
            raise ContractError("row selector needs at least one height")
        object.__setattr__(self, "heights", hs)

    def check(self, n: int):
        if self.heights[0] < 1 or self.heights[-1] > n:
            raise ContractError(f"heights {self.heights} not inside [1, {n}]")

    def __or__(self, other: "RowSelector") -> "RowSelector":
        return RowSelector(self.heights + other.heights)


def _rows(x) -> RowSelector:
    if isinstance(x, RowSelector):
        return x
    if isinstance(x, int):
        return RowSelector([x])
    return RowSelector(x)


def _stranded(A: sp.csr_matrix, cols: ColumnSet) -> str:
    ncomp, labels = connected_components(A, directed=True, connection="strong")
    sizes = np.bincount(labels)
    small = int(np.argmin(sizes))
    idx = int(np.nonzero(labels == small)[0][0])
    return f"{ncomp} strong components; e.g. component of size {sizes[small]} containing column {cols.columns[idx]}"


def parry(M: TransferMatrix, tol: float = 1e-14) -> ParryChain:
    """Maximal-entropy Markov chain of an irreducible transfer matrix."""
    A = M.matrix.tocsr()
    ncomp, _ = connected_components(A, directed=True, connection="strong")
    if ncomp != 1:
        raise ContractError("transfer matrix is reducible: " + _stranded(A, M.columns))
    right = perron_power(A, tol=tol)
    lam = right.lam
    v = right.right_vector
    if M.symmetric and (A != A.T).nnz == 0:
        u = v
    else:
        u = perron_power(A.T.tocsr(), tol=tol).right_vector
    coo = A.tocoo()
    data = coo.data * v[coo.col] / (lam * v[coo.row])
    P = sp.csr_matrix((data, (coo.row, coo.col)), shape=A.shape)
    rs = np.asarray(P.sum(axis=1)).ravel()
    P = sp.diags(1.0 / rs) @ P
    P = P.tocsr()
    P.sort_indices()
    pi = u * v
    pi = pi / pi.sum()
    return ParryChain(M.columns, pi, P, lam, v, M, True)


def parry_for(spec: SftSpec, n: int) -> ParryChain:
    return parry(build_transfer(spec, n))


def perturb(chain: ParryChain, i: int, eps: float = 1e-3) -> ParryChain:
    """Negative control: move ``eps`` of row ``i``'s mass between its first two successors.

    The result keeps the support but is no longer the h-transform, so its
    exact computations use the explicit ``P``.
    """
    P = chain.P.tolil(copy=True)
    row = P.rows[i]
    if len(row) < 2:
        raise ContractError(f"row {i} has fewer than two successors")
    a, b = row[0], row[1]
    shift = min(eps, P[i, b] / 2)
    P[i, a] = P[i, a] + shift
    P[i, b] = P[i, b] - shift
    P = P.tocsr()
    # new stationary law by power iteration on the transposed kernel
    pi = chain.pi.copy()
    PT = P.T.tocsr()
    for _ in range(100_000):
        nxt = PT @ pi
        nxt /= nxt.sum()
        if np.abs(nxt - pi).max() < 1e-16:
            pi = nxt
            break
        pi = 0.5 * (nxt + pi)
    return replace(chain, P=P, pi=pi, exact_kernel=False)


# ---------------------------------------------------------------------------
# marginals


def site_marginal(chain: ParryChain, i: int, a) -> float:
    """Stationary probability that height ``i`` carries symbol ``a``."""
    n = chain.height
    if not 1 <= i <= n:
        raise ContractError(f"height {i} outside [1, {n}]")
    spec = chain.column_set.spec
    idx = spec.index(a)
    return float(chain.pi[chain.column_set.symbol_at(i) == idx].sum())


def marginal_decay_table(spec: SftSpec, n_max: int, symbol=1, n_min: int = 1) -> dict:
    """Differences of single-site marginals between strips of heights n and n+1.

    ``bottom`` rows compare height i of both strips (decay expected in the
    distance ``n - i`` to the top), ``top`` rows compare height i of strip
    n with height i+1 of strip n+1 (decay expected in ``i``).  Exponential
    fits are least squares on log differences above ``1e-15``.  The
    ``edge`` fit uses the larger of the two differences against
    ``min(i - 1, n - i)``, the number of rows of strip n between height i
    and the nearer edge at which the two strips differ (``edge_distance``).
    """
    if n_max < 3:
        raise ContractError("n_max must be at least 3")
    marg = {}
    for n in range(n_min, n_max + 2):
        ch = parry(build_transfer(spec, n))
        marg[n] = [site_marginal(ch, i, symbol) for i in range(1, n + 1)]
    rows = []
    for n in range(n_min, n_max + 1):
        for i in range(1, n + 1):
            b = abs(marg[n][i - 1] - marg[n + 1][i - 1])
            t = abs(marg[n][i - 1] - marg[n + 1][i])
            rows.append({"n": n, "i": i, "bottom": b, "top": t})
    fits = {
        "bottom": _fit([(r["n"] - r["i"], r["bottom"]) for r in rows]),
        "top": _fit([(r["i"], r["top"]) for r in rows]),
        "edge": _fit([(edge_distance(r["n"], r["i"]), max(r["bottom"], r["top"])) for r in rows]),
    }
    return {"rows": rows, "fits": fits, "marginals": marg}


def edge_distance(n: int, i: int) -> int:
    """Rows between height ``i`` of an ``n``-strip and its nearer edge (bottom edge: ``i - 1``)."""
    return min(i - 1, n - i)


def _fit(points, floor: float = 1e-15) -> dict:
    pts = [(x, y) for x, y in points if y > floor]
    if len(pts) < 2 or len({x for x, _ in pts}) < 2:
        return {"slope": float("nan"), "intercept": float("nan"), "points": len(pts)}
    x = np.array([p[0] for p in pts], dtype=float)
    y = np.log([p[1] for p in pts])
    slope, intercept = np.polyfit(x, y, 1)
    return {"slope": float(slope), "intercept": float(intercept), "points": len(pts)}


def envelope(fit: dict, x) -> float:
    return math.exp(fit["intercept"] + fit["slope"] * x)


# ---------------------------------------------------------------------------
# exact uniform-conditional check


def verify_uniform_conditional(chain: ParryChain, w: int, max_dim: int = 64) -> Fraction:
    """Largest deviation of the interior law from the weight-proportional law.

    For every pair of flanking columns ``(L, R)`` at horizontal distance
    ``w + 1`` the conditional distribution of the ``w`` interior columns is
    computed in exact rational arithmetic and compared with the law that
    weights each admissible filling by its product of column weights
    (uniform when all weights are 1).  Returns the maximum absolute
    deviation over all pairs and fillings.
    """
    if w < 1:
        raise ContractError("interior width must be at least 1")
    d = chain.dim
    if d > max_dim or d ** (w + 2) > PATH_CAP * 64:
        raise ResourceError(f"{d} columns with width {w} is too large for exact enumeration")
    P = chain.P.tocsr()
    succ = [P.indices[P.indptr[i] : P.indptr[i + 1]].tolist() for i in range(d)]
    if chain.transfer is not None:
        cw = chain.transfer.columns.exact_weights() if chain.column_set.spec.exact_weights else [
            Fraction(float(x)) for x in chain.transfer.column_weight
        ]
    else:
        cw = [1] * d
    cache: dict[tuple[int, int], Fraction] = {}

    def t(i, j):
        key = (i, j)
        if key not in cache:
            cache[key] = chain.transition_fraction(i, j)
        return cache[key]

    worst = Fraction(0)
    paths = 0
    for L in range(d):
        # all interior paths of length w from L, with their exact probabilities
        frontier = [((), Fraction(1), L)]
        for _ in range(w):
            nxt = []
            for path, prob, last in frontier:
                for c in succ[last]:
                    nxt.append((path + (c,), prob * t(last, c), c))
            frontier = nxt
            paths += len(frontier)
            if paths > PATH_CAP:
                raise ResourceError("too many interior paths for exact enumeration")
        by_r: dict[int, list] = {}
        for path, prob, last in frontier:
            for R in succ[last]:
                by_r.setdefault(R, []).append((path, prob * t(last, R)))
        for R, items in by_r.items():
            total = sum(p for _, p in items)
            wts = []
            for path, _ in items:
                wt = 1
                for c in path:
                    wt *= cw[c]
                wts.append(Fraction(wt))
            wsum = sum(wts)
            for (path, p), wt in zip(items, wts):
                dev = abs(p / total - wt / wsum)
                if dev > worst:
                    worst = dev
    return worst


# ---------------------------------------------------------------------------
# entropy bounds for row factors


def _factor_labels(chain: ParryChain, rows: RowSelector) -> np.ndarray:
    """Integer label per column for the symbols it shows on the selected rows."""
    rows.check(chain.height)
    sub = chain.column_set.codes[:, [h - 1 for h in rows.heights]]
    _, labels = np.unique(sub, axis=0, return_inverse=True)
    return labels.ravel()


def _block_entropies(start: np.ndarray, P: sp.csr_matrix, labels: np.ndarray, L: int) -> list[float]:
    """Entropies H(Y_1..Y_j), j = 1..L, of the factor of a chain started from ``start``.

    ``start`` is the law of X_1.  Words are grown breadth first and words of
    zero probability are dropped.
    """
    nlab = labels.max() + 1
    masks = [labels == y for y in range(nlab)]
    PT = P.T.tocsr()
    alphas = np.stack([np.where(mk, start, 0.0) for mk in masks])
    alphas = alphas[alphas.sum(axis=1) > 0]
    out = []
    for j in range(1, L + 1):
        p = alphas.sum(axis=1)
        p = p[p > 0]
        out.append(float(-(p * np.log(p)).sum()))
        if j == L:
            break
        moved = (PT @ alphas.T).T
        nxt = [moved * mk for mk in masks]
        alphas = np.concatenate(nxt)
        alphas = alphas[alphas.sum(axis=1) > 0]
        if alphas.shape[0] > WORD_CAP:
            raise ResourceError(f"{alphas.shape[0]} factor words exceed the cap {WORD_CAP}")
    return out


def _slack(L: int, dim: int, H: float) -> float:
    return 16 * EPS * (L * dim + 16) * (1 + abs(H))


def row_entropy_bounds(chain: ParryChain, heights, m: int) -> Interval:
    """Enclosure of the entropy rate of the process reading only ``heights``.

    Upper bound ``H(Y_0 | Y_-m..Y_-1)``, lower bound
    ``H(Y_0 | X_-m, Y_-m+1..Y_-1)``, with X the hidden column chain.
    """
    if m < 1:
        raise ContractError("window m must be at least 1")
    rows = _rows(heights)
    labels = _factor_labels(chain, rows)
    P = chain.P
    pi = chain.pi
    H = _block_entropies(pi, P, labels, m + 1)
    ub = H[m] - H[m - 1]
    ub_slack = _slack(m + 1, chain.dim, H[m])
    # G_j = H(X_1, Y_2..Y_j) = H(X_1) + sum_x pi(x) H(Y_2..Y_j | X_1 = x)
    hx = float(-(pi * np.log(pi)).sum())
    Gm = Gm1 = hx
    d = chain.dim
    for x in range(d):
        if pi[x] == 0:
            continue
        row = np.asarray(P[x].todense()).ravel()
        if m == 1:
            ent = _block_entropies(row, P, labels, 1)
            Gm1 += pi[x] * ent[0]
        else:
            ent = _block_entropies(row, P, labels, m)
            Gm += pi[x] * ent[m - 2]
            Gm1 += pi[x] * ent[m - 1]
    lb = Gm1 - Gm
    lb_slack = _slack(m + 1, d, Gm1) * 2
    lo = lb - lb_slack
    hi = ub + ub_slack
    if lo > hi:
        # the two bounds agree to within rounding
        lo, hi = min(lo, hi), max(lo, hi)
    return Interval(max(lo, 0.0), hi)


def conditional_row_entropy(chain: ParryChain, J, I, m: int) -> Interval:
    """Enclosure of ``h(rows J | rows I)`` as ``bounds(I u J) - bounds(I)``."""
    J, I = _rows(J), _rows(I)
    if set(J.heights) & set(I.heights):
        raise ContractError("row sets must be disjoint")
    both = I | J
    hs = both.heights
    if hs[-1] - hs[0] + 1 != len(hs):
        raise ContractError("I and J must form a contiguous block of rows")
    return row_entropy_bounds(chain, both, m) - row_entropy_bounds(chain, I, m)


def gibbsindep_test(chain: ParryChain, j: int, depth: int, m: int) -> dict:
    """Compare ``h(R_j | R_{j-1})`` with ``h(R_j | R_{j-depth}..R_{j-1})``."""
    if j - depth < 1 or j > chain.height:
        raise ContractError("rows j-depth..j must lie inside the strip")
    one = conditional_row_entropy(chain, [j], [j - 1], m)
    deep = conditional_row_entropy(chain, [j], list(range(j - depth, j)), m)
    return {
        "j": j,
        "depth": depth,
        "m": m,
        "depth1": one,
        "deep": deep,
        "intersect": one.intersects(deep),
    }
