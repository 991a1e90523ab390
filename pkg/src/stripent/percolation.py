"""Independent site percolation on finite regions of Z^2.

Event convention, shared by every function here and by the disagreement
bound in :mod:`stripent.rect_gibbs`: ``v <-> T`` inside a region ``S``
means ``v`` is open and an open nearest-neighbor path inside ``S`` joins
``v`` to some site of ``S`` adjacent to a target site of ``T``.  The
targets themselves lie outside ``S`` and are not random.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

import numpy as np
from scipy import ndimage

from .errors import ContractError, ResourceError, max_sites
from .spectral import Interval

NEIGHBORS = ((1, 0), (-1, 0), (0, 1), (0, -1))


def neighbors(site):
    x, y = site
    return [(x + dx, y + dy) for dx, dy in NEIGHBORS]


def target_adjacent(region: Iterable, targets: Iterable) -> frozenset:
    """Sites of ``region`` that touch a target site."""
    region = set(region)
    targets = set(targets)
    return frozenset(s for s in region if any(t in targets for t in neighbors(s)))


def exterior_boundary(region: Iterable) -> frozenset:
    """Sites outside ``region`` adjacent to it."""
    region = set(region)
    return frozenset(t for s in region for t in neighbors(s) if t not in region)


def box(n: int) -> frozenset:
    return frozenset((x, y) for x in range(-n, n + 1) for y in range(-n, n + 1))


def _as_prob(p):
    if isinstance(p, (Fraction, int)):
        q = Fraction(p)
    elif isinstance(p, str):
        q = Fraction(p)
    else:
        q = Fraction(float(p))
    if not 0 <= q <= 1:
        raise ContractError("p must lie in [0, 1]")
    return q


def perc_exact(p, region, source, target, cap: int | None = None) -> Fraction:
    """Exact ``P_p(source <-> target)`` inside ``region``.

    Explores the open cluster of ``source`` one frontier site at a time,
    branching on open/closed, and stops a branch as soon as the cluster
    touches a target-adjacent site.  The result is exact for rational ``p``
    (floats are taken at their exact binary value).
    """
    region = frozenset(region)
    cap = max_sites() if cap is None else cap
    if len(region) > cap:
        raise ResourceError(f"{len(region)} sites exceed the cap {cap} (STRIPENT_MAX_SITES)")
    if source not in region:
        raise ContractError("source must lie in the region")
    q = _as_prob(p)
    goal = target_adjacent(region, target)

    def explore(cluster: frozenset, closed: frozenset, frontier: tuple) -> Fraction:
        if not frontier:
            return Fraction(0)
        s = frontier[0]
        rest = frontier[1:]
        # s open
        grown = cluster | {s}
        if s in goal:
            win = q
        else:
            new = tuple(
                t for t in neighbors(s) if t in region and t not in grown and t not in closed and t not in rest
            )
            win = q * explore(grown, closed, rest + new) if q else Fraction(0)
        lose = (1 - q) * explore(cluster, closed | {s}, rest) if q != 1 else Fraction(0)
        return win + lose

    if q == 0:
        return Fraction(0)
    if source in goal:
        return q
    start = frozenset([source])
    first = tuple(t for t in neighbors(source) if t in region)
    return q * explore(start, frozenset(), first)


@dataclass(frozen=True)
class PercEstimate:
    p: float
    n: int
    trials: int
    hits: int
    estimate: float
    ci95: Interval

    @property
    def sigma(self) -> float:
        e = self.estimate
        return math.sqrt(max(e * (1 - e), 1e-300) / self.trials)

    def csv_row(self) -> str:
        lo, hi = self.ci95.as_tuple()
        return f"{self.p!r},{self.n},{self.trials},{self.hits},{self.estimate!r},{lo!r},{hi!r}"


def wilson_interval(hits: int, trials: int, z: float = 1.959963984540054) -> Interval:
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ContractError("trials must be positive")
    ph = hits / trials
    denom = 1 + z * z / trials
    centre = (ph + z * z / (2 * trials)) / denom
    half = z * math.sqrt(ph * (1 - ph) / trials + z * z / (4 * trials * trials)) / denom
    return Interval(max(0.0, min(centre - half, ph)), min(1.0, max(centre + half, ph)))


def _box_hits(u: np.ndarray, p: float, n: int) -> np.ndarray:
    """Per-trial indicator of ``0 <-> boundary`` for uniforms ``u`` of shape (trials, L, L)."""
    open_ = u < p
    structure = np.zeros((3, 3, 3), dtype=bool)
    structure[1] = ndimage.generate_binary_structure(2, 1)
    labels, _ = ndimage.label(open_, structure=structure)
    centre = labels[:, n, n]
    edge = np.concatenate(
        [labels[:, 0, :], labels[:, -1, :], labels[:, 1:-1, 0], labels[:, 1:-1, -1]], axis=1
    )
    return (centre > 0) & (edge == centre[:, None]).any(axis=1)


def perc_mc(p: float, n: int, trials: int, seed: int = 0, chunk: int | None = None) -> PercEstimate:
    """Monte Carlo estimate of ``P_p(0 <-> boundary of [-n, n]^2)``.

    Sites are opened by thresholding uniforms at ``p``, so runs with the
    same seed are coupled monotonically in ``p``.  Clusters are found with
    ``scipy.ndimage.label`` on a stack of boards, one 2D component search
    per trial.  Chunks draw from independent streams spawned from ``seed``;
    the chunk size depends only on ``n`` so results are reproducible.
    """
    if trials < 1:
        raise ContractError("trials must be positive")
    if n < 0:
        raise ContractError("n must be nonnegative")
    if not 0 <= p <= 1:
        raise ContractError("p must lie in [0, 1]")
    L = 2 * n + 1
    if chunk is None:
        chunk = max(1, 4_000_000 // (L * L))
    nchunks = -(-trials // chunk)
    streams = np.random.SeedSequence(seed).spawn(nchunks)
    hits = 0
    for c, ss in enumerate(streams):
        size = min(chunk, trials - c * chunk)
        u = np.random.default_rng(ss).random((size, L, L))
        if n == 0:
            hits += int((u[:, 0, 0] < p).sum())
        else:
            hits += int(_box_hits(u, p, n).sum())
    est = hits / trials
    return PercEstimate(float(p), n, trials, hits, est, wilson_interval(hits, trials))


def small_p_bound(p: float, n: int) -> float:
    """Path-counting bound ``(4p)^n / (1 - 4p)`` on ``P_p(0 <-> boundary of [-n, n]^2)``."""
    if not 0 <= p < 0.25:
        raise ContractError("small_p_bound needs 0 <= p < 0.25")
    if n < 0:
        raise ContractError("n must be nonnegative")
    return (4 * p) ** n / (1 - 4 * p)


def decay_fit(estimates: list[PercEstimate]) -> dict:
    """Least-squares fit ``ln estimate = ln A - B n`` over estimates with at least one hit."""
    pts = [(e.n, e.estimate) for e in estimates if e.hits > 0]
    if len(pts) < 2:
        return {"slope": float("nan"), "A": float("nan"), "B": float("nan"), "points": len(pts)}
    x = np.array([a for a, _ in pts], dtype=float)
    y = np.log([b for _, b in pts])
    slope, intercept = np.polyfit(x, y, 1)
    return {"slope": float(slope), "A": math.exp(intercept), "B": float(-slope), "points": len(pts)}
