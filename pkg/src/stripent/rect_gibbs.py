"""Uniform hard-core measures on rectangles, the checkerboard order, and dominance.

Sites are ``(x, y)`` pairs.  A site is black when ``x + y`` is even.  The
checkerboard order makes 1 the larger value on black sites and 0 the
larger value on white sites; configurations are compared sitewise.

Interior configurations are bit masks: bit ``k`` is the site
``rect.sites[k]`` (row-major, bottom row first).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from itertools import product
from typing import Mapping

import networkx as nx
import numpy as np

from .errors import ContractError, ConvergenceError, ResourceError, max_sites
from .percolation import neighbors, perc_exact

LABELS = ("zero", "plus", "minus")
_ALIASES = {"0": "zero", "+": "plus", "-": "minus", "zero": "zero", "plus": "plus", "minus": "minus"}
EDGES = ("up", "down", "left", "right")


def is_black(site) -> bool:
    return (site[0] + site[1]) % 2 == 0


@dataclass(frozen=True)
class Rect:
    """Rectangle ``[x0, x1] x [y0, y1]`` (inclusive)."""

    x0: int
    x1: int
    y0: int
    y1: int

    def __post_init__(self):
        if self.x0 > self.x1 or self.y0 > self.y1:
            raise ContractError("empty rectangle")

    @classmethod
    def from_ranges(cls, x_range, y_range) -> "Rect":
        return cls(x_range[0], x_range[1], y_range[0], y_range[1])

    @property
    def x_range(self) -> tuple[int, int]:
        return (self.x0, self.x1)

    @property
    def y_range(self) -> tuple[int, int]:
        return (self.y0, self.y1)

    @property
    def width(self) -> int:
        return self.x1 - self.x0 + 1

    @property
    def height(self) -> int:
        return self.y1 - self.y0 + 1

    @property
    def sites(self) -> list:
        return [(x, y) for y in range(self.y0, self.y1 + 1) for x in range(self.x0, self.x1 + 1)]

    def index(self, site) -> int:
        x, y = site
        if not (self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1):
            raise ContractError(f"{site} is not in the rectangle")
        return (y - self.y0) * self.width + (x - self.x0)

    def __contains__(self, site) -> bool:
        x, y = site
        return self.x0 <= x <= self.x1 and self.y0 <= y <= self.y1

    def contains_rect(self, other: "Rect") -> bool:
        return self.x0 <= other.x0 and other.x1 <= self.x1 and self.y0 <= other.y0 and other.y1 <= self.y1

    def edge_sites(self) -> dict:
        """Boundary sites at distance 1, split by edge (corners of the frame excluded)."""
        xs = range(self.x0, self.x1 + 1)
        ys = range(self.y0, self.y1 + 1)
        return {
            "up": [(x, self.y1 + 1) for x in xs],
            "down": [(x, self.y0 - 1) for x in xs],
            "left": [(self.x0 - 1, y) for y in ys],
            "right": [(self.x1 + 1, y) for y in ys],
        }

    def boundary(self) -> list:
        e = self.edge_sites()
        return e["up"] + e["down"] + e["left"] + e["right"]

    def color_masks(self) -> tuple[int, int]:
        black = white = 0
        for k, s in enumerate(self.sites):
            if is_black(s):
                black |= 1 << k
            else:
                white |= 1 << k
        return black, white

    def __str__(self) -> str:
        return f"[{self.x0},{self.x1}]x[{self.y0},{self.y1}]"


def _label(lbl) -> str:
    try:
        return _ALIASES[lbl]
    except KeyError:
        raise ContractError(f"boundary label must be zero, plus or minus, got {lbl!r}") from None


def _edge_value(label: str, site) -> int:
    if label == "zero":
        return 0
    if label == "plus":
        return 1 if is_black(site) else 0
    return 0 if is_black(site) else 1


def boundary_config(rect: Rect, u, d, l, r) -> dict:
    """Explicit boundary configuration for per-edge labels (up, down, left, right)."""
    labels = dict(zip(EDGES, (_label(u), _label(d), _label(l), _label(r))))
    out = {}
    for edge, sites in rect.edge_sites().items():
        for s in sites:
            out[s] = _edge_value(labels[edge], s)
    return out


def check_boundary(rect: Rect, boundary: Mapping) -> dict:
    """Validate an explicit boundary: exactly the sites of ``rect.boundary()``, values 0/1, no adjacent 1s."""
    expected = set(rect.boundary())
    if set(boundary) != expected:
        raise ContractError("boundary must assign exactly the sites adjacent to the rectangle")
    for s, v in boundary.items():
        if v not in (0, 1):
            raise ContractError(f"boundary value at {s} must be 0 or 1")
        if v == 1 and any(boundary.get(t) == 1 for t in neighbors(s)):
            raise ContractError(f"boundary has adjacent 1s at {s}")
    return dict(boundary)


def _resolve_boundary(rect: Rect, boundary) -> dict:
    if isinstance(boundary, (tuple, list)) and len(boundary) == 4:
        return boundary_config(rect, *boundary)
    return check_boundary(rect, boundary)


# ---------------------------------------------------------------------------
# exact measures


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Probability measure on masks over ``rect`` with exact rational weights."""

    rect: Rect
    atoms: dict

    def prob(self, predicate) -> Fraction:
        return sum((p for x, p in self.atoms.items() if predicate(x)), Fraction(0))

    def site_prob(self, site, value: int) -> Fraction:
        bit = 1 << self.rect.index(site)
        return self.prob(lambda x: bool(x & bit) == bool(value))

    def marginal(self, sub: Rect) -> "DiscreteMeasure":
        if not self.rect.contains_rect(sub):
            raise ContractError(f"{sub} is not inside {self.rect}")
        src = [self.rect.index(s) for s in sub.sites]
        out: dict = {}
        for x, p in self.atoms.items():
            y = 0
            for k, b in enumerate(src):
                if x >> b & 1:
                    y |= 1 << k
            out[y] = out.get(y, Fraction(0)) + p
        return DiscreteMeasure(sub, out)


@dataclass(frozen=True, eq=False)
class RectMeasure(DiscreteMeasure):
    """Uniform measure on the interior fillings compatible with a boundary."""

    boundary: dict = field(default_factory=dict)
    fillings: tuple = ()

    @property
    def count(self) -> int:
        return len(self.fillings)


def _row_masks(width: int) -> list[int]:
    return [m for m in range(1 << width) if m & (m << 1) == 0]


def enumerate_fillings(rect: Rect, boundary: Mapping) -> list[int]:
    """All interior fillings compatible with ``boundary``, in increasing mask order."""
    W, H = rect.width, rect.height
    rows = _row_masks(W)
    # bits of each row that a boundary 1 forbids
    forbid = [0] * H
    for j in range(H):
        y = rect.y0 + j
        if boundary.get((rect.x0 - 1, y)) == 1:
            forbid[j] |= 1
        if boundary.get((rect.x1 + 1, y)) == 1:
            forbid[j] |= 1 << (W - 1)
    for i in range(W):
        x = rect.x0 + i
        if boundary.get((x, rect.y0 - 1)) == 1:
            forbid[0] |= 1 << i
        if boundary.get((x, rect.y1 + 1)) == 1:
            forbid[H - 1] |= 1 << i
    out = []

    def rec(j, prev, acc):
        if j == H:
            out.append(acc)
            return
        for m in rows:
            if m & prev or m & forbid[j]:
                continue
            rec(j + 1, m, acc | (m << (j * W)))

    rec(0, 0, 0)
    return sorted(out)


def exact_rect_measure(rect: Rect, boundary, cap: int | None = None) -> RectMeasure:
    """Uniform measure over admissible fillings of ``rect`` given ``boundary``.

    ``boundary`` is an explicit map on the boundary sites or a 4-tuple of
    labels (up, down, left, right).
    """
    cap = max_sites() if cap is None else cap
    n = rect.width * rect.height
    if n > cap:
        raise ResourceError(f"{n} interior sites exceed the cap {cap} (STRIPENT_MAX_SITES)")
    bnd = _resolve_boundary(rect, boundary)
    fill = enumerate_fillings(rect, bnd)
    p = Fraction(1, len(fill))
    return RectMeasure(rect, {x: p for x in fill}, bnd, tuple(fill))


def is_admissible_filling(rect: Rect, boundary: Mapping, mask: int) -> bool:
    for k, s in enumerate(rect.sites):
        if not mask >> k & 1:
            continue
        for t in neighbors(s):
            if t in rect:
                if mask >> rect.index(t) & 1:
                    return False
            elif boundary.get(t) == 1:
                return False
    return True


# ---------------------------------------------------------------------------
# checkerboard order and dominance


class CheckerboardOrder:
    """Sitewise order with 0 < 1 on black sites and 1 < 0 on white sites."""

    def __init__(self, rect: Rect):
        self.rect = rect
        self.black, self.white = rect.color_masks()

    def leq(self, x: int, y: int) -> bool:
        return (x & ~y & self.black) == 0 and (y & ~x & self.white) == 0

    __call__ = leq

    def maximal(self) -> int:
        return self.black

    def minimal(self) -> int:
        return self.white


def config_leq(x: Mapping, y: Mapping) -> bool:
    """Checkerboard order on explicit configurations over the same sites."""
    if set(x) != set(y):
        raise ContractError("configurations must share their sites")
    for s in x:
        a, b = x[s], y[s]
        if a != b and (a, b) != ((0, 1) if is_black(s) else (1, 0)):
            return False
    return True


@dataclass
class DominanceResult:
    dominated: bool
    coupling: dict | None = None
    upset_generators: list | None = None
    mu_upset: Fraction | None = None
    nu_upset: Fraction | None = None


def _upset_mass(measure: DiscreteMeasure, gens, leq) -> Fraction:
    return measure.prob(lambda x: any(leq(a, x) for a in gens))


def dominance_check(mu: DiscreteMeasure, nu: DiscreteMeasure, order=None) -> DominanceResult:
    """Decide ``mu <= nu`` in the stochastic order induced by ``order``.

    Solves an integer max-flow problem source -> mu-atoms -> nu-atoms ->
    sink with capacities scaled by the common denominator; middle arcs
    join ``a`` to ``b`` when ``a <= b`` and are uncapacitated.  A full flow
    is returned as an exact coupling; otherwise the mu-atoms reachable from
    the source in the residual graph generate an up-set with
    ``mu(U) > nu(U)``.
    """
    if mu.rect != nu.rect:
        raise ContractError("measures live on different rectangles")
    leq = order or CheckerboardOrder(mu.rect)
    probs = list(mu.atoms.values()) + list(nu.atoms.values())
    D = reduce(lambda a, b: a * b // math.gcd(a, b), (p.denominator for p in probs), 1)
    G = nx.DiGraph()
    for a, p in mu.atoms.items():
        if p:
            G.add_edge("s", ("mu", a), capacity=int(p * D))
    for b, p in nu.atoms.items():
        if p:
            G.add_edge(("nu", b), "t", capacity=int(p * D))
    mu_atoms = [a for a, p in mu.atoms.items() if p]
    nu_atoms = [b for b, p in nu.atoms.items() if p]
    for a in mu_atoms:
        for b in nu_atoms:
            if leq(a, b):
                G.add_edge(("mu", a), ("nu", b))
    if "t" not in G or "s" not in G:
        return DominanceResult(False, upset_generators=[], mu_upset=Fraction(1), nu_upset=Fraction(0))
    value, flow = nx.maximum_flow(G, "s", "t")
    if value == D:
        coupling = {}
        for a in mu_atoms:
            for node, f in flow[("mu", a)].items():
                if f:
                    coupling[(a, node[1])] = Fraction(f, D)
        return DominanceResult(True, coupling=coupling)
    R = nx.algorithms.flow.edmonds_karp(G, "s", "t")
    reach = {"s"}
    stack = ["s"]
    while stack:
        v = stack.pop()
        for w, attr in R[v].items():
            if w not in reach and attr["capacity"] - attr["flow"] > 0:
                reach.add(w)
                stack.append(w)
    gens = [a for a in mu_atoms if ("mu", a) in reach]
    return DominanceResult(
        False,
        upset_generators=gens,
        mu_upset=_upset_mass(mu, gens, leq),
        nu_upset=_upset_mass(nu, gens, leq),
    )


def verify_coupling(mu: DiscreteMeasure, nu: DiscreteMeasure, coupling: dict, order=None) -> bool:
    """Exact check that ``coupling`` has marginals ``mu``, ``nu`` and lives on ordered pairs."""
    leq = order or CheckerboardOrder(mu.rect)
    left: dict = {}
    right: dict = {}
    for (a, b), p in coupling.items():
        if p < 0 or not leq(a, b):
            return False
        left[a] = left.get(a, 0) + p
        right[b] = right.get(b, 0) + p
    clean = lambda d: {k: v for k, v in d.items() if v}
    return clean(left) == clean(mu.atoms) and clean(right) == clean(nu.atoms)


def dominance_restriction_check(R: Rect, R_big: Rect, labels) -> dict:
    """Compare ``mu_R`` with the restriction of ``mu_{R_big}`` to ``R`` under the same labels.

    With ``plus`` labels the expected relation is ``mu_R >= mu_{R_big}|_R``;
    with ``minus`` labels it is ``mu_R <= mu_{R_big}|_R``.  Edges labelled
    ``zero`` must be shared by the two rectangles.
    """
    labels = tuple(_label(x) for x in labels)
    if not R_big.contains_rect(R):
        raise ContractError(f"{R} is not inside {R_big}")
    u, d, _, _ = labels
    if u == "zero" and R.y1 != R_big.y1:
        raise ContractError("a zero top edge must be shared by both rectangles")
    if d == "zero" and R.y0 != R_big.y0:
        raise ContractError("a zero bottom edge must be shared by both rectangles")
    signs = {x for x in labels if x != "zero"}
    if len(signs) != 1:
        raise ContractError("labels must mix zero with a single sign")
    sign = signs.pop()
    small = exact_rect_measure(R, labels)
    big = exact_rect_measure(R_big, labels).marginal(R)
    order = CheckerboardOrder(R)
    if sign == "plus":
        res = dominance_check(big, small, order)
    else:
        res = dominance_check(small, big, order)
    ok = res.dominated and verify_coupling(
        big if sign == "plus" else small, small if sign == "plus" else big, res.coupling, order
    )
    return {"R": str(R), "R_big": str(R_big), "labels": labels, "direction": sign, "dominated": res.dominated, "ok": ok, "result": res}


# ---------------------------------------------------------------------------
# disagreement percolation


def _targets(rect: Rect, sides) -> list:
    edges = rect.edge_sites()
    out = []
    for s in sides:
        if s not in edges:
            raise ContractError(f"unknown side {s!r}")
        out.extend(edges[s])
    return out


def disagreement_prob(rect: Rect, delta, eta, site, target_sides, cap: int = 12) -> Fraction:
    """Product-measure probability of a disagreement path from ``site`` to the target sides.

    Under ``mu^delta x mu^eta``, the event is a nearest-neighbor path of
    sites inside ``rect``, all with ``x(p) != y(p)``, from ``site`` to a
    site of ``rect`` adjacent to one of ``target_sides``.
    """
    n = rect.width * rect.height
    if n > cap:
        raise ResourceError(f"{n} sites exceed the pair-enumeration cap {cap}")
    mu = exact_rect_measure(rect, delta)
    nu = exact_rect_measure(rect, eta)
    sites = rect.sites
    goal_sites = set()
    targets = set(_targets(rect, target_sides))
    for k, s in enumerate(sites):
        if any(t in targets for t in neighbors(s)):
            goal_sites.add(k)
    goal = sum(1 << k for k in goal_sites)
    nbr = [[rect.index(t) for t in neighbors(s) if t in rect] for s in sites]
    start = rect.index(site)
    hits = 0
    for x in mu.fillings:
        for y in nu.fillings:
            diff = x ^ y
            if not diff >> start & 1:
                continue
            seen = 1 << start
            stack = [start]
            found = bool(seen & goal)
            while stack and not found:
                v = stack.pop()
                for w in nbr[v]:
                    bit = 1 << w
                    if diff & bit and not seen & bit:
                        seen |= bit
                        if bit & goal:
                            found = True
                            break
                        stack.append(w)
            hits += found
    return Fraction(hits, mu.count * nu.count)


SANDWICH_PAIRS = {
    "top-zero": (("zero", "minus", "minus", "minus"), ("zero", "plus", "plus", "plus"), ("down", "left", "right")),
    "bottom-zero": (("minus", "zero", "minus", "minus"), ("plus", "zero", "plus", "plus"), ("up", "left", "right")),
}


SANDWICH_CSV_HEADER = "rect,site,p_minus,p_plus,diff,perc_bound,ok"


def sandwich_csv_row(row: dict) -> str:
    x, y = row["site"]
    fields = (row["rect"], f"({x},{y})", row["p_minus"], row["p_plus"], row["diff"], row["perc_bound"], row["ok"])
    return ",".join(f'"{v}"' if i < 2 else str(v) for i, v in enumerate(fields))


def disagreement_sandwich(rect: Rect, site) -> list[dict]:
    """Exact check of the two-sided disagreement bound at one site.

    For each boundary pair, with ``p_minus`` and ``p_plus`` the
    probabilities that ``site`` carries 0, ``diff`` is ``p_minus - p_plus``
    on black sites and ``p_plus - p_minus`` on white sites; ``ok`` asserts
    ``0 <= diff <= 2 P_{1/2}(site <-> target sides)``.  The product-measure
    disagreement probability is reported alongside (``dbar_equal`` says
    whether it equals ``diff``), but not asserted.
    """
    out = []
    for name, (minus_lbl, plus_lbl, sides) in SANDWICH_PAIRS.items():
        m_minus = exact_rect_measure(rect, minus_lbl)
        m_plus = exact_rect_measure(rect, plus_lbl)
        p_minus = m_minus.site_prob(site, 0)
        p_plus = m_plus.site_prob(site, 0)
        diff = p_minus - p_plus if is_black(site) else p_plus - p_minus
        perc = perc_exact(Fraction(1, 2), rect.sites, site, _targets(rect, sides))
        bound = 2 * perc
        row = {
            "rect": str(rect),
            "site": site,
            "pair": name,
            "black": is_black(site),
            "p_minus": p_minus,
            "p_plus": p_plus,
            "diff": diff,
            "perc_bound": bound,
            "ok": 0 <= diff <= bound,
        }
        if rect.width * rect.height <= 12:
            dis = disagreement_prob(rect, minus_lbl, plus_lbl, site, sides)
            row["disagreement"] = dis
            row["dbar_equal"] = dis == diff
        out.append(row)
    return out


th9_sandwich = disagreement_sandwich


# ---------------------------------------------------------------------------
# monotone coupling from the past


def _padded_boundary(rect: Rect, boundary: Mapping) -> np.ndarray:
    H, W = rect.height, rect.width
    pad = np.zeros((H + 2, W + 2), dtype=np.uint8)
    for (x, y), v in boundary.items():
        pad[y - rect.y0 + 1, x - rect.x0 + 1] = v
    return pad


def heat_bath_update(rect: Rect, boundary: Mapping, mask: int, site_index: int, u: float) -> int:
    """Single-site heat-bath move on a mask (scalar reference for the vectorized sampler)."""
    s = rect.sites[site_index]
    blocked = False
    for t in neighbors(s):
        if t in rect:
            blocked |= bool(mask >> rect.index(t) & 1)
        else:
            blocked |= boundary.get(t) == 1
    bit = 1 << site_index
    if blocked:
        return mask & ~bit
    up = u > 0.5 if is_black(s) else u <= 0.5
    return mask | bit if up else mask & ~bit


def _sweep(states: np.ndarray, u: np.ndarray, rect: Rect):
    """One heat-bath sweep over all sites, in place; ``states`` has shape (S, H+2, W+2)."""
    k = 0
    for j in range(1, rect.height + 1):
        for i in range(1, rect.width + 1):
            blocked = (
                states[:, j - 1, i] | states[:, j + 1, i] | states[:, j, i - 1] | states[:, j, i + 1]
            ).astype(bool)
            black = (rect.x0 + i - 1 + rect.y0 + j - 1) % 2 == 0
            up = u[:, k] > 0.5 if black else u[:, k] <= 0.5
            states[:, j, i] = (~blocked & up).astype(np.uint8)
            k += 1


def _to_masks(states: np.ndarray, rect: Rect) -> np.ndarray:
    inner = states[:, 1:-1, 1:-1].reshape(states.shape[0], -1).astype(np.int64)
    weights = np.int64(1) << np.arange(inner.shape[1], dtype=np.int64)
    return inner @ weights


def cftp_samples(rect: Rect, boundary, seed: int, count: int, max_doublings: int = 24) -> np.ndarray:
    """Exact samples (as masks) from the uniform measure, by monotone CFTP.

    Sweep ``t`` steps before time 0 always uses uniforms from
    ``numpy.random.default_rng([seed, t])`` of shape (count, sites), so
    every restart reuses the same randomness.  The top chain starts at 1
    on black and 0 on white sites, the bottom chain at the reverse; a
    sample is accepted at the first doubling where the two agree.
    """
    if count < 1:
        raise ContractError("count must be positive")
    bnd = _resolve_boundary(rect, boundary)
    pad = _padded_boundary(rect, bnd)
    black, white = rect.color_masks()
    nsites = rect.width * rect.height
    out = np.full(count, -1, dtype=np.int64)
    pending = np.arange(count)
    T = 1
    for _ in range(max_doublings + 1):
        top = np.repeat(pad[None], len(pending), axis=0)
        bot = top.copy()
        for j in range(rect.height):
            for i in range(rect.width):
                b = (rect.x0 + i + rect.y0 + j) % 2 == 0
                top[:, j + 1, i + 1] = 1 if b else 0
                bot[:, j + 1, i + 1] = 0 if b else 1
        for t in range(T - 1, -1, -1):
            u = np.random.default_rng([seed, t]).random((count, nsites))[pending]
            _sweep(top, u, rect)
            _sweep(bot, u, rect)
        mt, mb = _to_masks(top, rect), _to_masks(bot, rect)
        done = mt == mb
        out[pending[done]] = mt[done]
        pending = pending[~done]
        if pending.size == 0:
            return out
        T *= 2
    raise ConvergenceError(f"{pending.size} samples did not coalesce within {T // 2} sweeps")


def cftp_sample(rect: Rect, boundary, seed: int) -> int:
    return int(cftp_samples(rect, boundary, seed, 1)[0])


def mask_to_config(rect: Rect, mask: int) -> dict:
    return {s: (mask >> k) & 1 for k, s in enumerate(rect.sites)}


def boundary_pairs(rect: Rect):
    """All ordered label 4-tuples from {zero, plus, minus}, with explicit configurations."""
    for labels in product(LABELS, repeat=4):
        yield labels, boundary_config(rect, *labels)


DOMINANCE_SHAPES = ((1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (3, 1), (2, 3), (3, 2))


def dominance_exhaustive(shapes=DOMINANCE_SHAPES) -> list[dict]:
    """Check ``mu^delta <= mu^eta`` for every ordered pair of distinct label-generated boundaries.

    Boundaries are explicit configurations from all 81 label tuples
    (duplicates merged); each comparable pair gets an exact coupling,
    which is verified independently of the flow solver.
    """
    out = []
    for w, h in shapes:
        R = Rect(0, w - 1, 0, h - 1)
        order = CheckerboardOrder(R)
        confs: dict = {}
        for labels, b in boundary_pairs(R):
            confs.setdefault(tuple(sorted(b.items())), labels)
        measures = {key: exact_rect_measure(R, dict(key)) for key in confs}
        pairs = failures = 0
        for a in confs:
            for b in confs:
                if a == b or not config_leq(dict(a), dict(b)):
                    continue
                pairs += 1
                res = dominance_check(measures[a], measures[b], order)
                if not (res.dominated and verify_coupling(measures[a], measures[b], res.coupling, order)):
                    failures += 1
        out.append({"rect": str(R), "boundaries": len(confs), "pairs": pairs, "failures": failures})
    return out


def incomparable_point_masses() -> tuple[DiscreteMeasure, DiscreteMeasure]:
    """Point masses on 1 at (0,0) and 1 at (2,0) in a 3x1 row; neither filling dominates the other."""
    R = Rect(0, 2, 0, 0)
    return DiscreteMeasure(R, {0b001: Fraction(1)}), DiscreteMeasure(R, {0b100: Fraction(1)})
