"""A block-gluing SFT whose strip entropy differences oscillate.

Alphabet: ``Z`` (the integer 0), ``N`` (all nonzero integers ``1..k``
collapsed into one symbol of weight ``k``) and six grid symbols drawn as
line segments meeting some of the four cell edges.  Collapsing is exact
because the nonzero integers are interchangeable in every rule.

Strip entropies of this shift jump by about ``ln k`` when going from an
even height to the next odd height and by a bounded amount otherwise, so
``h_{n+1} - h_n`` has no limit once ``k`` is large.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product

from .entropy_lab import EntropyTable, entropy_sequence, extrapolate
from .errors import ContractError
from .sft_model import SftSpec

L, R, U, D = "L", "R", "U", "D"


@dataclass(frozen=True)
class GridSymbol:
    name: str
    segments: frozenset

    def __contains__(self, side) -> bool:
        return side in self.segments


GRID = {
    "s1": GridSymbol("s1", frozenset({L, R})),
    "s2": GridSymbol("s2", frozenset({U, D})),
    "s3": GridSymbol("s3", frozenset({L, R, U})),
    "s4": GridSymbol("s4", frozenset({U, D, R})),
    "s5": GridSymbol("s5", frozenset({L, R, D})),
    "s6": GridSymbol("s6", frozenset({U, D, L})),
}
GRID_NAMES = tuple(GRID)

VARIANTS = ("default", "strict")

# bound constants: ln 8 for odd heights, ln(8 * 48^2) for even heights
LN8 = math.log(8)
LN_EVEN = math.log(8 * 48**2)
K_ODD = 48**2
K_EVEN = 48**4
K_OSC = (8 * 48**2) ** 2


def _vertical(g: GridSymbol) -> bool:
    return U in g or D in g


def _horizontal(g: GridSymbol) -> bool:
    return L in g or R in g


def grid_h_allowed(a: str, b: str, variant: str = "default") -> bool:
    """``a`` immediately left of ``b``, both grid symbols."""
    return _h_segments(GRID[a], GRID[b], variant)


def grid_v_allowed(a: str, b: str, variant: str = "default") -> bool:
    """``a`` immediately below ``b``, both grid symbols."""
    return _v_segments(GRID[a], GRID[b], variant)


def _h_segments(ga, gb, variant: str) -> bool:
    if (R in ga) != (L in gb):
        return False
    if variant == "strict":
        return not (_vertical(ga) and _vertical(gb))
    return not (U in ga and U in gb) and not (D in ga and D in gb)


def _v_segments(ga, gb, variant: str) -> bool:
    if (U in ga) != (D in gb):
        return False
    if variant == "strict":
        return not (_horizontal(ga) and _horizontal(gb))
    return not (L in ga and L in gb) and not (R in ga and R in gb)


def _is_grid(s) -> bool:
    return isinstance(s, str) and s in GRID


def _is_zero(s) -> bool:
    return s == "Z" or s == 0


def _rules(variant: str):
    if variant not in VARIANTS:
        raise ContractError(f"variant must be one of {VARIANTS}")

    def h(a, b):
        if _is_grid(a) and _is_grid(b):
            return grid_h_allowed(a, b, variant)
        if _is_grid(a) or _is_grid(b):
            return True
        # integers: 0 only beside 0, nonzero beside nonzero
        return _is_zero(a) == _is_zero(b)

    def v(a, b):
        if _is_grid(a) and _is_grid(b):
            return grid_v_allowed(a, b, variant)
        if _is_grid(a):
            return _is_zero(b)
        if _is_grid(b):
            return True
        # exactly one of two vertical integer neighbors is 0
        return _is_zero(a) != _is_zero(b)

    return h, v


def build_y(k: int = K_OSC + 1, variant: str = "default") -> SftSpec:
    """The shift with nonzero integers collapsed into ``N`` of weight ``k``."""
    if isinstance(k, bool) or not isinstance(k, int) or k < 2:
        raise ContractError("k must be an integer >= 2")
    h, v = _rules(variant)
    symbols = ("Z", "N") + GRID_NAMES
    weights = {s: 1 for s in symbols}
    weights["N"] = k
    return SftSpec.from_predicates(f"Y(k={k})" if variant == "default" else f"Y(k={k},{variant})", symbols, weights, h, v)


def build_y_uncollapsed(k: int, variant: str = "default") -> SftSpec:
    """Same shift with explicit integer symbols ``0..k``; for brute-force checks only."""
    if k < 1:
        raise ContractError("k must be positive")
    h, v = _rules(variant)
    return SftSpec.from_predicates(f"Y-full(k={k})", tuple(range(k + 1)) + GRID_NAMES, None, h, v)


# ---------------------------------------------------------------------------
# closed grid structures


def closed_grid_count(width: int, height: int, variant: str = "default", grid: dict | None = None) -> int:
    """Number of nonempty closed grid structures on a ``width x height`` board.

    A structure places grid symbols on some cells of the board; it is
    closed when every segment of every placed symbol meets a placed
    neighbor carrying the matching segment, and every adjacent pair of
    placed symbols obeys the grid rules.  Computed exactly by a row
    transfer over all ``7^width`` row patterns.  ``grid`` substitutes
    another symbol set (name -> GridSymbol).
    """
    grid = GRID if grid is None else grid
    if width < 1 or height < 1:
        raise ContractError("board must be nonempty")
    cells = (None,) + tuple(grid)
    rows = []
    for row in product(cells, repeat=width):
        ok = True
        for i, s in enumerate(row):
            left = row[i - 1] if i > 0 else None
            right = row[i + 1] if i + 1 < width else None
            if s is None:
                continue
            g = grid[s]
            if (L in g) != (left is not None and R in grid[left]):
                ok = False
                break
            if (R in g) != (right is not None and L in grid[right]):
                ok = False
                break
            if right is not None and not _h_segments(grid[s], grid[right], variant):
                ok = False
                break
        if not ok:
            continue
        up = tuple(s is not None and U in grid[s] for s in row)
        down = tuple(s is not None and D in grid[s] for s in row)
        rows.append((row, up, down))

    def stacks(lo, hi):
        for a, b in zip(lo[0], hi[0]):
            if a is not None and b is not None and not _v_segments(grid[a], grid[b], variant):
                return False
        return lo[1] == hi[2]

    counts = {i: 1 for i, r in enumerate(rows) if not any(r[2])}
    for _ in range(height - 1):
        nxt: dict = {}
        for i, c in counts.items():
            for j, r in enumerate(rows):
                if stacks(rows[i], r):
                    nxt[j] = nxt.get(j, 0) + c
        counts = nxt
    total = sum(c for i, c in counts.items() if not any(rows[i][1]))
    return total - 1  # drop the empty board


def loop_search(max_size: int = 6, variant: str = "default") -> dict:
    """Closed-structure counts on every board up to ``max_size x max_size``."""
    out = {}
    for w in range(1, max_size + 1):
        for h in range(1, max_size + 1):
            out[(w, h)] = closed_grid_count(w, h, variant)
    return out


# ---------------------------------------------------------------------------
# entropy tables and bounds


def entropy_bounds(k: int, n: int) -> tuple[float, float]:
    """Lower and upper bound on ``h_n(Y)``: ``j ln k`` and ``j ln k + c`` with ``j = ceil(n/2)``."""
    j = (n + 1) // 2
    lo = j * math.log(k)
    return lo, lo + (LN8 if n % 2 else LN_EVEN)


def bounds_apply(k: int, n: int) -> bool:
    return k > (K_ODD if n % 2 else K_EVEN)


@dataclass
class YTable:
    k: int
    table: EntropyTable
    checks: list

    @property
    def all_ok(self) -> bool:
        return all(c["ok"] for c in self.checks if c["applies"])

    def to_csv(self) -> str:
        out = ["n,h_lo,h_hi,bound_lo,bound_hi,applies,ok"]
        for c in self.checks:
            out.append(
                f"{c['n']},{c['h_lo']!r},{c['h_hi']!r},{c['bound_lo']!r},{c['bound_hi']!r},{c['applies']},{'ok' if c['ok'] else 'FAIL'}"
            )
        if self.table.failure:
            out.append(f"# stopped: {self.table.failure}")
        return "\n".join(out) + "\n"


def y_entropy_table(k: int, n_max: int, tol: float = 1e-13, variant: str = "default", slack: float = 1e-9) -> YTable:
    """``h_n(Y)`` for ``n <= n_max`` with the two bound families checked.

    ``ok`` means the enclosure lies inside ``[bound_lo - slack, bound_hi + slack]``.
    A bound is asserted (``applies``) only when ``k`` exceeds the threshold
    its derivation needs.  A resource cap stops the table early.
    """
    spec = build_y(k, variant)
    table = entropy_sequence(spec, n_max, tol)
    checks = []
    for row in table.rows:
        lo_b, hi_b = entropy_bounds(k, row.n)
        lo, hi = row.h.as_tuple()
        checks.append(
            {
                "n": row.n,
                "h_lo": lo,
                "h_hi": hi,
                "bound_lo": lo_b,
                "bound_hi": hi_b,
                "applies": bounds_apply(k, row.n),
                "ok": lo >= lo_b - slack and hi <= hi_b + slack,
            }
        )
    return YTable(k, table, checks)


def oscillation_from_table(table: EntropyTable, k: int | None = None, noise: float = 1e-9) -> dict:
    """Alternation pattern of the differences in ``table``.

    ``gaps[i]`` is ``Delta_{i+1} - Delta_i`` (lower end when positive,
    upper end when negative, so its sign is certified when nonzero).
    ``oscillating`` is true when every gap clears ``noise`` and the signs
    alternate.
    """
    deltas = table.deltas()
    gaps = []
    for a, b in zip(deltas, deltas[1:]):
        g = b - a
        lo, hi = g.as_tuple()
        gaps.append(lo if lo > 0 else hi if hi < 0 else 0.0)
    signs = [0 if abs(g) <= noise else (1 if g > 0 else -1) for g in gaps]
    oscillating = len(signs) >= 2 and all(s != 0 for s in signs) and all(
        s * t < 0 for s, t in zip(signs, signs[1:])
    )
    # odd step h_{2j+1} - h_{2j} minus even step h_{2j} - h_{2j-1}
    odd_minus_even = []
    for j in range(1, len(deltas) // 2 + 1):
        if 2 * j <= len(deltas):
            d = deltas[2 * j - 1] - deltas[2 * j - 2]
            odd_minus_even.append({"j": j, "lo": d.as_tuple()[0], "hi": d.as_tuple()[1]})
    report = {
        "deltas": [d.as_tuple() for d in deltas],
        "gaps": gaps,
        "signs": signs,
        "oscillating": oscillating,
        "odd_minus_even": odd_minus_even,
        "epsilon": min((r["lo"] for r in odd_minus_even), default=math.nan),
    }
    try:
        report["extrapolation_reliable"] = extrapolate(table).reliable and not oscillating
    except ContractError:
        report["extrapolation_reliable"] = False
    if k is not None:
        report["applies"] = k > K_OSC
        report["guaranteed_gap"] = math.log(k) - 2 * LN_EVEN
        report["note"] = (
            "bounds force oscillation"
            if report["applies"]
            else f"k <= {K_OSC}: the bounds do not force oscillation"
        )
    return report


def oscillation_report(k: int, n_max: int, tol: float = 1e-13, variant: str = "default", spec: SftSpec | None = None) -> dict:
    """Alternating difference pattern of ``h_n(Y)``; ``spec`` replaces Y for control runs."""
    if n_max < 3:
        raise ContractError("n_max must be at least 3")
    if spec is not None:
        return oscillation_from_table(entropy_sequence(spec, n_max, tol))
    yt = y_entropy_table(k, n_max, tol, variant)
    rep = oscillation_from_table(yt.table, k)
    rep["bounds_ok"] = yt.all_ok
    rep["n_computed"] = yt.table.n_max
    if yt.table.failure:
        rep["stopped"] = yt.table.failure
    return rep
