"""Nearest-neighbor Z^2 shifts of finite type with symbol weights.

An :class:`SftSpec` is the input object for everything else in the
package: an ordered alphabet, a positive weight per symbol, and two
ordered adjacency relations.  ``h_allowed(a, b)`` means ``a`` may sit
immediately left of ``b``; ``v_allowed(a, b)`` means ``a`` may sit
immediately below ``b``.  Neither relation is assumed symmetric.

Weights generalize plain counting: a symbol of weight ``k`` behaves like
``k`` interchangeable copies of one symbol.  With all weights equal to 1,
weighted counts are ordinary configuration counts.

Coordinates are ``(x, y)`` with ``x`` increasing to the right and ``y``
increasing upward.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Callable, Hashable, Iterable, Mapping

import numpy as np

from .errors import ContractError, SftParseError

Site = tuple[int, int]


def _check_weight(w, sym):
    if isinstance(w, bool) or not isinstance(w, (int, float, Fraction)):
        raise ContractError(f"weight of {sym!r} must be a number, got {w!r}")
    if not (w > 0) or (isinstance(w, float) and not math.isfinite(w)):
        raise ContractError(f"weight of {sym!r} must be positive and finite, got {w!r}")


@dataclass(frozen=True)
class SftSpec:
    """Immutable nearest-neighbor SFT.

    ``h_pairs`` and ``v_pairs`` hold the *allowed* ordered pairs; every
    pair not listed is forbidden, so both predicates are total.
    """

    name: str
    symbols: tuple
    weights: tuple
    h_pairs: frozenset
    v_pairs: frozenset
    _index: dict = field(init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        symbols = tuple(self.symbols)
        object.__setattr__(self, "symbols", symbols)
        object.__setattr__(self, "weights", tuple(self.weights))
        object.__setattr__(self, "h_pairs", frozenset(self.h_pairs))
        object.__setattr__(self, "v_pairs", frozenset(self.v_pairs))
        if len(symbols) < 2:
            raise ContractError("an alphabet needs at least two symbols")
        if len(set(symbols)) != len(symbols):
            raise ContractError("duplicate symbol in alphabet")
        if len(self.weights) != len(symbols):
            raise ContractError("one weight per symbol is required")
        for s, w in zip(symbols, self.weights):
            _check_weight(w, s)
        index = {s: i for i, s in enumerate(symbols)}
        for rel, pairs in (("horizontal", self.h_pairs), ("vertical", self.v_pairs)):
            for a, b in pairs:
                if a not in index or b not in index:
                    raise ContractError(f"{rel} pair ({a!r}, {b!r}) uses an unknown symbol")
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_predicates(
        cls,
        name: str,
        symbols: Iterable[Hashable],
        weights: Iterable | Mapping | None,
        h_allowed: Callable[[Hashable, Hashable], bool],
        v_allowed: Callable[[Hashable, Hashable], bool],
    ) -> "SftSpec":
        symbols = tuple(symbols)
        if weights is None:
            weights = (1,) * len(symbols)
        elif isinstance(weights, Mapping):
            weights = tuple(weights[s] for s in symbols)
        h = frozenset((a, b) for a in symbols for b in symbols if h_allowed(a, b))
        v = frozenset((a, b) for a in symbols for b in symbols if v_allowed(a, b))
        return cls(name, symbols, tuple(weights), h, v)

    # predicates -----------------------------------------------------------
    def h_allowed(self, left, right) -> bool:
        return (left, right) in self.h_pairs

    def v_allowed(self, below, above) -> bool:
        return (below, above) in self.v_pairs

    def weight(self, sym):
        try:
            return self.weights[self._index[sym]]
        except KeyError:
            raise ContractError(f"unknown symbol {sym!r}") from None

    def index(self, sym) -> int:
        try:
            return self._index[sym]
        except KeyError:
            raise ContractError(f"unknown symbol {sym!r}") from None

    def __contains__(self, sym) -> bool:
        return sym in self._index

    @property
    def size(self) -> int:
        return len(self.symbols)

    # index-level views used by the transfer-matrix code ---------------------
    def h_matrix(self) -> np.ndarray:
        """Boolean q x q matrix, ``[i, j]`` true iff symbol i may be left of j."""
        q = self.size
        out = np.zeros((q, q), dtype=bool)
        for a, b in self.h_pairs:
            out[self._index[a], self._index[b]] = True
        return out

    def v_matrix(self) -> np.ndarray:
        """Boolean q x q matrix, ``[i, j]`` true iff symbol i may be below j."""
        q = self.size
        out = np.zeros((q, q), dtype=bool)
        for a, b in self.v_pairs:
            out[self._index[a], self._index[b]] = True
        return out

    def weight_array(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights])

    @property
    def exact_weights(self) -> bool:
        """True when every weight is an int or Fraction (exact counting possible)."""
        return all(isinstance(w, (int, Fraction)) for w in self.weights)

    def is_h_symmetric(self) -> bool:
        return all((b, a) in self.h_pairs for a, b in self.h_pairs)

    def with_weights(self, weights: Mapping) -> "SftSpec":
        ws = tuple(weights.get(s, w) for s, w in zip(self.symbols, self.weights))
        return SftSpec(self.name, self.symbols, ws, self.h_pairs, self.v_pairs)


@dataclass(frozen=True)
class FiniteConfig:
    """A finite pattern: a map from lattice sites to symbols."""

    assignment: Mapping[Site, Hashable]

    @property
    def shape(self) -> frozenset:
        return frozenset(self.assignment)

    @classmethod
    def from_rows(cls, rows, origin: Site = (0, 0)) -> "FiniteConfig":
        """Build a rectangular pattern from rows listed top to bottom, as drawn.

        ``origin`` is the site of the bottom-left entry.  ``None`` entries
        are left out of the shape.
        """
        x0, y0 = origin
        h = len(rows)
        out = {}
        for r, row in enumerate(rows):
            y = y0 + (h - 1 - r)
            for c, sym in enumerate(row):
                if sym is not None:
                    out[(x0 + c, y)] = sym
        return cls(out)


def hard_square() -> SftSpec:
    """The hard square shift: symbols 0 and 1, no two orthogonally adjacent 1s."""
    return SftSpec.from_predicates(
        "hardsquare",
        (0, 1),
        None,
        lambda a, b: not (a == 1 and b == 1),
        lambda a, b: not (a == 1 and b == 1),
    )


def full_shift(q: int = 2, name: str | None = None) -> SftSpec:
    """Unconstrained shift on symbols ``0..q-1``."""
    return SftSpec.from_predicates(
        name or f"full{q}", range(q), None, lambda a, b: True, lambda a, b: True
    )


def is_locally_admissible(spec: SftSpec, cfg: FiniteConfig | Mapping) -> bool:
    assignment = cfg.assignment if isinstance(cfg, FiniteConfig) else cfg
    for site, sym in assignment.items():
        if sym not in spec:
            raise ContractError(f"unknown symbol {sym!r} at {site}")
    for (x, y), sym in assignment.items():
        right = assignment.get((x + 1, y))
        if right is not None and not spec.h_allowed(sym, right):
            return False
        above = assignment.get((x, y + 1))
        if above is not None and not spec.v_allowed(sym, above):
            return False
    return True


def count_locally_admissible(spec: SftSpec, width: int, height: int, weighted: bool = True):
    """Weighted count of locally admissible patterns on ``[1,width] x [1,height]``.

    Cells are filled one at a time in row-major order (bottom row first);
    partial patterns sharing the same last ``width`` cells are merged.  This
    is deliberately independent of the column transfer matrix so it can
    serve as an oracle for it.  Exact when the weights are exact.
    """
    if width < 1 or height < 1:
        raise ContractError("width and height must be positive")
    H = spec.h_matrix()
    V = spec.v_matrix()
    q = spec.size
    wts = spec.weights if weighted else (1,) * q
    states: dict[tuple, object] = {(): 1}
    for y in range(height):
        for x in range(width):
            nxt: dict[tuple, object] = {}
            for frontier, acc in states.items():
                left = frontier[-1] if x > 0 else None
                below = frontier[-width] if y > 0 else None
                for s in range(q):
                    if left is not None and not H[left, s]:
                        continue
                    if below is not None and not V[below, s]:
                        continue
                    key = (frontier + (s,))[-width:]
                    nxt[key] = nxt.get(key, 0) + acc * wts[s]
            states = nxt
    return sum(states.values())


def enumerate_locally_admissible(spec: SftSpec, width: int, height: int):
    """Yield every locally admissible pattern on ``[1,width] x [1,height]`` (tiny shapes only)."""
    sites = [(x, y) for y in range(1, height + 1) for x in range(1, width + 1)]
    for values in product(spec.symbols, repeat=len(sites)):
        cfg = dict(zip(sites, values))
        if is_locally_admissible(spec, cfg):
            yield cfg


# ---------------------------------------------------------------------------
# text format

_INT_RE = re.compile(r"^[+-]?\d+$")
_TOKEN_RE = re.compile(r"^[^\s#]+$")


def _parse_symbol(tok: str):
    return int(tok) if _INT_RE.match(tok) else tok


def _parse_weight(tok: str, line: int):
    try:
        if _INT_RE.match(tok):
            w = int(tok)
        elif "/" in tok:
            w = Fraction(tok)
        else:
            w = float(tok)
    except (ValueError, ZeroDivisionError):
        raise SftParseError(f"bad weight {tok!r}", line) from None
    if not (w > 0) or (isinstance(w, float) and not math.isfinite(w)):
        raise SftParseError(f"weight must be positive, got {tok}", line)
    return w


def load_sft(text: str) -> SftSpec:
    """Parse the line-oriented SFT format (see :func:`save_sft`)."""
    name = None
    symbols: list = []
    weights: list = []
    defaults = {"h": True, "v": True}
    overrides: dict[str, dict] = {"h": {}, "v": {}}
    pending: list[tuple[str, str, str, str, int]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kw = parts[0]
        if name is None:
            if kw != "sft" or len(parts) != 2:
                raise SftParseError("file must start with 'sft <name>'", lineno)
            name = parts[1]
            continue
        if kw == "sft":
            raise SftParseError("duplicate 'sft' header", lineno)
        if kw == "symbol":
            if len(parts) != 3:
                raise SftParseError("expected 'symbol <id> <weight>'", lineno)
            sym = _parse_symbol(parts[1])
            if sym in symbols:
                raise SftParseError(f"duplicate symbol {parts[1]!r}", lineno)
            symbols.append(sym)
            weights.append(_parse_weight(parts[2], lineno))
        elif kw in ("hdefault", "vdefault"):
            if len(parts) != 2 or parts[1] not in ("allow", "forbid"):
                raise SftParseError(f"expected '{kw} allow|forbid'", lineno)
            defaults[kw[0]] = parts[1] == "allow"
        elif kw in ("hallow", "hforbid", "vallow", "vforbid"):
            if len(parts) != 3:
                raise SftParseError(f"expected '{kw} <a> <b>'", lineno)
            pending.append((kw[0], kw[1:], parts[1], parts[2], lineno))
        else:
            raise SftParseError(f"unknown directive {kw!r}", lineno)
    if name is None:
        raise SftParseError("empty file", None)
    known = set(symbols)
    for rel, verb, ta, tb, lineno in pending:
        a, b = _parse_symbol(ta), _parse_symbol(tb)
        if a not in known or b not in known:
            raise SftParseError(f"pair ({ta}, {tb}) uses an undeclared symbol", lineno)
        allow = verb == "allow"
        prev = overrides[rel].get((a, b))
        if prev is not None and prev != allow:
            raise SftParseError(f"conflicting rules for pair ({ta}, {tb})", lineno)
        overrides[rel][(a, b)] = allow
    if len(symbols) < 2:
        raise SftParseError("an alphabet needs at least two symbols", None)

    def rel_pairs(rel):
        return frozenset(
            (a, b)
            for a in symbols
            for b in symbols
            if overrides[rel].get((a, b), defaults[rel])
        )

    try:
        return SftSpec(name, tuple(symbols), tuple(weights), rel_pairs("h"), rel_pairs("v"))
    except ContractError as exc:
        raise SftParseError(str(exc), None) from None


def _fmt_weight(w) -> str:
    if isinstance(w, float):
        return repr(w)
    return str(w)


def save_sft(spec: SftSpec) -> str:
    """Canonical serialization.

    Each relation is written with whichever default needs fewer explicit
    exceptions (``allow`` on ties); exceptions follow alphabet order.
    """
    for s in spec.symbols:
        if not _TOKEN_RE.match(str(s)):
            raise ContractError(f"symbol {s!r} cannot be written as a single token")
    if not _TOKEN_RE.match(spec.name):
        raise ContractError(f"name {spec.name!r} cannot be written as a single token")
    lines = [f"sft {spec.name}"]
    for s, w in zip(spec.symbols, spec.weights):
        lines.append(f"symbol {s} {_fmt_weight(w)}")
    q = spec.size
    for rel, pairs in (("h", spec.h_pairs), ("v", spec.v_pairs)):
        allow_default = len(pairs) * 2 >= q * q
        lines.append(f"{rel}default {'allow' if allow_default else 'forbid'}")
        verb = "forbid" if allow_default else "allow"
        for a in spec.symbols:
            for b in spec.symbols:
                if ((a, b) in pairs) != allow_default:
                    lines.append(f"{rel}{verb} {a} {b}")
    return "\n".join(lines) + "\n"
