"""Tables of strip entropies h_n, their differences, and extrapolation.

All entropies are in nats.  ``h_n = ln lambda(B_n)`` is carried as a
certified interval; differences ``Delta_n = h_{n+1} - h_n`` are formed by
outward-rounded interval subtraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, ConvergenceError, ResourceError
from .parry_chain import conditional_row_entropy, parry
from .sft_model import SftSpec, hard_square
from .spectral import Interval, perron_power
from .strip_transfer import build_transfer

# Perron iteration tolerance used for tables; about 10x the long-double floor.
TABLE_TOL = 1e-17


@dataclass
class EntropyRow:
    n: int
    h: Interval
    delta: Interval | None = None

    @property
    def h_over_n(self) -> Interval:
        return Interval(self.h.lo / self.n, self.h.hi / self.n).widen(0)


@dataclass
class EntropyTable:
    spec_name: str
    rows: list[EntropyRow] = field(default_factory=list)
    failure: str | None = None

    def h(self, n: int) -> Interval:
        return self.rows[n - 1].h

    def deltas(self) -> list[Interval]:
        return [r.delta for r in self.rows if r.delta is not None]

    @property
    def n_max(self) -> int:
        return len(self.rows)

    def to_csv(self) -> str:
        out = ["n,h_n,lo,hi,h_n_over_n,delta_n,delta_lo,delta_hi"]
        for r in self.rows:
            lo, hi = r.h.as_tuple()
            d = r.delta
            dcols = f"{float(d.mid)!r},{d.as_tuple()[0]!r},{d.as_tuple()[1]!r}" if d else ",,"
            out.append(f"{r.n},{float(r.h.mid)!r},{lo!r},{hi!r},{float(r.h.mid) / r.n!r},{dcols}")
        if self.failure:
            out.append(f"# failed: {self.failure}")
        return "\n".join(out) + "\n"


@dataclass
class ExtrapolationResult:
    h_est: float
    rate: float | None
    fit_residual: float
    n_used: range
    tail_bound: float
    reliable: bool
    constant: bool = False

    @property
    def ratio(self) -> float | None:
        return None if self.rate is None else math.exp(self.rate)


def strip_entropy(spec: SftSpec, n: int, tol: float = 1e-12) -> Interval:
    """Certified enclosure of ``h_n = ln lambda(B_n)`` of width at most about ``tol``."""
    if n < 1:
        raise ContractError("n must be at least 1")
    res = perron_power(build_transfer(spec, n), tol=tol)
    return res.enclosure.log()


def entropy_sequence(spec: SftSpec, n_max: int, tol: float = TABLE_TOL) -> EntropyTable:
    """``h_n`` for ``n = 1..n_max`` with differences.

    If a height hits a resource cap or fails to converge, the table keeps
    the rows computed so far and records the reason in ``failure``.
    """
    if n_max < 2:
        raise ContractError("n_max must be at least 2")
    table = EntropyTable(spec.name)
    for n in range(1, n_max + 1):
        try:
            h = strip_entropy(spec, n, tol)
        except (ResourceError, ConvergenceError) as exc:
            table.failure = f"n={n}: {exc}"
            break
        if table.rows:
            table.rows[-1].delta = h - table.rows[-1].h
        table.rows.append(EntropyRow(n, h))
    return table


def extrapolate(table: EntropyTable, skip: int = 2, noise_factor: float = 8.0) -> ExtrapolationResult:
    """Geometric extrapolation of ``Delta_n`` toward its limit.

    Fits ``ln|Delta_{n+1} - Delta_n|`` against ``n`` by least squares,
    skipping the first ``skip`` second differences and any that are not
    at least ``noise_factor`` times their own enclosure width.  The tail is
    summed as a geometric series with the sign pattern of the last two
    second differences.  When every second difference is at the noise
    floor, the differences are constant and ``rate`` is ``None``.
    """
    deltas = table.deltas()
    if len(deltas) < 4:
        raise ContractError("need at least 4 differences")
    second = [deltas[i + 1] - deltas[i] for i in range(len(deltas) - 1)]
    last = float(deltas[-1].mid)
    above = [abs(float(s.mid)) > noise_factor * float(s.width) for s in second]
    if not any(above):
        return ExtrapolationResult(last, None, 0.0, range(1, len(deltas) + 1), float(deltas[-1].width), True, True)
    # second[i] is Delta_{i+2} - Delta_{i+1}; index it by n = i + 1
    idx = [i for i in range(skip, len(second)) if above[i]]
    if len(idx) < 2:
        idx = [i for i in range(len(second)) if above[i]]
    if len(idx) < 2:
        return ExtrapolationResult(last, 0.0, float("nan"), range(1, 1), math.inf, False)
    x = np.array([i + 1 for i in idx], dtype=float)
    y = np.log([abs(float(second[i].mid)) for i in idx])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    rho = math.exp(slope)
    n_used = range(int(x[0]), int(x[-1]) + 1)
    if slope >= 0 or rho >= 1:
        return ExtrapolationResult(last, float(slope), resid, n_used, math.inf, False)
    e_last = float(second[idx[-1]].mid)
    # the last fitted second difference may precede the table end; project forward
    steps_ahead = len(second) - 1 - idx[-1]
    sign = 1.0
    if len(idx) >= 2 and idx[-1] - idx[-2] == 1:
        sign = math.copysign(1.0, float(second[idx[-1]].mid) * float(second[idx[-2]].mid))
    rho_s = sign * rho
    e_next = e_last * rho_s ** (steps_ahead + 1)
    tail = e_next / (1 - rho_s)
    tail_bound = abs(e_last) * rho ** (steps_ahead + 1) / (1 - rho)
    return ExtrapolationResult(last + tail, float(slope), resid, n_used, tail_bound, True)


def dbar_entropy_bound(eps: float, alphabet_size: int) -> float:
    """``eps ln|A| - eps ln eps - (1 - eps) ln(1 - eps)`` with ``0 ln 0 = 0``."""
    if not 0.0 <= eps <= 1.0:
        raise ContractError("eps must lie in [0, 1]")
    if alphabet_size < 2:
        raise ContractError("alphabet size must be at least 2")

    def xlogx(t):
        return 0.0 if t == 0.0 else t * math.log(t)

    return eps * math.log(alphabet_size) - xlogx(eps) - xlogx(1.0 - eps)


def middle_row_experiment(n_max: int, m: int = 8, spec: SftSpec | None = None, n_values=None) -> list[dict]:
    """Middle-row conditional entropy of the (n+1)-strip against ``Delta_n``.

    For each ``n`` computes an enclosure of
    ``h(R_{floor(n/2)+1} | R_{floor(n/2)})`` under the maximal-entropy
    measure of the strip of height ``n + 1`` and compares it with the
    spectral enclosure of ``Delta_n``.  ``ok`` records whether the two
    agree within their combined widths.
    """
    if n_max < 4:
        raise ContractError("n_max must be at least 4")
    spec = spec or hard_square()
    ns = list(n_values) if n_values is not None else list(range(2, n_max + 1))
    hcache: dict[int, Interval] = {}

    def h(n):
        if n not in hcache:
            hcache[n] = strip_entropy(spec, n, TABLE_TOL)
        return hcache[n]

    out = []
    for n in ns:
        k = n // 2
        chain = parry(build_transfer(spec, n + 1))
        line4 = conditional_row_entropy(chain, [k + 1], [k], m)
        delta = h(n + 1) - h(n)
        diff = abs(float(line4.mid) - float(delta.mid))
        allowed = float(line4.width) + float(delta.width)
        out.append(
            {
                "n": n,
                "m": m,
                "line4": line4,
                "delta": delta,
                "diff": diff,
                "allowed": allowed,
                "ok": diff <= allowed,
            }
        )
    for a, b in zip(out, out[1:]):
        b["shrinks"] = b["diff"] < a["diff"]
    return out
