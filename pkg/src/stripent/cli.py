"""Command-line front end: ``stripent <command> [options]``.

Each command writes a data table (CSV or JSON) to ``--out`` or stdout and
a JSON manifest with inputs, seed, versions and wall time beside it
(``<out>.manifest.json``, or stderr when writing to stdout).  Errors print
one line ``error code=<n> kind=<type> msg=<text>`` to stderr and exit with
2 (contract), 3 (resource cap) or 4 (selftest failure).  A table cut short
by a resource cap is still written, then reported with exit status 3.
"""

from __future__ import annotations

import argparse
import json
import math
import platform
import sys
import time
from fractions import Fraction
from pathlib import Path

import networkx
import numpy as np
import scipy
from scipy import stats

from . import __version__
from . import counterexample_y, entropy_lab, parry_chain, percolation, rect_gibbs, sft_model, spectral, strip_transfer
from .errors import ContractError, ResourceError, StripentError

SCHEMA_VERSION = 1
DEFAULT_SEED = 20240607


class CommandResult:
    def __init__(self, columns, rows, summary=None, ok=True):
        self.columns = list(columns)
        self.rows = [list(r) for r in rows]
        self.summary = summary or {}
        self.ok = ok


def _num(x):
    if isinstance(x, Fraction):
        return str(x)
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _csv_cell(x) -> str:
    x = _num(x)
    if isinstance(x, float):
        return repr(x)
    s = str(x)
    return f'"{s}"' if "," in s else s


def to_csv(res: CommandResult) -> str:
    lines = [",".join(res.columns)]
    lines += [",".join(_csv_cell(v) for v in row) for row in res.rows]
    return "\n".join(lines) + "\n"


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, spectral.Interval):
        return list(x.as_tuple())
    x = _num(x)
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return x


def to_json(res: CommandResult, command: str) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "columns": res.columns,
        "rows": _jsonable(res.rows),
        "summary": _jsonable(res.summary),
    }
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# spec resolution


def resolve_spec(name: str) -> sft_model.SftSpec:
    """Builtin ``hardsquare``, ``fullQ`` or ``y:K``, else a path to an sft file."""
    if name == "hardsquare":
        return sft_model.hard_square()
    if name.startswith("full") and name[4:].isdigit():
        return sft_model.full_shift(int(name[4:]))
    if name.startswith("y:") and name[2:].isdigit():
        return counterexample_y.build_y(int(name[2:]))
    path = Path(name)
    if not path.is_file():
        raise ContractError(f"unknown spec {name!r} (not a builtin and not a file)")
    return sft_model.load_sft(path.read_text())


def _iv(x: spectral.Interval) -> list:
    lo, hi = x.as_tuple()
    return [lo, hi]


# ---------------------------------------------------------------------------
# commands


def cmd_entropy(a) -> CommandResult:
    spec = resolve_spec(a.spec)
    table = entropy_lab.entropy_sequence(spec, a.n_max, a.tol)
    rows = []
    for r in table.rows:
        d = [float(r.delta.mid), *_iv(r.delta)] if r.delta is not None else ["", "", ""]
        rows.append([r.n, float(r.h.mid), *_iv(r.h), float(r.h.mid) / r.n, *d])
    summary = {"spec": spec.name, "failure": table.failure}
    if len(table.deltas()) >= 4:
        ex = entropy_lab.extrapolate(table)
        summary["extrapolation"] = {
            "h_est": ex.h_est,
            "ratio": ex.ratio,
            "tail_bound": ex.tail_bound,
            "reliable": ex.reliable,
            "constant": ex.constant,
        }
    cols = ["n", "h_n", "lo", "hi", "h_n_over_n", "delta_n", "delta_lo", "delta_hi"]
    return CommandResult(cols, rows, summary, table.failure is None)


def cmd_trace_bound(a) -> CommandResult:
    spec = resolve_spec(a.spec)
    rows = []
    ok = True
    for n in range(1, a.n_max + 1):
        tm = strip_transfer.build_transfer(spec, n)
        k = spectral.trace_power_schedule(n, tm.dim)
        sand = spectral.trace_power_bound(tm.matrix, k)
        lam = spectral.perron_power(tm.matrix, tol=1e-12).enclosure
        good = sand.intersects(lam)
        ok &= good
        rows.append([n, tm.dim, k, *_iv(sand), *_iv(lam), good])
    cols = ["n", "dim", "k", "sandwich_lo", "sandwich_hi", "lambda_lo", "lambda_hi", "ok"]
    return CommandResult(cols, rows, {"spec": spec.name}, ok)


def cmd_parry(a) -> CommandResult:
    spec = resolve_spec(a.spec)
    tab = parry_chain.marginal_decay_table(spec, a.n_max)
    rows = []
    for r in tab["rows"]:
        rows.append([r["n"], r["i"], "bottom", r["bottom"]])
        rows.append([r["n"], r["i"], "top", r["top"]])
    uniform = []
    for n in range(1, min(a.n_max, 4) + 1):
        ch = parry_chain.parry(strip_transfer.build_transfer(spec, n))
        for w in range(1, 4):
            try:
                dev = parry_chain.verify_uniform_conditional(ch, w)
            except StripentError as exc:
                uniform.append({"n": n, "w": w, "skipped": str(exc)})
                continue
            uniform.append({"n": n, "w": w, "deviation": dev})
    ok = all(u.get("deviation", 0) == 0 for u in uniform)
    summary = {"spec": spec.name, "fits": tab["fits"], "uniform_conditional": uniform}
    return CommandResult(["n", "i", "alignment", "marginal_diff"], rows, summary, ok)


def cmd_rowent(a) -> CommandResult:
    spec = resolve_spec(a.spec)
    rows = []
    ok = True
    for n in range(3, a.n_max + 1):
        ch = parry_chain.parry(strip_transfer.build_transfer(spec, n))
        j = max(3, n // 2 + 1)
        g = parry_chain.gibbsindep_test(ch, j, 2, a.m)
        ok &= g["intersect"]
        rows.append([n, j, 2, a.m, *_iv(g["depth1"]), *_iv(g["deep"])])
    middle = []
    if a.n_max >= 4:
        for r in entropy_lab.middle_row_experiment(a.n_max, a.m, spec, range(2, a.n_max + 1, 2)):
            middle.append({"n": r["n"], "line4": r["line4"], "delta": r["delta"], "diff": r["diff"], "ok": r["ok"]})
    cols = ["n", "j", "depth", "m", "lo1", "hi1", "lo2", "hi2"]
    return CommandResult(cols, rows, {"spec": spec.name, "middle_row": middle}, ok)


def cmd_gibbs(a) -> CommandResult:
    rows = []
    ok = True
    for w in range(1, a.size + 1):
        for h in range(1, a.size + 1):
            R = rect_gibbs.Rect(0, w - 1, 0, h - 1)
            for site in R.sites:
                for r in rect_gibbs.disagreement_sandwich(R, site):
                    ok &= r["ok"]
                    rows.append([r["rect"], f"({site[0]};{site[1]})", r["pair"], r["p_minus"], r["p_plus"], r["diff"], r["perc_bound"], r["ok"]])
    dom = rect_gibbs.dominance_exhaustive()
    ok &= all(d["failures"] == 0 for d in dom)
    cols = ["rect", "site", "pair", "p_minus", "p_plus", "diff", "perc_bound", "ok"]
    return CommandResult(cols, rows, {"dominance": dom}, ok)


def _parse_labels(text: str) -> tuple:
    parts = text.split(",")
    if len(parts) != 4:
        raise ContractError("labels must be four comma-separated values (up,down,left,right)")
    return tuple(parts)


def cmd_cftp(a) -> CommandResult:
    R = rect_gibbs.Rect(0, a.width - 1, 0, a.height - 1)
    labels = _parse_labels(a.labels)
    exact = rect_gibbs.exact_rect_measure(R, labels)
    samples = rect_gibbs.cftp_samples(R, labels, a.seed, a.samples)
    vals, counts = np.unique(samples, return_counts=True)
    observed = dict(zip(vals.tolist(), counts.tolist()))
    rows = []
    obs, exp = [], []
    for x in exact.fillings:
        e = float(exact.atoms[x]) * a.samples
        o = observed.get(x, 0)
        obs.append(o)
        exp.append(e)
        rows.append([x, o, e])
    outside = sum(c for v, c in observed.items() if v not in exact.atoms)
    if len(exp) > 1:
        chi = stats.chisquare(obs, exp)
        p = float(chi.pvalue)
        stat = float(chi.statistic)
    else:
        p, stat = 1.0, 0.0
    summary = {"rect": str(R), "labels": labels, "chi2": stat, "p_value": p, "outside_support": outside}
    return CommandResult(["filling", "observed", "expected"], rows, summary, outside == 0 and p > 0.01)


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",") if t]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.split(",") if t]


def cmd_perc(a) -> CommandResult:
    rows = []
    fits = {}
    for p in _floats(a.p):
        ests = []
        for n in _ints(a.n):
            e = percolation.perc_mc(p, n, a.trials, a.seed)
            ests.append(e)
            lo, hi = e.ci95.as_tuple()
            bound = percolation.small_p_bound(p, n) if p < 0.25 else ""
            rows.append([p, n, a.trials, e.hits, e.estimate, lo, hi, bound])
        fits[str(p)] = percolation.decay_fit(ests)
    cols = ["p", "n", "trials", "hits", "estimate", "lo", "hi", "small_p_bound"]
    return CommandResult(cols, rows, {"decay_fit": fits})


def cmd_counterexample(a) -> CommandResult:
    yt = counterexample_y.y_entropy_table(a.k, a.n_max)
    rows = [
        [c["n"], c["h_lo"], c["h_hi"], c["bound_lo"], c["bound_hi"], c["applies"], "ok" if c["ok"] else "FAIL"]
        for c in yt.checks
    ]
    osc = counterexample_y.oscillation_from_table(yt.table, a.k)
    summary = {"k": a.k, "oscillation": {key: v for key, v in osc.items() if key != "deltas"}, "failure": yt.table.failure}
    cols = ["n", "h_lo", "h_hi", "bound_lo", "bound_hi", "applies", "bound_check"]
    return CommandResult(cols, rows, summary, yt.all_ok)


# ---------------------------------------------------------------------------
# selftest


def _check_columns():
    st = strip_transfer
    for n in range(1, 21):
        a, b = 1, 1
        for _ in range(n):
            a, b = b, a + b
        if len(st.enumerate_columns(sft_model.hard_square(), n)) != b:
            return f"n={n}"


def _check_transfer_counts():
    spec = sft_model.hard_square()
    for n in range(1, 5):
        tm = strip_transfer.build_transfer(spec, n)
        for m in range(1, 5):
            got = strip_transfer.weighted_count(spec, n, m, tm)
            want = sft_model.count_locally_admissible(spec, m, n)
            if got != want:
                return f"n={n} m={m}: {got} != {want}"


def _check_closed_forms():
    spec = sft_model.hard_square()
    for n, exact in ((1, math.log((1 + math.sqrt(5)) / 2)), (2, math.log(1 + math.sqrt(2)))):
        h = spectral.perron_power(strip_transfer.build_transfer(spec, n).matrix).enclosure.log()
        if not h.contains(exact, 1e-10):
            return f"h_{n}"


def _check_recursive():
    for n in range(1, 9):
        a = strip_transfer.build_transfer_recursive_hardsquare(n).matrix
        b = strip_transfer.build_transfer(sft_model.hard_square(), n).matrix
        if (a != b).nnz:
            return f"n={n}"


def _check_trace_sandwich():
    spec = sft_model.hard_square()
    for n in range(1, 7):
        tm = strip_transfer.build_transfer(spec, n)
        lam = spectral.perron_power(tm.matrix).enclosure
        for k in (2, 8, 64):
            if not spectral.trace_power_bound(tm.matrix, k).intersects(lam):
                return f"n={n} k={k}"


def _check_uniform_conditional():
    spec = sft_model.hard_square()
    for n in (1, 2, 3):
        ch = parry_chain.parry(strip_transfer.build_transfer(spec, n))
        for w in (1, 2):
            dev = parry_chain.verify_uniform_conditional(ch, w)
            if dev != 0:
                return f"n={n} w={w}: {dev}"


def _check_dominance():
    for d in rect_gibbs.dominance_exhaustive(((1, 1), (1, 2), (2, 2))):
        if d["failures"]:
            return d["rect"]
    mu, nu = rect_gibbs.incomparable_point_masses()
    res = rect_gibbs.dominance_check(mu, nu)
    if res.dominated or not res.mu_upset > res.nu_upset:
        return "incomparable pair accepted"


def _check_sandwich():
    for R in (rect_gibbs.Rect(0, 1, 0, 1), rect_gibbs.Rect(-1, 1, -1, 1)):
        for site in R.sites:
            for r in rect_gibbs.disagreement_sandwich(R, site):
                if not r["ok"]:
                    return f"{R} {site} {r['pair']}"


def _check_percolation():
    v = percolation.perc_exact(Fraction(1, 2), percolation.box(1), (0, 0), percolation.exterior_boundary(percolation.box(1)))
    if v != Fraction(15, 32):
        return str(v)


def _check_collapse():
    for k in (2, 3):
        full, col = counterexample_y.build_y_uncollapsed(k), counterexample_y.build_y(k)
        for w in range(1, 4):
            for h in range(1, 3):
                if sft_model.count_locally_admissible(full, w, h) != strip_transfer.weighted_count(col, h, w):
                    return f"k={k} {w}x{h}"


def _check_loops():
    found = {s: c for s, c in counterexample_y.loop_search(4).items() if c}
    if found:
        return str(found)


def _check_dbar():
    f = entropy_lab.dbar_entropy_bound
    if abs(f(0.0, 5)) > 1e-12 or abs(f(0.5, 2) - 1.5 * math.log(2)) > 1e-12 or abs(f(1.0, 2) - math.log(2)) > 1e-12:
        return "closed form mismatch"


SELFTEST_CHECKS = (
    ("column-count-fibonacci", _check_columns),
    ("transfer-count-oracle", _check_transfer_counts),
    ("closed-form-h1-h2", _check_closed_forms),
    ("recursive-builder", _check_recursive),
    ("trace-power-sandwich", _check_trace_sandwich),
    ("uniform-conditional", _check_uniform_conditional),
    ("checkerboard-dominance", _check_dominance),
    ("disagreement-sandwich", _check_sandwich),
    ("percolation-exact", _check_percolation),
    ("collapse-exactness", _check_collapse),
    ("no-closed-grid-loops", _check_loops),
    ("dbar-entropy-formula", _check_dbar),
)


def selftest(out=None) -> list[tuple[str, str | None]]:
    """Run the exact-oracle checks; returns ``(name, failure or None)`` pairs."""
    out = out or sys.stdout
    results = []
    for name, fn in SELFTEST_CHECKS:
        t = time.perf_counter()
        try:
            why = fn()
        except Exception as exc:  # a crash is a failure of that invariant
            why = f"{type(exc).__name__}: {exc}"
        results.append((name, why))
        status = "pass" if why is None else f"FAIL ({why})"
        print(f"{name}: {status} [{time.perf_counter() - t:.2f}s]", file=out)
    return results


# ---------------------------------------------------------------------------
# driver

COMMANDS = {
    "entropy": cmd_entropy,
    "trace-bound": cmd_trace_bound,
    "parry": cmd_parry,
    "rowent": cmd_rowent,
    "gibbs": cmd_gibbs,
    "cftp": cmd_cftp,
    "perc": cmd_perc,
    "counterexample": cmd_counterexample,
}
RANDOMIZED = {"cftp", "perc"}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stripent", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"stripent {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, spec=True):
        if spec:
            sp.add_argument("--spec", default="hardsquare", help="hardsquare, fullQ, y:K or a path to an sft file")
        sp.add_argument("--out", help="data file path (default: stdout)")
        sp.add_argument("--format", choices=("csv", "json"), default="csv")
        return sp

    s = common(sub.add_parser("entropy", help="strip entropies h_n with differences and extrapolation"))
    s.add_argument("--n-max", type=int, default=12)
    s.add_argument("--tol", type=float, default=entropy_lab.TABLE_TOL)

    s = common(sub.add_parser("trace-bound", help="trace-power sandwich per height"))
    s.add_argument("--n-max", type=int, default=8)

    s = common(sub.add_parser("parry", help="single-site marginal decay and exact uniform-conditional check"))
    s.add_argument("--n-max", type=int, default=10)

    s = common(sub.add_parser("rowent", help="row conditional entropy experiments"))
    s.add_argument("--n-max", type=int, default=6)
    s.add_argument("--m", type=int, default=8, help="block length for entropy bounds")

    s = common(sub.add_parser("gibbs", help="disagreement sandwich grid and exhaustive dominance suite"), spec=False)
    s.add_argument("--size", type=int, default=3, help="largest rectangle side")

    s = common(sub.add_parser("cftp", help="perfect samples against the exact law"), spec=False)
    s.add_argument("--width", type=int, default=2)
    s.add_argument("--height", type=int, default=2)
    s.add_argument("--labels", default="zero,zero,zero,zero", help="up,down,left,right from zero/plus/minus")
    s.add_argument("--samples", type=int, default=100000)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)

    s = common(sub.add_parser("perc", help="Monte Carlo site percolation sweep"), spec=False)
    s.add_argument("--p", default="0.5", help="comma-separated probabilities")
    s.add_argument("--n", default="1", help="comma-separated box radii")
    s.add_argument("--trials", type=int, default=100000)
    s.add_argument("--seed", type=int, default=DEFAULT_SEED)

    s = common(sub.add_parser("counterexample", help="strip entropies of the oscillating shift"), spec=False)
    s.add_argument("--k", type=int, default=counterexample_y.K_OSC + 1)
    s.add_argument("--n-max", type=int, default=5)

    sub.add_parser("selftest", help="exact-oracle invariant suite")
    return p


def _manifest(args, wall: float, ok: bool) -> dict:
    inputs = {k: v for k, v in vars(args).items() if k not in ("out", "format")}
    return {
        "schema_version": SCHEMA_VERSION,
        "command": args.command,
        "inputs": inputs,
        "seed": getattr(args, "seed", None),
        "ok": ok,
        "versions": {
            "stripent": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "networkx": networkx.__version__,
        },
        "wall_time_s": wall,
        "finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }


def run(args) -> int:
    if args.command == "selftest":
        results = selftest()
        failed = [n for n, why in results if why is not None]
        print("selftest: " + ("pass" if not failed else "FAIL " + " ".join(failed)))
        return 4 if failed else 0
    if args.command in RANDOMIZED:
        print(f"seed={args.seed}", file=sys.stderr)
    t = time.perf_counter()
    res = COMMANDS[args.command](args)
    wall = time.perf_counter() - t
    data = to_json(res, args.command) if args.format == "json" else to_csv(res)
    manifest = json.dumps(_jsonable(_manifest(args, wall, res.ok)), indent=1, sort_keys=True) + "\n"
    if args.out:
        out = Path(args.out)
        out.write_text(data)
        Path(str(out) + ".manifest.json").write_text(manifest)
    else:
        sys.stdout.write(data)
        sys.stderr.write(manifest)
    failure = res.summary.get("failure")
    if failure:
        # the partial table is kept, but a cap was hit
        print(f"error code={ResourceError.code} kind=ResourceError msg=partial table, {failure}", file=sys.stderr)
        return ResourceError.code
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except StripentError as exc:
        print(f"error code={exc.code} kind={type(exc).__name__} msg={exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
