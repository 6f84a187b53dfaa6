"""Command-line entry point: ``quadenergy <command> ...``.

Every command accepts ``--config file.json``; keys are the long option names
(dashes or underscores) and explicit flags override them. The worker count
can also come from the ``QUADENERGY_WORKERS`` environment variable.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
from pathlib import Path

import numpy as np

from quadenergy import constructions as cons
from quadenergy import harness
from quadenergy.errors import QuadEnergyError, RankDeficient
from quadenergy.incidence import LineFamily, PointSet2D, count_incidences
from quadenergy.measure import (
    DiscreteMeasure,
    ad_regular_check,
    build_cantor,
    cantor_at_scale,
    frostman_scan,
    uniform_grid,
)
from quadenergy.quadpoly import classify, critical_set, jacobian_polynomials, parse_poly

# defaults applied after config and flags are merged
DEFAULTS = {
    "kappa": 0.05,
    "kernel": "bump",
    "seed": 0,
    "workers": 1,
    "refine": 16,
    "method": "grid",
    "repeat": 3,
}


def real(text) -> float:
    """Float, also accepting ``2^-k`` for dyadic scales."""
    t = str(text).strip()
    if t.startswith("2^"):
        return 2.0 ** int(t[2:])
    return float(t)


def _option_types(parser: argparse.ArgumentParser) -> dict:
    """Converter for every option dest across all subcommands."""
    types = {}
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for sub in action.choices.values():
                types.update(_option_types(sub))
        elif action.type is not None:
            types[action.dest] = action.type
    return types


def _merge(args: argparse.Namespace, types: dict | None = None) -> argparse.Namespace:
    """Fill unset flags from ``--config`` and then from DEFAULTS.

    Config values are strings or JSON numbers; each goes through the same
    converter as its flag, so ``"2^-6"`` works in both places.
    """
    types = types or {}
    merged = {}
    if getattr(args, "config", None):
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise QuadEnergyError(f"cannot read config {args.config}: {exc}") from exc
        for k, v in raw.items():
            key = k.replace("-", "_")
            conv = types.get(key)
            merged[key] = conv(v) if conv is not None and v is not None else v
    for key, value in vars(args).items():
        if value is not None or key not in merged:
            merged[key] = value
    for key, value in DEFAULTS.items():
        if merged.get(key) is None:
            merged[key] = value
    return argparse.Namespace(**merged)


def _require(args, *names):
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise QuadEnergyError(f"missing required option(s): {flags}")


def _write(text: str, path) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _measure_spec(value) -> dict:
    """``cantor:ALPHA``, ``file:PATH``, a JSON object, or an already-parsed dict."""
    if isinstance(value, dict):
        return value
    text = str(value).strip()
    if text.startswith("{"):
        return json.loads(text)
    if text.startswith("cantor:"):
        return {"type": "cantor", "alpha": float(text.split(":", 1)[1])}
    if text.startswith("file:"):
        return {"type": "file", "path": text.split(":", 1)[1]}
    if Path(text).exists():
        return {"type": "file", "path": text}
    raise QuadEnergyError(f"cannot interpret measure {value!r}")


def _emit(report, args) -> None:
    harness.emit_report(report, None, args.plot, args.summary)
    _write(harness.report_csv(report), args.out)
    fit = report.fit
    slope = "n/a" if fit is None else f"{fit.slope:.4f} (r^2 {fit.r_squared:.4f})"
    line = f"verdict {report.verdict}: slope {slope}, claimed {report.claimed_exponent:.4f}"
    if report.mode == "upper" and fit is not None:
        lo, hi = report.eps_band
        line += f", eps_hat {report.eps_hat:.4f} in [{lo:.4f}, {hi:.4f}]"
    print(line, file=sys.stderr)


# -- commands ---------------------------------------------------------------------

def cmd_classify(args) -> int:
    _require(args, "poly")
    f = parse_poly(args.poly)
    out = {"poly": f.to_dict(), "text": str(f), "classification": classify(f).value}
    try:
        K = critical_set(f)
        out["critical_set"] = K.kind.value
        if K.point is not None:
            out["critical_point"] = K.point.tolist()
        if K.direction is not None:
            out["critical_direction"] = K.direction.tolist()
    except RankDeficient as exc:
        out["critical_set"] = f"RankDeficient: {exc}"
    J = jacobian_polynomials(f)
    out["jacobians"] = {name: J._asdict()[name]._asdict() for name in J._fields}
    print(json.dumps(out, indent=2))
    return 0


def cmd_measure_build(args) -> int:
    kind = args.kind or "cantor"
    if kind == "uniform":
        _require(args, "delta")
        mu = uniform_grid(args.delta)
    elif args.depth is not None:
        _require(args, "alpha")
        mu = build_cantor(args.alpha, args.depth)
    else:
        _require(args, "alpha", "delta")
        mu = cantor_at_scale(args.alpha, args.delta)
    _write(mu.to_csv(), args.out)
    print(f"{mu.size} atoms at pitch {mu.delta!r}", file=sys.stderr)
    return 0


def cmd_measure_check(args) -> int:
    _require(args, "input")
    mu = DiscreteMeasure.from_csv(Path(args.input).read_text())
    alpha = args.alpha if args.alpha is not None else mu.alpha_hint
    if alpha is None:
        raise QuadEnergyError("give --alpha; the measure has no alpha hint")
    w = frostman_scan(mu, alpha)
    lower, upper = ad_regular_check(mu, alpha)
    print(json.dumps({
        "atoms": mu.size, "delta": mu.delta, "alpha": alpha,
        "frostman_constant": w.ratio,
        "worst_window": {"anchor": w.anchor, "radius": w.radius, "mass": w.mass},
        "ad_lower": lower, "ad_upper": upper,
    }, indent=2))
    return 0


def cmd_energy_scan(args) -> int:
    _require(args, "poly", "measure", "delta_min", "delta_max")
    cfg = harness.ScanConfig(
        poly=parse_poly(args.poly) if isinstance(args.poly, str) else parse_poly(json.dumps(args.poly)),
        measure=_measure_spec(args.measure),
        ladder=harness.ladder_from_range(args.delta_max, args.delta_min),
        kappa=args.kappa, kernel=args.kernel, seed=args.seed, workers=args.workers,
        record_runtime=bool(args.runtime), refine=args.refine,
    )
    _emit(harness.run_scan(cfg), args)
    return 0


def _read_rows(path) -> list[list[str]]:
    text = Path(path).read_text()
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
    if rows and not _is_number(rows[0][0]):
        rows = rows[1:]
    return rows


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False


def load_points(path) -> PointSet2D:
    """CSV rows ``x,y[,multiplicity]``; an optional header line is skipped."""
    rows = _read_rows(path)
    pts = np.array([[float(r[0]), float(r[1])] for r in rows]).reshape(-1, 2)
    mult = np.array([int(r[2]) if len(r) > 2 else 1 for r in rows], dtype=np.int64)
    return PointSet2D(pts, mult)


def load_lines(path) -> LineFamily:
    """CSV rows ``theta,a`` or, with a ``m,k`` header, slope-intercept pairs ``X = m Y + k``."""
    text = Path(path).read_text()
    first = text.lstrip().splitlines()[0] if text.strip() else ""
    rows = _read_rows(path)
    data = np.array([[float(r[0]), float(r[1])] for r in rows]).reshape(-1, 2)
    if first.replace(" ", "").lower().startswith("m,k"):
        return LineFamily.from_slopes(data[:, 0], data[:, 1])
    return LineFamily(data[:, 0], data[:, 1], np.ones(data.shape[0], dtype=np.int64))


def cmd_incidence_count(args) -> int:
    _require(args, "points", "lines", "delta")
    P, L = load_points(args.points), load_lines(args.lines)
    n = count_incidences(P, L, args.delta, method=args.method)
    print(n)
    return 0


def cmd_incidence_bench(args) -> int:
    _require(args, "points", "lines", "delta")
    P, L = load_points(args.points), load_lines(args.lines)
    lines = ["method,points,lines,delta,count,seconds"]
    for method in ("brute", "grid"):
        best, count = float("inf"), None
        for _ in range(max(1, int(args.repeat))):
            t0 = time.perf_counter()
            count = count_incidences(P, L, args.delta, method=method)
            best = min(best, time.perf_counter() - t0)
        lines.append(f"{method},{P.total},{int(L.multiplicity.sum())},{args.delta!r},{count},{best!r}")
    _write("\n".join(lines) + "\n", args.out)
    return 0


def cmd_construct(args) -> int:
    _require(args, "kind", "delta")
    kind = cons.ConstructionKind(args.kind)
    alpha = 0.5 if kind is cons.ConstructionKind.UNBOUNDED_SUPPORT else (args.alpha or 0.25)
    spec = cons.ConstructionSpec(kind, alpha, args.delta)
    mu = cons.build(spec, strict=bool(args.strict))
    _write(mu.to_csv(), args.out)
    print(f"{kind.value}: {mu.size} atoms at pitch {mu.delta!r}", file=sys.stderr)
    return 0


def cmd_verify(args) -> int:
    _require(args, "kind", "ladder")
    report = cons.verify_lower_bound(
        args.kind, harness.parse_ladder(args.ladder),
        f=None if args.poly is None else parse_poly(args.poly),
        alpha=args.alpha or 0.25, kappa=args.kappa, strict=bool(args.strict),
        workers=args.workers, record_runtime=bool(args.runtime),
        refine=None if args.refine_explicit is None else args.refine_explicit,
    )
    _emit(report, args)
    return 0


def cmd_fit(args) -> int:
    _require(args, "input")
    with open(args.input, newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        column = args.column or "energy"
        pairs = [(float(r["delta"]), float(r[column])) for r in reader]
    fit = harness.fit_exponent(pairs)
    print(json.dumps({"column": column, "n": len(pairs), "slope": fit.slope,
                      "intercept": fit.intercept, "r_squared": fit.r_squared,
                      "stderr": fit.stderr}, indent=2))
    return 0


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="quadenergy", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("classify", parents=[common], help="classify a quadratic polynomial")
    c.add_argument("--poly", help="preset name or JSON {a..j}")
    c.set_defaults(func=cmd_classify)

    m = sub.add_parser("measure", help="build or check discrete measures")
    msub = m.add_subparsers(dest="action", required=True)
    mb = msub.add_parser("build", parents=[common], help="write a Cantor or uniform measure CSV")
    mb.add_argument("--kind", choices=["cantor", "uniform"])
    mb.add_argument("--alpha", type=float)
    mb.add_argument("--depth", type=int)
    mb.add_argument("--delta", type=real)
    mb.add_argument("--out")
    mb.set_defaults(func=cmd_measure_build)
    mc = msub.add_parser("check", parents=[common], help="Frostman and AD-regularity constants")
    mc.add_argument("--in", dest="input")
    mc.add_argument("--alpha", type=float)
    mc.set_defaults(func=cmd_measure_check)

    e = sub.add_parser("energy", help="energy scans")
    esub = e.add_subparsers(dest="action", required=True)
    es = esub.add_parser("scan", parents=[common], help="scan a delta ladder and fit the exponent")
    es.add_argument("--poly")
    es.add_argument("--measure", help="cantor:ALPHA, file:PATH or a JSON measure spec")
    es.add_argument("--delta-min", type=real)
    es.add_argument("--delta-max", type=real)
    es.add_argument("--kappa", type=float)
    es.add_argument("--kernel")
    es.add_argument("--seed", type=int)
    es.add_argument("--workers", type=int)
    es.add_argument("--refine", type=int, help="measure pitch is delta/refine")
    es.add_argument("--runtime", action="store_true", default=None, help="fill runtime_ms")
    es.add_argument("--out", help="CSV path (default stdout)")
    es.add_argument("--plot", help="SVG plot path")
    es.add_argument("--summary", help="JSON summary path")
    es.set_defaults(func=cmd_energy_scan)

    i = sub.add_parser("incidence", help="delta-incidence counting")
    isub = i.add_subparsers(dest="action", required=True)
    for name, func in (("count", cmd_incidence_count), ("bench", cmd_incidence_bench)):
        q = isub.add_parser(name, parents=[common])
        q.add_argument("--points", help="CSV x,y[,multiplicity]")
        q.add_argument("--lines", help="CSV theta,a (or with header m,k)")
        q.add_argument("--delta", type=real)
        if name == "count":
            q.add_argument("--method", choices=["grid", "brute"])
        else:
            q.add_argument("--repeat", type=int)
            q.add_argument("--out")
        q.set_defaults(func=func)

    k = sub.add_parser("construct", parents=[common], help="write a lower-bound construction measure")
    k.add_argument("--kind", choices=[c.value for c in cons.ConstructionKind])
    k.add_argument("--delta", type=real)
    k.add_argument("--alpha", type=float)
    k.add_argument("--strict", action="store_true", default=None)
    k.add_argument("--out")
    k.set_defaults(func=cmd_construct)

    v = sub.add_parser("verify", parents=[common], help="probe a construction's lower-bound exponent")
    v.add_argument("--kind", choices=[c.value for c in cons.ConstructionKind])
    v.add_argument("--ladder", help="e.g. 2^-6..2^-12 or 2^-6..2^-12:2")
    v.add_argument("--poly")
    v.add_argument("--alpha", type=float)
    v.add_argument("--kappa", type=float)
    v.add_argument("--workers", type=int)
    v.add_argument("--refine", dest="refine_explicit", type=int)
    v.add_argument("--strict", action="store_true", default=None)
    v.add_argument("--runtime", action="store_true", default=None)
    v.add_argument("--out")
    v.add_argument("--plot")
    v.add_argument("--summary")
    v.set_defaults(func=cmd_verify)

    fz = sub.add_parser("fit", parents=[common], help="fit log2 value against log2 delta from a CSV")
    fz.add_argument("--in", dest="input")
    fz.add_argument("--column")
    fz.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    func = args.func
    try:
        return func(_merge(args, _option_types(parser)))
    except (QuadEnergyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
