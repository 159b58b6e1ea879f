"""Command-line front end.

Every subcommand prints a JSON document (or writes it with ``--json``) of the
form ``{"schema_version", "command", "config", "result", "metadata"}``.  Only
``metadata`` carries timestamps, so identical configs give identical
``config`` and ``result`` blocks.

Exit codes: 0 success, 2 configuration error, 3 internal contradiction,
4 excluded parameter.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .elliptic import NotElliptic, RadiusEscape, arc_trap, epsilon_bounds_hold, rotation_angle, write_xi_csv
from .ends import MarkedComplex, check_bound, count_ends_refined, frontier_components, load_fixture
from .entropy import NoHorseshoeFound, detect_horseshoe, length_growth_rate, write_certificate_mask
from .fixed_points import Classification, InternalError, classify, find_fixed_points, find_saddle
from .homoclinic import (
    ComponentCountOne,
    earliest_transverse,
    find_intersections,
    omega_analysis,
    refinement_check,
)
from .manifold import Branch, GrowthSettings, grow, grow_to_length, seed_branch
from .maps import MapKind, MapSpec

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_CONFIG, EXIT_INTERNAL, EXIT_EXCLUDED = 0, 2, 3, 4
EXCLUDED_MU = 4.0
ADJACENT_PAIRS = [
    (Branch.UNSTABLE_PLUS, Branch.STABLE_PLUS),
    (Branch.UNSTABLE_PLUS, Branch.STABLE_MINUS),
    (Branch.UNSTABLE_MINUS, Branch.STABLE_PLUS),
    (Branch.UNSTABLE_MINUS, Branch.STABLE_MINUS),
]


class ConfigError(ValueError):
    pass


class ExcludedParameter(ValueError):
    pass


# ------------------------------------------------------------------ helpers

def _positive(name):
    def conv(text):
        v = float(text)
        if not v > 0:
            raise argparse.ArgumentTypeError(f"{name} must be strictly positive")
        return v
    return conv


def _build_map(args) -> MapSpec:
    kind = getattr(args, "map", "standard")
    if kind == "standard":
        if args.mu is None:
            raise ConfigError("--mu is required for the standard map")
        if args.mu < 0:
            raise ConfigError("--mu must be non-negative")
        return MapSpec.standard(args.mu)
    if kind == "cat":
        return MapSpec.cat()
    if kind == "hamiltonian":
        return MapSpec.hamiltonian()
    raise ConfigError(f"unknown map {kind}")


def _warn_mu(spec: MapSpec) -> None:
    if spec.kind is not MapKind.STANDARD:
        return
    if spec.mu == EXCLUDED_MU:
        warnings.warn("mu = 4 is the excluded parameter: the elliptic point (0.5, 0) is degenerate", stacklevel=2)
    if spec.mu == 0.0:
        warnings.warn("mu = 0 is a trivial twist: the fixed circle y = 0 is not reported", stacklevel=2)


def _document(command: str, config: dict, result) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "result": result,
        "metadata": {
            "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
            "version": __version__,
        },
    }


def _emit(doc: dict, path) -> None:
    text = json.dumps(doc, indent=2, sort_keys=False) + "\n"
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _config(args, skip=("func", "json")) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _parse_pairs(text: str):
    if text == "all":
        return list(ADJACENT_PAIRS)
    out = []
    for item in text.split(","):
        try:
            a, b = item.split("-")
            pair = (Branch.parse(a), Branch.parse(b))
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"bad branch pair {item!r}") from exc
        if not pair[0].is_unstable or pair[1].is_unstable:
            raise ConfigError(f"pair {item!r} must be unstable-stable")
        out.append(pair)
    return out


def _parse_range(text: str):
    try:
        a, b, step = (float(v) for v in text.split(":"))
    except ValueError as exc:
        raise ConfigError("--mu-range must be a:b:step") from exc
    if step <= 0 or b < a:
        raise ConfigError("--mu-range needs a <= b and step > 0")
    count = int(np.floor((b - a) / step + 1e-9)) + 1
    return [round(a + i * step, 12) for i in range(count)]


def _jobs(requested: int) -> int:
    env = os.environ.get("SADDLESCOPE_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError("SADDLESCOPE_THREADS must be an integer") from exc
        if n < 1:
            raise ConfigError("SADDLESCOPE_THREADS must be positive")
        return n
    return requested


# ----------------------------------------------------------------- commands

def cmd_fixed_points(args) -> dict:
    spec = _build_map(args)
    _warn_mu(spec)
    if spec.kind is MapKind.STANDARD and spec.mu == 0.0:
        records = []
    else:
        records = find_fixed_points(spec, resolution=args.resolution)
    search = {"method": "grid_seed_newton", "seed_resolution": args.resolution,
              "heuristic": spec.kind is not MapKind.STANDARD}
    return {"map": spec.describe(), "search": search, "fixed_points": [r.to_dict() for r in records]}


def _grow_arcs(spec, saddle, branches, length, settings, tmax=None):
    if tmax is not None:
        return {b: grow(seed_branch(spec, saddle, b, settings), tmax) for b in branches}
    return {b: grow_to_length(seed_branch(spec, saddle, b, settings), length) for b in branches}


def cmd_homoclinic(args) -> dict:
    spec = _build_map(args)
    if spec.kind is MapKind.STANDARD and spec.mu == EXCLUDED_MU:
        raise ExcludedParameter("mu = 4 is the excluded parameter for homoclinic analysis")
    _warn_mu(spec)
    pairs = _parse_pairs(args.pairs)
    saddle = find_saddle(spec, (0.0, 0.0))
    if not saddle.classification.is_saddle:
        raise ConfigError(f"(0, 0) is {saddle.classification.value}, not a saddle")
    settings = GrowthSettings(h_max=args.h_max, tube_tol=args.tube_tol)
    branches = sorted({b for p in pairs for b in p}, key=lambda b: list(Branch).index(b))
    arcs = _grow_arcs(spec, saddle, branches, args.length, settings, args.tmax)
    if args.csv_dir:
        out = Path(args.csv_dir)
        out.mkdir(parents=True, exist_ok=True)
        for b, arc in arcs.items():
            arc.write_csv(out / f"{b.short}.csv")
    by_pair = {}
    pair_reports = []
    for bu, bs in pairs:
        recs = find_intersections(arcs[bu], arcs[bs], tube_tol=args.tube_tol, max_classified=args.max_classified)
        by_pair[(bu, bs)] = recs
        report = {
            "pair": f"{bu.short}-{bs.short}",
            "intersections": len(recs),
            "transverse": sum(r.is_transverse for r in recs),
            "records": [r.to_dict() for r in recs if r.verdict is not None],
        }
        if args.refinement_check:
            report["refinement"] = refinement_check(recs, arcs[bu], arcs[bs], args.tube_tol)
        pair_reports.append(report)
    result = {"map": spec.describe(), "saddle": saddle.to_dict(),
              "arcs": {b.short: arc.metadata() for b, arc in arcs.items()}, "pairs": pair_reports}
    if not args.no_omega:
        try:
            (bu, bs), rec = earliest_transverse(by_pair)
        except ValueError:
            result["omega"] = None
        else:
            try:
                om = omega_analysis(spec, rec, arcs[bu], arcs[bs], grid_res=args.grid_res)
                result["omega"] = {"pair": f"{bu.short}-{bs.short}", **om.summary()}
            except ComponentCountOne as exc:
                result["omega"] = {"pair": f"{bu.short}-{bs.short}", "error": str(exc)}
    return result


def _default_seed(spec: MapSpec):
    if spec.kind is MapKind.LINEAR:
        return np.array([[0.1, 0.2], [0.1003, 0.2007]])
    saddle = find_saddle(spec, (0.0, 0.0))
    arc = seed_branch(spec, saddle, Branch.UNSTABLE_PLUS)
    return arc.evaluate(np.linspace(arc.d0, arc.d0 * arc.lam, 9))


def _horseshoe(spec: MapSpec, args):
    saddle = find_saddle(spec, (0.0, 0.0))
    if not saddle.classification.is_saddle:
        raise ConfigError("horseshoe search needs a saddle at (0, 0)")
    arcs = _grow_arcs(spec, saddle, [Branch.UNSTABLE_PLUS, Branch.STABLE_MINUS], args.length, GrowthSettings())
    u, s = arcs[Branch.UNSTABLE_PLUS], arcs[Branch.STABLE_MINUS]
    recs = [r for r in find_intersections(u, s, max_classified=5) if r.is_transverse]
    if not recs:
        raise NoHorseshoeFound("no transverse homoclinic record on the grown arcs")
    rec = min(recs, key=lambda r: sum(r.params))
    return detect_horseshoe(spec, rec, u, s, n_max=args.n_max)


def cmd_entropy(args) -> dict:
    spec = _build_map(args)
    _warn_mu(spec)
    out = {"map": spec.describe()}
    if args.method in ("growth", "both"):
        rep = length_growth_rate(spec, _default_seed(spec), iterates=args.iterates, vertex_cap=args.vertex_cap)
        out["growth"] = rep.to_dict()
    if args.method in ("horseshoe", "both"):
        try:
            rep = _horseshoe(spec, args)
            out["horseshoe"] = rep.to_dict()
            if args.mask:
                write_certificate_mask(rep, args.mask)
        except NoHorseshoeFound as exc:
            out["horseshoe"] = {"method": "HorseshoeShift", "error": str(exc)}
    return out


def cmd_ends(args) -> dict:
    source = args.fixture
    path = Path(source)
    data = json.loads(path.read_text()) if path.exists() else Path(source).stem
    mc: MarkedComplex = load_fixture(data)
    bound = check_bound(mc, args.levels)
    out = {"fixture": str(source), "ends": count_ends_refined(mc, args.levels),
           "frontier_components": frontier_components(mc), "bound": bound}
    if isinstance(data, dict) and "expected_ends" in data:
        out["expected_ends"] = data["expected_ends"]
    return out


def cmd_rotation(args) -> dict:
    spec = _build_map(args)
    _warn_mu(spec)
    q = classify(spec, (0.5, 0.0))
    if q.classification is not Classification.ELLIPTIC:
        raise ConfigError(f"(0.5, 0) is {q.classification.value}, not elliptic")
    alpha, chart = rotation_angle(spec, q, chart_radius=args.chart_radius)
    table = [epsilon_bounds_hold(spec, chart, r) for r in (1e-2, 1e-3, 1e-4) if r < args.chart_radius]
    rep = arc_trap(spec, chart, args.r0, n=args.n)
    if args.csv and rep.xi is not None:
        write_xi_csv(rep, args.csv)
    return {"map": spec.describe(), "center": q.to_dict(), "epsilon_table": table, "trap": rep.to_dict()}


def _sweep_one(mu: float) -> dict:
    spec = MapSpec.standard(mu)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        records = [] if mu == 0.0 else find_fixed_points(spec)
    row = {"mu": mu, "fixed_points": len(records),
           "classes": sorted(r.classification.value for r in records)}
    saddle = next((r for r in records if r.classification is Classification.SADDLE_POSITIVE), None)
    if saddle is not None:
        row["lambda"] = saddle.unstable_eigenvalue
        rep = length_growth_rate(spec, _default_seed(spec), iterates=8, vertex_cap=200_000)
        row["growth_slope"] = rep.bound
    return row


def cmd_sweep(args) -> dict:
    mus = _parse_range(args.mu_range)
    jobs = _jobs(args.jobs)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_one, mus))
    else:
        rows = [_sweep_one(m) for m in mus]
    return {"rows": rows}


# ------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="saddlescope", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, with_map=True):
        if with_map:
            sp.add_argument("--map", choices=["standard", "cat", "hamiltonian"], default="standard")
            sp.add_argument("--mu", type=float)
        sp.add_argument("--json", metavar="OUT", help="write the JSON document here instead of stdout")
        sp.add_argument("--seed", type=int, default=0, help="random seed (recorded in the config)")

    sp = sub.add_parser("fixed-points", help="locate and classify fixed points")
    common(sp)
    sp.add_argument("--resolution", type=int, default=16)
    sp.set_defaults(func=cmd_fixed_points)

    sp = sub.add_parser("homoclinic", help="homoclinic intersections of the saddle (0, 0)")
    common(sp)
    sp.add_argument("--pairs", default="all", help="'all' or a comma list like UPlus-SPlus")
    sp.add_argument("--length", type=_positive("--length"), default=8.0, help="arc length per branch")
    sp.add_argument("--tmax", type=_positive("--tmax"), help="grow to this parameter value instead of --length")
    sp.add_argument("--h-max", type=_positive("--h-max"), default=1e-3)
    sp.add_argument("--tube-tol", type=_positive("--tube-tol"), default=1e-6)
    sp.add_argument("--max-classified", type=int, default=5)
    sp.add_argument("--grid-res", type=int, default=512)
    sp.add_argument("--refinement-check", action="store_true")
    sp.add_argument("--no-omega", action="store_true")
    sp.add_argument("--csv-dir", metavar="DIR")
    sp.set_defaults(func=cmd_homoclinic)

    sp = sub.add_parser("entropy", help="entropy lower bounds")
    common(sp)
    sp.add_argument("--method", choices=["growth", "horseshoe", "both"], default="both")
    sp.add_argument("--iterates", type=int, default=12)
    sp.add_argument("--vertex-cap", type=int, default=2_000_000)
    sp.add_argument("--length", type=_positive("--length"), default=8.0)
    sp.add_argument("--n-max", type=int, default=40)
    sp.add_argument("--mask", metavar="PGM", help="write the horseshoe strip labels as a graymap")
    sp.set_defaults(func=cmd_entropy)

    sp = sub.add_parser("ends", help="count ends of a marked complex fixture")
    common(sp, with_map=False)
    sp.add_argument("--fixture", required=True, help="fixture JSON path or bundled name (cross, circle_segments)")
    sp.add_argument("--levels", type=int, default=3)
    sp.set_defaults(func=cmd_ends)

    sp = sub.add_parser("rotation", help="polar lift and arc trap at the elliptic point (0.5, 0)")
    common(sp)
    sp.add_argument("--r0", type=_positive("--r0"), default=1e-3)
    sp.add_argument("--n", type=int, default=None)
    sp.add_argument("--chart-radius", type=_positive("--chart-radius"), default=0.05)
    sp.add_argument("--csv", metavar="OUT", help="write the closed curve xi as x,y CSV")
    sp.set_defaults(func=cmd_rotation)

    sp = sub.add_parser("sweep", help="per-mu summary table")
    common(sp, with_map=False)
    sp.add_argument("--mu-range", required=True, metavar="A:B:STEP")
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        code, result = _run(args)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if code == EXIT_OK:
        _emit(_document(args.command, _config(args), result), args.json)
    return code


def _run(args):
    try:
        return EXIT_OK, args.func(args)
    except ExcludedParameter as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXCLUDED, None
    except (ConfigError, NotElliptic, RadiusEscape, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    except InternalError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL, None


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
