"""Command line driver.

Every subcommand writes one CSV or JSON payload (stdout or ``--out``) and,
when writing to a file, a ``<out>.manifest.json`` sidecar with the full
parameter record and the payload's sha256.

``--config FILE`` reads flat ``key = value`` lines whose keys are the long
flag names (``r-min`` or ``r_min``); flags given on the command line win.

Exit codes: 0 ok, 2 usage, 3 domain or degenerate parameters, 4 resource
limit, 5 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import discrete_trace, ode_trace
from .errors import DomainError, NumericalError, ResourceError, TreebootError
from .landscape import ModelParams, critical
from .metastability import (
    bottleneck_integral,
    profile_phi,
    quadratic_self_test,
    window_offset,
)
from .output import manifest, render, to_json
from .simulator import (
    DEFAULT_SEED,
    SimConfig,
    TreeConfig,
    root_marginal_exact_discrete,
    simulate,
)

EXIT_OK, EXIT_USAGE, EXIT_DOMAIN, EXIT_RESOURCE, EXIT_NUMERICAL = 0, 2, 3, 4, 5
BOOL_KEYS = {"self_test"}


class UsageError(Exception):
    pass


def _probability(s: str) -> float:
    x = float(s)
    if not 0.0 <= x <= 1.0:
        raise argparse.ArgumentTypeError(f"must lie in [0, 1], got {s}")
    return x


def _positive(s: str) -> float:
    x = float(s)
    if not x > 0 or not math.isfinite(x):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {s}")
    return x


def _nonneg(s: str) -> float:
    x = float(s)
    if not x >= 0 or not math.isfinite(x):
        raise argparse.ArgumentTypeError(f"must be a finite number >= 0, got {s}")
    return x


def _posint(s: str) -> int:
    x = int(s)
    if x < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {s}")
    return x


def _float_list(s: str) -> list[float]:
    try:
        vals = [float(v) for v in s.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {s!r}")
    if not vals:
        raise argparse.ArgumentTypeError("list must not be empty")
    return vals


def _seed(s: str) -> int:
    x = int(s, 0)
    if not 0 <= x < 2**64:
        raise argparse.ArgumentTypeError(f"seed must fit in 64 bits, got {s}")
    return x


def _common(sp: argparse.ArgumentParser, model: bool = True) -> None:
    if model:
        sp.add_argument("--b", type=_posint, help="forward branching number (tree degree b+1)")
        sp.add_argument("--theta", type=_posint, help="occupation threshold")
    sp.add_argument("--format", choices=("csv", "json"), default="csv")
    sp.add_argument("--out", type=Path, help="output file (default: stdout)")
    sp.add_argument("--manifest", type=Path, help="manifest path (default: <out>.manifest.json)")
    sp.add_argument("--config", type=Path, help="flat key = value file of defaults")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="treeboot", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"treeboot {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    sp = sub.add_parser("critical", help="critical pair, spinodal and cutoff constant")
    _common(sp)
    sp.add_argument("--tol", type=_positive, default=1e-10)

    sp = sub.add_parser("trace", help="Q and P over time for one initial density")
    _common(sp)
    sp.add_argument("--p", type=_probability)
    sp.add_argument("--mode", choices=("discrete", "continuous"), default="continuous")
    sp.add_argument("--horizon", type=_nonneg, help="steps (discrete) or t_max (continuous)")
    sp.add_argument("--tol", type=_positive, default=1e-10)
    sp.add_argument("--samples", type=_posint, default=101,
                    help="evenly spaced output times in continuous mode")

    sp = sub.add_parser("window", help="offsets t_h(q) - alpha h^(-1/2) down a list of h")
    _common(sp)
    sp.add_argument("--q", type=_probability)
    sp.add_argument("--h", type=_float_list, default=[1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8])

    sp = sub.add_parser("profile", help="the cutoff profile phi on a grid")
    _common(sp)
    sp.add_argument("--r-min", type=float, default=-20.0)
    sp.add_argument("--r-max", type=float, default=20.0)
    sp.add_argument("--step", type=_positive, default=0.5)

    sp = sub.add_parser("bottleneck", help="compensated bottleneck integral")
    _common(sp)
    sp.add_argument("--delta", type=_positive, default=0.05)
    sp.add_argument("--thetas", type=_float_list,
                    default=[4.0 ** -j for j in range(4, 13)])
    sp.add_argument("--self-test", action="store_true",
                    help="use w(x) = x^2 at q = 0, whose limit is -2/delta")

    sp = sub.add_parser("simulate", help="Monte Carlo density curve on a finite tree")
    _common(sp)
    sp.add_argument("--p", type=_probability)
    sp.add_argument("--geometry", choices=("rooted", "ball"), default="ball")
    sp.add_argument("--L", type=_posint, help="depth (rooted) or radius (ball)")
    sp.add_argument("--boundary", choices=("frozen", "occupied"), default="frozen")
    sp.add_argument("--mode", choices=("discrete", "continuous"), default="continuous")
    sp.add_argument("--horizon", type=_nonneg)
    sp.add_argument("--replicas", type=_posint, default=1000)
    sp.add_argument("--seed", type=_seed, default=DEFAULT_SEED)
    sp.add_argument("--clock", choices=("eligibility", "rings"), default="eligibility")
    sp.add_argument("--engine", choices=("auto", "sweep", "events", "explore", "dfs"),
                    default="auto")
    sp.add_argument("--times", type=Path, help="also write per-replica occupation times (CSV)")

    sp = sub.add_parser("compare", help="z-scores of a simulate output against the analytics")
    _common(sp, model=False)
    sp.add_argument("sim", type=Path, help="output of `simulate` (its manifest must sit beside it)")
    sp.add_argument("--reference", choices=("auto", "exact", "discrete", "ode"), default="auto")
    sp.add_argument("--threshold", type=_positive, default=3.0)
    return parser


def _apply_config(sub: argparse.ArgumentParser, path: Path) -> None:
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc.strerror}") from None
    dests = {a.dest for a in sub._actions}
    values = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key not in dests or key in ("config", "help"):
            raise UsageError(f"{path}:{n}: unknown key {key!r}")
        if key in BOOL_KEYS:
            if val.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"{path}:{n}: {key} must be true or false")
            values[key] = val.lower() in ("true", "1", "yes")
        else:
            values[key] = val
    sub.set_defaults(**values)


def _require(args, *names) -> None:
    missing = [n for n in names if getattr(args, n, None) is None]
    if missing:
        raise UsageError("missing required option(s): " +
                         ", ".join("--" + n.replace("_", "-") for n in missing))


def _params(args) -> ModelParams:
    _require(args, "b", "theta")
    return ModelParams(args.b, args.theta)


def cmd_critical(args):
    params = _params(args)
    land = critical(params, tol=args.tol)
    record = {
        "b": params.b, "theta": params.theta,
        "p_T": land.p_T, "q_T": land.q_T, "q_tilde": land.q_tilde, "p_tilde": land.p_tilde,
        "alpha": land.alpha, "beta": land.beta, "curvature": land.curvature,
        "residual_w": land.tolerances["residual_w"], "residual_dw": land.tolerances["residual_dw"],
    }
    cols = list(record)
    return cols, [[record[c] for c in cols]], {"tol": args.tol}, record


def cmd_trace(args):
    params = _params(args)
    _require(args, "p", "horizon")
    if args.mode == "discrete":
        if int(args.horizon) != args.horizon:
            raise UsageError("--horizon must be a whole number of steps in discrete mode")
        tr = discrete_trace(params, args.p, int(args.horizon))
        t, Q, P = tr.t, tr.Q, tr.P
    else:
        grid = np.linspace(0.0, args.horizon, args.samples)
        tr = ode_trace(params, args.p, args.horizon, tol=args.tol, t_eval=grid)
        Q, P = tr.at(grid)
        Q[0] = P[0] = args.p
        t = grid
    rows = [[a, b, c] for a, b, c in zip(t.tolist(), Q.tolist(), P.tolist())]
    return ["t", "Q", "P"], rows, {"p": args.p, "mode": args.mode, "horizon": args.horizon,
                                   "tol": args.tol, "samples": args.samples}, None


def cmd_window(args):
    params = _params(args)
    land = critical(params)
    q = args.q if args.q is not None else 0.5 * (land.q_T + 1.0)
    if not land.q_T < q < 1.0:
        raise DomainError(f"q must lie in (q_T, 1) = ({land.q_T}, 1), got {q!r}")
    rows, prev = [], None
    for h in args.h:
        if not 0 < h < 1 - land.p_T:
            raise DomainError(f"h must lie in (0, 1 - p_T), got {h!r}")
        off = window_offset(land, q, h)
        rows.append([h, off, None if prev is None else abs(off - prev)])
        prev = off
    return ["h", "offset", "gap"], rows, {"q": q, "h": args.h}, None


def cmd_profile(args):
    params = _params(args)
    if not args.r_min < 0 < args.r_max:
        raise UsageError("--r-min must be negative and --r-max positive")
    land = critical(params)
    n = int(round((args.r_max - args.r_min) / args.step))
    grid = args.r_min + args.step * np.arange(n + 1)
    grid = np.union1d(grid[grid <= args.r_max], [0.0])
    prof = profile_phi(land, grid)
    rows = [[r, v] for r, v in zip(prof.r.tolist(), prof.phi.tolist())]
    extra = {"shift_convention": prof.shift_convention}
    return ["r", "phi"], rows, {"r_min": args.r_min, "r_max": args.r_max, "step": args.step}, extra


def cmd_bottleneck(args):
    if args.self_test:
        vals = quadratic_self_test(args.delta, args.thetas)
        reference = -2.0 / args.delta
    else:
        land = critical(_params(args))
        vals = [bottleneck_integral(land, args.delta, th) for th in args.thetas]
        reference = None
    rows, prev = [], None
    for v in vals:
        rows.append([v.theta, v.raw, v.compensated, None if prev is None else abs(v.compensated - prev)])
        prev = v.compensated
    print(f"limit estimate {vals[-1].compensated:.12g}"
          + (f" (exact -2/delta = {reference:.12g})" if reference is not None else ""),
          file=sys.stderr)
    extra = {"beta": vals[-1].beta}
    return (["theta", "raw", "compensated", "gap"], rows,
            {"delta": args.delta, "thetas": args.thetas, "self_test": args.self_test}, extra)


def _sim_config(args) -> SimConfig:
    params = _params(args)
    _require(args, "p", "L", "horizon")
    tree = TreeConfig(args.geometry, args.L, params.b, args.boundary)
    return SimConfig(tree=tree, params=params, p=args.p, mode=args.mode, horizon=args.horizon,
                     replicas=args.replicas, seed=args.seed, clock=args.clock, engine=args.engine)


def cmd_simulate(args):
    cfg = _sim_config(args)
    res = simulate(cfg)
    rows = [[t, d, s] for t, d, s in zip(res.t.tolist(), res.density.tolist(), res.se.tolist())]
    record = {"p": args.p, "geometry": args.geometry, "L": args.L, "boundary": args.boundary,
              "mode": args.mode, "horizon": args.horizon, "replicas": args.replicas,
              "seed": args.seed, "clock": args.clock, "engine": res.engine,
              "tracked": res.tracked.tolist() if res.tracked.size <= 64 else int(res.tracked.size),
              "tracked_rule": res.meta["tracked_rule"]}
    if args.times is not None:
        T = res.times.filled(np.inf)
        lines = ["replica,vertex,T"]
        for r in range(T.shape[0]):
            for j, v in enumerate(res.tracked.tolist()):
                x = T[r, j]
                lines.append(f"{r},{v},{'' if not math.isfinite(x) else format(x, '.17g')}")
        _write(args.times, "\n".join(lines) + "\n")
    return ["t", "density", "se"], rows, record, None


def _read_sim(path: Path) -> tuple[dict, np.ndarray]:
    side = path.with_name(path.name + ".manifest.json")
    try:
        man = json.loads(side.read_text())
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read {exc.filename}: {exc.strerror}") from None
    if man.get("command") != "simulate":
        raise UsageError(f"{side} does not describe a simulate run")
    if text.lstrip().startswith(("[", "{")):
        data = json.loads(text)
        data = data["rows"] if isinstance(data, dict) else data
        table = np.array([[float(r["t"]), float(r["density"]), float(r["se"])] for r in data])
    else:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return man["params"], table


def cmd_compare(args):
    rec, table = _read_sim(args.sim)
    params = ModelParams(int(rec["b"]), int(rec["theta"]))
    p, mode, geometry = float(rec["p"]), rec["mode"], rec["geometry"]
    L, R = int(rec["L"]), int(rec["replicas"])
    single = rec.get("tracked") == [0]
    t = table[:, 0]
    ref_kind = args.reference
    if ref_kind == "auto":
        if mode == "discrete":
            ref_kind = "exact" if geometry == "rooted" else "discrete"
        else:
            ref_kind = "ode"
    if ref_kind == "exact":
        if geometry != "rooted" or mode != "discrete":
            raise UsageError("the exact recursion covers discrete runs on rooted trees only")
        ref = np.array([root_marginal_exact_discrete(params, p, L, int(n)) for n in t])
    elif ref_kind == "discrete":
        if mode != "discrete":
            raise UsageError("the discrete reference needs a discrete run")
        tr = discrete_trace(params, p, int(t.max()))
        ref = (tr.Q if geometry == "rooted" else tr.P)[t.astype(int)]
    else:
        tr = ode_trace(params, p, float(t.max()), t_eval=t)
        Q, P = tr.at(t)
        ref = Q if geometry == "rooted" else P
    if not single and ref_kind != "ode":
        print("note: tracked set is not the root alone; reference is the root law", file=sys.stderr)
    rows, zmax = [], 0.0
    for (ti, d, s), r in zip(table.tolist(), ref.tolist()):
        se = math.sqrt(r * (1.0 - r) / R) if single else s
        if se > 0:
            z = (d - r) / se
        else:
            z = 0.0 if d == r else math.inf
        zmax = max(zmax, abs(z))
        rows.append([ti, d, se, r, z])
    passed = zmax < args.threshold
    print(f"max |z| = {zmax:.4g} over {len(rows)} times: {'PASS' if passed else 'FAIL'}",
          file=sys.stderr)
    record = {"sim": str(args.sim), "reference": ref_kind, "threshold": args.threshold}
    extra = {"max_abs_z": zmax, "passed": passed, "reference": ref_kind}
    return ["t", "density", "se", "reference", "z"], rows, record, extra


COMMANDS = {
    "critical": cmd_critical,
    "trace": cmd_trace,
    "window": cmd_window,
    "profile": cmd_profile,
    "bottleneck": cmd_bottleneck,
    "simulate": cmd_simulate,
    "compare": cmd_compare,
}


def _write(path: Path, text: str) -> None:
    try:
        path.write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


def run(args) -> str:
    cols, rows, record, extra = COMMANDS[args.command](args)
    params = {k: getattr(args, k) for k in ("b", "theta") if getattr(args, k, None) is not None}
    params.update(record)
    if args.command == "critical" and args.format == "json":
        payload = to_json(extra)
    else:
        payload = render(args.format, cols, rows, extra if args.format == "json" else None)
    if args.out is None:
        sys.stdout.write(payload)
        if args.manifest is not None:
            _write(args.manifest, _dump(manifest(args.command, params, payload)))
    else:
        _write(args.out, payload)
        side = args.manifest or args.out.with_name(args.out.name + ".manifest.json")
        _write(side, _dump(manifest(args.command, params, payload)))
    return payload


def _dump(obj: dict) -> str:
    return json.dumps(obj, indent=2) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.config is not None:
            sub = parser._subparsers._group_actions[0].choices[args.command]
            _apply_config(sub, args.config)
            args = parser.parse_args(argv)
        run(args)
    except UsageError as exc:
        print(f"treeboot {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    except DomainError as exc:
        print(f"treeboot {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except ResourceError as exc:
        print(f"treeboot {args.command}: resource limit: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (NumericalError, TreebootError) as exc:
        print(f"treeboot {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
