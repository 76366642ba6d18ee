"""Command-line entry point ``gendiff``.

Exit codes: 0 success or RP holds, 2 RP fails, 3 inconclusive, 4 a
verification report failed, 64 usage error, 65 malformed or invalid spec.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys

import numpy as np

from . import __version__, gallery, verification
from .characteristics import NaturalScale, validation_report
from .errors import GenDiffError, InvalidSpec, SpecParseError
from .rp_criterion import Status, rp_verdict
from .simulator import build_grid_chain, simulate_path
from .specfile import dump_spec, parse_spec

EXIT_OK, EXIT_FAILS, EXIT_INCONCLUSIVE, EXIT_VERIFY = 0, 2, 3, 4
EXIT_USAGE, EXIT_DATA = 64, 65
SCHEMA = "gendiff-report/1"
SUITES = ("exit-probability", "exit-time", "martingale", "sticky-occupation",
          "sticky-characteristics", "feller-mckean")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _header(command: str, params: dict) -> dict:
    return {"schema": SCHEMA, "toolkit": "gendiff", "version": __version__, "command": command,
            "parameters": params}


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return v.tolist()
    return str(v)


def _clean(v):
    """Replace non-finite floats so the JSON stays standard."""
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def _read_spec(source: str, stdin):
    if source == "-":
        text = stdin.read()
    else:
        try:
            with open(source, encoding="utf-8") as fh:
                text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read {source}: {exc.strerror}") from None
    return parse_spec(text)


def _x0(spec, given):
    if given is not None:
        return given
    if "x0" in spec.metadata:
        return float(spec.metadata["x0"])
    raise UsageError("--x0 is required (the spec has no x0 metadata)")


def _params(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "json", "command")}


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_validate(args, out, stdin):
    spec = _read_spec(args.spec, stdin)
    violations, notes = validation_report(spec)
    if args.json:
        out.write(_dump({**_header("validate", _params(args)),
                         "result": {"valid": not violations, "violations": violations, "notes": notes}}))
    else:
        out.write(f"# gendiff {__version__} validate {json.dumps(_params(args), sort_keys=True)}\n")
        out.write("valid\n" if not violations else "invalid\n")
        for v in violations:
            out.write(f"violation: {v}\n")
        for n in notes:
            out.write(f"note: {n}\n")
    return EXIT_OK if not violations else EXIT_DATA


def cmd_rp_check(args, out, stdin):
    spec = _read_spec(args.spec, stdin)
    x0 = _x0(spec, args.x0)
    try:
        verdict = rp_verdict(spec, x0, resolution=args.resolution, samples=args.samples, seed=args.seed)
    except InvalidSpec as exc:
        for v in exc.violations:
            sys.stderr.write(f"violation: {v}\n")
        return EXIT_DATA
    if verdict.status is Status.FAILS:
        code = EXIT_FAILS
    elif not verdict.conclusive:
        code = EXIT_INCONCLUSIVE
    else:
        code = EXIT_OK
    if args.json:
        out.write(_dump({**_header("rp-check", {**_params(args), "x0": x0}),
                         "result": _clean(verdict.to_dict())}))
    else:
        out.write(f"# gendiff {__version__} rp-check {json.dumps({**_params(args), 'x0': x0}, sort_keys=True)}\n")
        out.write(f"status: {verdict.status.value}\n")
        out.write(f"extremal: {'yes' if verdict.is_extremal else 'no'}\n")
        out.write(f"zero_set_measure: {verdict.zero_set_measure!r}\n")
        out.write(f"error_bound: {verdict.error_bound!r}\n")
        out.write(f"method: {verdict.method.value}\n")
        out.write(f"notes: {verdict.notes}\n")
    return code


def _sim_window(spec, x0, horizon, given):
    if given:
        return tuple(given)
    lo, hi = spec.natural_range()
    y0 = float(spec.scale(x0))
    half = max(1.0, 8.0 * math.sqrt(horizon))
    return (lo if math.isfinite(lo) else y0 - half, hi if math.isfinite(hi) else y0 + half)


def cmd_simulate(args, out, stdin):
    spec = _read_spec(args.spec, stdin)
    x0 = _x0(spec, args.x0)
    if not (args.horizon > 0 and math.isfinite(args.horizon)):
        raise UsageError("--horizon must be positive and finite")
    if args.paths < 1:
        raise UsageError("--paths must be positive")
    window = _sim_window(spec, x0, args.horizon, args.window)
    chain = build_grid_chain(spec, args.h, window)
    k = chain.start_node(spec.scale, x0)
    paths = [simulate_path(chain, k, args.horizon, args.seed, i) for i in range(args.paths)]

    rows = io.StringIO()
    rows.write("path_id,t,x\n")
    for i, p in enumerate(paths):
        for t, x in zip(p.times.tolist(), p.values.tolist()):
            rows.write(f"{i},{t!r},{x!r}\n")
    terminal = np.array([p.values[-1] for p in paths])
    wall = set(chain.wall_nodes.tolist())
    summary = {
        "n_paths": args.paths,
        "h_used": chain.h,
        "window": list(window),
        "x0_snapped": float(chain.values[k]),
        "absorbed_fraction": float(np.mean([p.absorbed for p in paths])),
        "mean_terminal_value": float(terminal.mean()),
        "mean_jumps": float(np.mean([len(p.times) - 1 for p in paths])),
        "wall_hit_paths": int(sum(bool(wall.intersection(p.nodes.tolist())) for p in paths)),
        "artificial_walls": list(chain.artificial),
    }
    params = {**_params(args), "x0": x0}
    report = _dump({**_header("simulate", params), "result": summary})
    if args.out in (None, "-"):
        out.write(rows.getvalue())
        sys.stderr.write(report)
    else:
        try:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(rows.getvalue())
        except OSError as exc:
            raise UsageError(f"cannot write {args.out}: {exc.strerror}") from None
        out.write(report)
    return EXIT_OK


def _sticky_rho(spec, given):
    """Stickiness at 0 of a natural-scale spec with unit-like density and an atom at 0."""
    if given is not None:
        return given
    if not isinstance(spec.scale, NaturalScale) or spec.speed.density is None:
        return None
    for loc, mass in spec.speed.atoms:
        if loc == 0.0:
            return float(mass)
    return None


def _suite_reports(args, spec, x0):
    names = SUITES if args.suite == "all" else (args.suite,)
    reports = []
    common = {"n_paths": args.paths, "seed": args.seed, "workers": args.workers}
    a, b = args.a, args.b
    if a is None or b is None:
        J = spec.interval
        a = J.left if (a is None and math.isfinite(J.left)) else (x0 - 1.0 if a is None else a)
        b = J.right if (b is None and math.isfinite(J.right)) else (x0 + 1.0 if b is None else b)
    rho = _sticky_rho(spec, args.rho)
    family = spec.metadata.get("family")
    for name in names:
        if name == "exit-probability":
            reports.append(verification.exit_probability_test(spec, x0, a, b, h=args.h, **common))
        elif name == "exit-time":
            reports.append(verification.exit_time_test(spec, x0, a, b, h=args.h, **common))
        elif name == "martingale":
            reports.append(verification.martingale_test(spec, x0, a, b, h=args.h, **common))
        elif name in ("sticky-occupation", "sticky-characteristics"):
            if rho is None:
                if args.suite == "all":
                    continue
                raise UsageError(f"suite {name} needs --rho or a spec with an atom at 0")
            fn = (verification.sticky_occupation_test if name == "sticky-occupation"
                  else verification.sticky_characteristics_test)
            reports.append(fn(rho, x0, args.horizon, h=args.h or 0.01, **common))
        elif name == "feller-mckean":
            n_atoms = args.n_atoms or (len(spec.speed.atoms) if family == "feller-mckean" else None)
            if n_atoms is None:
                if args.suite == "all":
                    continue
                raise UsageError("suite feller-mckean needs --n-atoms or a Feller-McKean spec")
            reports.append(verification.feller_mckean_occupation_test(
                n_atoms, args.horizon, spec_seed=int(spec.metadata.get("seed", 0)), **common))
    return reports, (a, b)


def cmd_verify(args, out, stdin):
    spec = _read_spec(args.spec, stdin)
    x0 = _x0(spec, args.x0)
    bad, _ = validation_report(spec)
    if bad:
        for v in bad:
            sys.stderr.write(f"violation: {v}\n")
        return EXIT_DATA
    reports, (a, b) = _suite_reports(args, spec, x0)
    params = {**_params(args), "x0": x0, "a": a, "b": b}
    ok = all(r.passed for r in reports)
    if args.json:
        out.write(_dump({**_header("verify", params),
                         "result": {"pass": ok, "reports": [_clean(r.to_dict()) for r in reports]}}))
    else:
        out.write(f"# gendiff {__version__} verify {json.dumps(params, sort_keys=True)}\n")
        for r in reports:
            out.write(r.line() + "\n")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_gallery(args, out, stdin):
    name = args.name

    def x0(default):
        return default if args.x0 is None else args.x0

    if name == "cantor":
        spec = gallery.cantor_diffusion_spec(gallery.fat_cantor_set(args.levels, args.alpha), x0(0.5))
    elif name == "sticky":
        spec = gallery.sticky_bm_spec(args.rho, x0(0.0))
    elif name == "feller-mckean":
        spec = gallery.feller_mckean_spec(args.n_atoms, args.seed, x0(0.0))
    elif name == "brownian":
        spec = gallery.brownian_spec(args.left, args.right, x0(0.0))
    else:
        spec = gallery.ou_spec(args.theta, args.sigma, x0(0.0))
    text = dump_spec(spec)
    summary = _clean(gallery.summary(spec))
    params = _params(args)
    if args.json:
        out.write(_dump({**_header("gallery", params), "result": {"spec": text, "summary": summary}}))
    else:
        out.write(f"# gendiff {__version__} gallery {json.dumps(params, sort_keys=True)}\n")
        out.write(text)
        out.write(f"# summary {json.dumps(summary, sort_keys=True)}\n")
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _positive_int(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gendiff", description="General one-dimensional diffusions: validate, decide the "
                                              "representation property, simulate, verify.")
    p.add_argument("--version", action="version", version=f"gendiff {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def spec_cmd(name, help_text, func):
        s = sub.add_parser(name, help=help_text)
        s.add_argument("spec", help="spec file, or - for stdin")
        s.add_argument("--json", action="store_true", help="machine-readable output")
        s.set_defaults(func=func)
        return s

    spec_cmd("validate", "check a spec against every invariant", cmd_validate)

    s = spec_cmd("rp-check", "decide the representation property / extremality", cmd_rp_check)
    s.add_argument("--x0", type=float)
    s.add_argument("--resolution", type=float, default=1e-9, help="derivative threshold for numeric scales")
    s.add_argument("--samples", type=_positive_int, default=20000)
    s.add_argument("--seed", type=int, default=0)

    s = spec_cmd("simulate", "simulate paths and write CSV (path_id,t,x)", cmd_simulate)
    s.add_argument("--x0", type=float)
    s.add_argument("--horizon", type=float, required=True)
    s.add_argument("--h", type=float, default=0.01, help="natural-scale grid step")
    s.add_argument("--paths", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--window", type=float, nargs=2, metavar=("LO", "HI"), help="natural-scale window")
    s.add_argument("--out", help="CSV path (default: stdout, summary on stderr)")

    s = spec_cmd("verify", "run statistical verification suites", cmd_verify)
    s.add_argument("--suite", choices=SUITES + ("all",), default="all")
    s.add_argument("--paths", type=_positive_int, default=2000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--x0", type=float)
    s.add_argument("--a", type=float, help="left end of the exit window")
    s.add_argument("--b", type=float, help="right end of the exit window")
    s.add_argument("--h", type=float, help="natural-scale grid step")
    s.add_argument("--horizon", type=float, default=1.0)
    s.add_argument("--rho", type=float)
    s.add_argument("--n-atoms", type=_positive_int, dest="n_atoms")
    s.add_argument("--workers", type=_positive_int, default=1)

    g = sub.add_parser("gallery", help="emit a constructed example as a spec")
    g.add_argument("name", choices=("cantor", "sticky", "feller-mckean", "brownian", "ou"))
    g.add_argument("--json", action="store_true")
    g.add_argument("--levels", type=_positive_int, default=12)
    g.add_argument("--alpha", type=float, default=1.0)
    g.add_argument("--rho", type=float, default=1.0)
    g.add_argument("--n-atoms", type=_positive_int, default=200, dest="n_atoms")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--left", type=float, default=-math.inf)
    g.add_argument("--right", type=float, default=math.inf)
    g.add_argument("--theta", type=float, default=1.0)
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--x0", type=float)
    g.set_defaults(func=cmd_gallery)
    return p


def main(argv=None, stdin=None, stdout=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    out = stdout if stdout is not None else sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args, out, stdin)
    except SpecParseError as exc:
        sys.stderr.write(f"parse error: {exc}\n")
        return EXIT_DATA
    except UsageError as exc:
        sys.stderr.write(f"gendiff: error: {exc}\n")
        return EXIT_USAGE
    except (GenDiffError, ValueError) as exc:
        sys.stderr.write(f"gendiff: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
