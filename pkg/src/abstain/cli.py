"""Command line front end.

Exit codes: 0 success, 1 a verified property failed, 2 usage or parse error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from . import closed_form as cf
from . import montecarlo as mc
from . import oracle
from .core import DEFAULT_C, DEFAULT_GAMMA, DEFAULT_SIGMA, ConfigError, GameConfig

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

CURVE_HEADER = ["t", "loss_strategic", "loss_nonstrategic", "manip_fraction", "manip_mass_unqualified"]
SWEEP_HEADER = ["value", "t_star", "t_bar", "loss_star", "loss_bar"]
HARM_HEADER = ["value", "h_no_abstention", "h_abstention", "delta_h"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def fmt(v) -> str:
    """CSV cell: 17 significant digits for floats, blank for missing."""
    if v is None:
        return ""
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def metadata(args: argparse.Namespace, config: dict, generator: bool = False) -> dict:
    meta = {
        "tool": "abstain",
        "version": __version__,
        "command": args.command,
        "seed": args.seed,
        "config": config,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    if generator:
        meta["generator"] = mc.GENERATOR_INFO
    return meta


def _render_csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def _emit(args, text: str, meta: Optional[dict] = None) -> None:
    if args.out:
        path = Path(args.out)
        path.write_text(text)
        if meta is not None and not args.json:
            Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2) + "\n")
    else:
        sys.stdout.write(text)


def _emit_table(args, header, rows, meta: dict) -> None:
    if args.json:
        payload = {"metadata": meta, "rows": [dict(zip(header, r)) for r in rows]}
        _emit(args, json.dumps(payload, indent=2) + "\n")
    else:
        _emit(args, _render_csv(header, rows), meta)


def _json_dump(obj) -> str:
    return json.dumps(obj, indent=2, default=lambda o: o.value if hasattr(o, "value") else str(o)) + "\n"


def _config(args, sigma: Optional[float] = 0.0) -> GameConfig:
    try:
        return GameConfig(gamma=args.gamma, c=args.c, sigma=sigma if sigma is not None else 0.0)
    except ConfigError as exc:
        raise UsageError(str(exc)) from exc


def _grid(args) -> tuple[float, float, float]:
    grid = (args.grid_lo, args.grid_hi, args.grid_step)
    try:
        mc.grid_points(grid)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    return grid


# -- subcommands ---------------------------------------------------------------

def cmd_solve(args) -> int:
    config = _config(args)
    opt = cf.optimal_threshold(config)
    e_no = cf.expected_manipulation_no_abstention(config)
    try:
        e_with = cf.expected_manipulation_with_abstention(config, args.t_choice)
        verdict = cf.manipulation_comparison(config, args.t_choice).value
        e_with_value = e_with.expected_manipulation
    except ConfigError:
        if config.K <= 4.0 or args.t_choice is not None:
            raise
        e_with_value, verdict = None, None
    result = {
        "K": config.K,
        "t_bar_interval": [opt.lo, opt.hi],
        "t_bar": opt.canonical,
        "loss": opt.loss,
        "loss_no_abstention": cf.no_abstention_loss(config),
        "regime": cf.regime(config).value,
        "e_no_abstention": e_no.expected_manipulation,
        "e_with_abstention": e_with_value,
        "comparison": verdict,
    }
    if args.json:
        _emit(args, _json_dump({"metadata": metadata(args, config.as_dict()), "result": result}))
        return EXIT_OK
    lines = [
        f"K                     {config.K:.6g}",
        f"optimal threshold set [{opt.lo:.6g}, {opt.hi:.6g}]",
        f"canonical threshold   {opt.canonical:.6g}",
        f"minimum loss          {opt.loss:.6g}",
        f"no-abstention loss    {result['loss_no_abstention']:.6g}",
        f"regime                {result['regime']}",
        f"E_no_abstention       {e_no.expected_manipulation:.6g}",
    ]
    if e_with_value is None:
        lines.append("E_with_abstention     (K > 4: pass --t-choice to pick a threshold)")
    else:
        lines.append(f"E_with_abstention     {e_with_value:.6g}")
        lines.append(f"comparison            {verdict}")
    _emit(args, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_best_response(args) -> int:
    config = _config(args)
    try:
        if args.no_abstention:
            br = cf.best_response_no_abstention(args.x, config)
        else:
            if args.t is None:
                raise UsageError("--t is required unless --no-abstention is given")
            br = cf.best_response(args.x, args.t, config)
    except ValueError as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(str(exc)) from exc
    result = asdict(br)
    if args.json:
        cfg = config.as_dict() | {"x": args.x, "t": args.t, "no_abstention": args.no_abstention}
        _emit(args, _json_dump({"metadata": metadata(args, cfg), "result": result}))
    else:
        _emit(args, f"x_hat {br.x_hat!r}\nmanipulated {br.manipulated}\nutility {br.utility!r}\n")
    return EXIT_OK


def cmd_curve(args) -> int:
    grid = _grid(args)
    if args.analytic:
        if args.sigma not in (None, 0.0):
            raise UsageError("--analytic assumes noiseless labels; drop --sigma or use --simulate")
        config = _config(args)
        rows = []
        for t in mc.grid_points(grid):
            t = float(t)
            rows.append([t, cf.analytic_loss(t, config), cf.analytic_loss_nonstrategic(t, config),
                         cf.manipulation_fraction(t, config),
                         cf.manipulation_mass_unqualified(t, config)])
        meta = metadata(args, config.as_dict() | {"mode": "analytic", "grid": list(grid)})
    else:
        sigma = DEFAULT_SIGMA if args.sigma is None else args.sigma
        config = _config(args, sigma)
        if args.n < 1:
            raise UsageError("--n must be positive")
        pop = mc.sample_population(args.n, config.sigma, args.seed)
        curve = mc.loss_curve(pop, config, grid)
        rows = [[r.t, r.loss_strategic, r.loss_nonstrategic, r.manip_fraction, r.manip_mass_unqualified]
                for r in curve.rows]
        meta = metadata(args, config.as_dict() | {"mode": "simulate", "n": args.n, "grid": list(grid)},
                        generator=True)
    _emit_table(args, CURVE_HEADER, rows, meta)
    return EXIT_OK


def _sweep_values(args) -> list[float]:
    if args.values is not None:
        if getattr(args, "start", None) is not None or getattr(args, "stop", None) is not None:
            raise UsageError("give either --values or --from/--to/--steps, not both")
        vals = args.values
    else:
        if args.start is None or args.stop is None:
            raise UsageError("a sweep needs --values or --from and --to")
        if args.steps < 1:
            raise UsageError("--steps must be at least 1")
        vals = mc.linspace_values(args.start, args.stop, args.steps)
    if not vals or any(not math.isfinite(v) for v in vals):
        raise UsageError("malformed sweep range")
    return vals


def _sweep_setup(args):
    base = _config(args, args.sigma)
    grid = _grid(args)
    if args.n < 1:
        raise UsageError("--n must be positive")
    return base, grid


def _check_values(param: str, values: Sequence[float], base: GameConfig) -> None:
    for v in values:
        try:
            base.replace(**{param: v})
        except ConfigError as exc:
            raise UsageError(f"invalid {param} value {v!r}: {exc}") from exc


def cmd_sweep(args) -> int:
    base, grid = _sweep_setup(args)
    values = _sweep_values(args)
    _check_values(args.param, values, base)
    rows = mc.sweep(args.param, values, base, count=args.n, seed=args.seed, grid=grid,
                    workers=args.workers)
    table = [[r.value, r.t_star, r.t_bar, r.loss_star, r.loss_bar] for r in rows]
    meta = metadata(args, base.as_dict() | {"param": args.param, "values": values, "n": args.n,
                                            "grid": list(grid)}, generator=True)
    _emit_table(args, SWEEP_HEADER, table, meta)
    return EXIT_OK


def cmd_harm(args) -> int:
    base, grid = _sweep_setup(args)
    if args.param is None:
        if args.values is not None or args.start is not None:
            raise UsageError("sweep values given without --param")
        reports = [(None, mc.harm(base, count=args.n, seed=args.seed, grid=grid))]
        values = []
    else:
        values = _sweep_values(args)
        _check_values(args.param, values, base)
        reports = mc.harm_sweep(args.param, values, base, count=args.n, seed=args.seed, grid=grid,
                                workers=args.workers)
    table = [[v, h.h_no_abstention, h.h_abstention, h.delta_h] for v, h in reports]
    meta = metadata(args, base.as_dict() | {"param": args.param, "values": values, "n": args.n,
                                            "grid": list(grid)}, generator=True)
    _emit_table(args, HARM_HEADER, table, meta)
    return EXIT_OK


def _fmt_policy(r) -> str:
    return "(" + ",".join(str(int(v)) for v in r) + ")"


def cmd_oracle(args) -> int:
    if args.random == bool(args.files):
        raise UsageError("give instance files or --random, not both or neither")
    if args.random:
        if args.count < 1:
            raise UsageError("--count must be positive")
        try:
            instances = list(oracle.random_suite(args.count, args.seed, min_n=args.min_n,
                                                 max_n=args.max_n, informative=args.informative))
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        labels = [f"random[{i}]" for i in range(len(instances))]
    else:
        instances, labels = [], []
        for name in args.files:
            try:
                instances.append(oracle.load_instance(name))
            except OSError as exc:
                raise UsageError(f"{name}: {exc.strerror or exc}") from exc
            except oracle.InstanceError as exc:
                raise UsageError(f"{name}: {exc}") from exc
            labels.append(name)
        for label, inst in zip(labels, instances):
            if inst.n > oracle.MAX_ENUMERATION_N:
                raise UsageError(f"{label}: n={inst.n} exceeds enumeration limit {oracle.MAX_ENUMERATION_N}")

    lines, records = [], []
    counts = {"theorem1": 0, "theorem2": 0, "theorem3": 0, "theorem3_skipped": 0, "failed": 0}
    verbose = not args.random
    for label, inst in zip(labels, instances):
        res = oracle.verify_all(inst)
        counts["theorem1"] += res.theorem1
        counts["theorem2"] += res.theorem2
        if res.theorem3 is None:
            counts["theorem3_skipped"] += 1
        else:
            counts["theorem3"] += res.theorem3
        counts["failed"] += not res.passed
        t3 = "skip (not informative)" if res.theorem3 is None else ("pass" if res.theorem3 else "FAIL")
        if verbose or not res.passed:
            lines.append(f"{label}: n={inst.n} theorem1={'pass' if res.theorem1 else 'FAIL'} "
                         f"theorem2={'pass' if res.theorem2 else 'FAIL'} theorem3={t3}")
        if verbose:
            lines.append(f"  r* = {_fmt_policy(res.r_star)}")
            lines.append(f"  optimal r = {', '.join(_fmt_policy(r) for r in res.minimizers)}")
            lines.append(f"  min loss = {res.min_loss!r}  no-abstention loss = {res.no_abstention_loss!r}")
        records.append({"instance": label, "n": inst.n, "theorem1": res.theorem1,
                        "theorem2": res.theorem2, "theorem3": res.theorem3,
                        "r_star": list(res.r_star), "minimizers": [list(r) for r in res.minimizers],
                        "min_loss": res.min_loss, "no_abstention_loss": res.no_abstention_loss})
    total = len(instances)
    informative_total = total - counts["theorem3_skipped"]
    summary = (f"theorem1 {counts['theorem1']}/{total} pass; theorem2 {counts['theorem2']}/{total} pass; "
               f"theorem3 {counts['theorem3']}/{informative_total} pass "
               f"({counts['theorem3_skipped']} skipped); {total - counts['failed']}/{total} instances pass")
    if args.json:
        cfg = {"random": args.random, "count": args.count, "min_n": args.min_n, "max_n": args.max_n,
               "informative": args.informative, "files": args.files}
        _emit(args, _json_dump({"metadata": metadata(args, cfg), "summary": counts,
                                "instances": records}))
    else:
        _emit(args, "\n".join(lines + [summary]) + "\n")
    return EXIT_FAIL if counts["failed"] else EXIT_OK


# -- parser ----------------------------------------------------------------------

def _add_game_flags(p, sigma_default=None) -> None:
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA, help="manipulation cost scale")
    p.add_argument("--c", type=float, default=DEFAULT_C, help="abstention cost in [0, 1]")
    if sigma_default is not False:
        p.add_argument("--sigma", type=float, default=sigma_default, help="label noise std")


def _add_grid_flags(p) -> None:
    lo, hi, step = mc.DEFAULT_GRID
    p.add_argument("--grid-lo", type=float, default=lo)
    p.add_argument("--grid-hi", type=float, default=hi)
    p.add_argument("--grid-step", type=float, default=step)


def _add_sweep_flags(p, required: bool) -> None:
    p.add_argument("--param", choices=mc.SWEEP_PARAMS, required=required)
    p.add_argument("--from", dest="start", type=float)
    p.add_argument("--to", dest="stop", type=float)
    p.add_argument("--steps", type=int, default=20)
    p.add_argument("--values", type=float, nargs="+")
    p.add_argument("--n", type=int, default=mc.DEFAULT_COUNT, help="samples per population")
    p.add_argument("--workers", type=int, default=None,
                   help="threads for sweep rows (results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--json", action="store_true", help="structured output with metadata")
    common.add_argument("--out", default=None, help="output path (default stdout)")

    parser = _Parser(prog="abstain", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"abstain {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", parents=[common], help="closed-form optimum for (gamma, c)")
    _add_game_flags(p, sigma_default=False)
    p.add_argument("--t-choice", type=float, default=None,
                   help="threshold used for manipulation when K > 4")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("best-response", parents=[common], help="one agent's report")
    _add_game_flags(p, sigma_default=False)
    p.add_argument("--x", type=float, required=True)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--no-abstention", action="store_true")
    p.set_defaults(func=cmd_best_response)

    p = sub.add_parser("curve", parents=[common], help="loss against threshold as CSV")
    _add_game_flags(p)
    mode = p.add_mutually_exclusive_group(required=True)
    mode.add_argument("--analytic", action="store_true")
    mode.add_argument("--simulate", action="store_true")
    p.add_argument("--n", type=int, default=mc.DEFAULT_COUNT)
    _add_grid_flags(p)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("sweep", parents=[common], help="optimal thresholds over a parameter range")
    _add_game_flags(p, sigma_default=DEFAULT_SIGMA)
    _add_sweep_flags(p, required=True)
    _add_grid_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("harm", parents=[common], help="harm reduction from abstention")
    _add_game_flags(p, sigma_default=DEFAULT_SIGMA)
    _add_sweep_flags(p, required=False)
    _add_grid_flags(p)
    p.set_defaults(func=cmd_harm)

    p = sub.add_parser("oracle", parents=[common], help="verify the abstention theorems by enumeration")
    p.add_argument("files", nargs="*", help="JSON instance files")
    p.add_argument("--random", action="store_true")
    p.add_argument("--count", type=int, default=1000)
    p.add_argument("--min-n", type=int, default=3)
    p.add_argument("--max-n", type=int, default=8)
    p.add_argument("--informative", action="store_true",
                   help="generate classifiers whose positives dominate in posterior")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"abstain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"abstain: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
