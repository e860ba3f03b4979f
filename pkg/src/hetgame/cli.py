"""Command-line entry point: ``hetgame {solve,sweep,two-link,paths}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .equilibrium import HetGameInstance, SolverConfig, result_to_csv, social_optimum, solve_hetgame
from .metrics import alpha_sweep, price_report, sweep_to_csv
from .net_model import Network, ParseError, read_network
from .path_enum import NoPathError, PathSet, build_pathset, format_path_dump
from .two_link import (
    PIGOU_INSTANCE,
    REFERENCE_INSTANCE,
    ModelAssumptionError,
    TwoLinkInstance,
    link_costs,
    social_opt_f2,
    solve_regimes,
    sweep_table,
    threshold_A,
    two_link_prices,
)

logger = logging.getLogger("hetgame")

EXIT_OK, EXIT_INPUT, EXIT_UNCONVERGED = 0, 1, 2
PRESETS = {"reference": REFERENCE_INSTANCE, "pigou": PIGOU_INSTANCE}


def sioux_falls_paths() -> tuple[Path, Path]:
    data = resources.files("hetgame") / "data"
    return Path(str(data / "SiouxFalls_net.tntp")), Path(str(data / "SiouxFalls_trips.tntp"))


def parse_alphas(text: str) -> list[float]:
    """``start:step:end`` (inclusive) or a comma-separated list."""
    text = text.strip()
    if ":" in text:
        try:
            start, step, end = (float(v) for v in text.split(":"))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad alpha range {text!r}; expected start:step:end") from None
        if step <= 0 or end < start:
            raise argparse.ArgumentTypeError(f"bad alpha range {text!r}")
        n = int(round((end - start) / step)) + 1
        values = [round(start + i * step, 12) for i in range(n)]
    else:
        try:
            values = [float(v) for v in text.split(",") if v.strip()]
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad alpha list {text!r}") from None
    if not values or any(not 0.0 <= v <= 1.0 for v in values):
        raise argparse.ArgumentTypeError(f"alphas must lie in [0, 1]: {text!r}")
    return values


def _alpha(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha {text!r}") from None
    if not 0.0 <= v <= 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in [0, 1], got {v}")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _fmt(v: float | None) -> str:
    return "" if v is None else f"{v:.9g}"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    if not text.endswith("\n"):
        text += "\n"
    path.write_text(text)


def _add_network_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--net", type=Path, help="TNTP network file (default: bundled Sioux Falls)")
    p.add_argument("--trips", type=Path, help="TNTP trips file (default: bundled Sioux Falls)")
    p.add_argument("--preset", choices=sorted(PRESETS), help="use a built-in two-link network instead")
    p.add_argument("--no-strict", action="store_true", help="warn on unknown metadata keys instead of failing")


def _add_solver_args(p: argparse.ArgumentParser) -> None:
    d = SolverConfig()
    p.add_argument("--k-paths", type=_positive_int, default=4, help="candidate paths per OD pair (default 4)")
    p.add_argument("--outer-tol", type=float, default=d.outer_tol)
    p.add_argument("--inner-tol", type=float, default=d.inner_tol)
    p.add_argument("--max-iters", type=_positive_int, default=d.max_outer_iters, help="outer iteration cap")
    p.add_argument("--max-inner-iters", type=_positive_int, default=d.max_inner_iters)
    p.add_argument("--direction", choices=["pairwise", "fw"], default=d.direction)
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")


def _load(args: argparse.Namespace) -> tuple[Network, list[str]]:
    if args.preset:
        if args.net or args.trips:
            raise argparse.ArgumentTypeError("--preset excludes --net/--trips")
        return PRESETS[args.preset].to_network(), [f"preset:{args.preset}"]
    if (args.net is None) != (args.trips is None):
        raise argparse.ArgumentTypeError("--net and --trips go together")
    net_path, trips_path = (args.net, args.trips) if args.net else sioux_falls_paths()
    return read_network(net_path, trips_path, strict=not args.no_strict), [str(net_path), str(trips_path)]


def _config(args: argparse.Namespace) -> SolverConfig:
    return SolverConfig(
        outer_tol=args.outer_tol,
        inner_tol=args.inner_tol,
        max_outer_iters=args.max_iters,
        max_inner_iters=args.max_inner_iters,
        direction=args.direction,
    )


def _manifest(args: argparse.Namespace, inputs: list[str], outputs: list[Path], started: float, **extra) -> None:
    record = {
        "command": args.command,
        "inputs": inputs,
        "k_paths": getattr(args, "k_paths", None),
        "outputs": [str(p) for p in outputs],
        "duration_s": round(time.perf_counter() - started, 3),
    }
    for key in ("outer_tol", "inner_tol", "max_iters", "max_inner_iters", "direction"):
        if hasattr(args, key):
            record[key] = getattr(args, key)
    record.update(extra)
    _write(args.out / "manifest.json", json.dumps(record, indent=2, sort_keys=True))


def cmd_solve(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    net, inputs = _load(args)
    pathset = build_pathset(net, args.k_paths)
    inst = HetGameInstance(net, pathset, args.alpha, _config(args))
    result = solve_hetgame(inst)
    opt_cost = result.total_cost if args.alpha == 0.0 else social_optimum(inst).total_cost
    report = price_report(inst, result, opt_cost)

    tag = f"{args.alpha:g}"
    eq_path = args.out / f"equilibrium_alpha{tag}.csv"
    rep_path = args.out / f"price_report_alpha{tag}.csv"
    _write(eq_path, result_to_csv(result, net, pathset))
    _write(rep_path, sweep_to_csv([report]))
    print(sweep_to_csv([report]), end="")
    _manifest(args, inputs, [eq_path, rep_path], started, alpha=args.alpha,
              converged=result.converged, outer_iters=result.outer_iters)
    if not result.converged:
        print(f"warning: alternation did not converge in {result.outer_iters} iterations", file=sys.stderr)
        return EXIT_UNCONVERGED
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    started = time.perf_counter()
    net, inputs = _load(args)
    pathset = build_pathset(net, args.k_paths)
    reports = alpha_sweep(net, pathset, args.alphas, _config(args), max_workers=args.workers)
    sweep_path = args.out / "sweep.csv"
    outputs = [sweep_path]
    _write(sweep_path, sweep_to_csv(reports))
    if args.plot_data:
        for name, attr in (("P_A", "price_of_alpha_anarchy"), ("P_G", "price_of_good_behavior")):
            rows = [f"{_fmt(r.alpha)} {_fmt(getattr(r, attr))}" for r in reports if getattr(r, attr) is not None]
            path = args.out / f"{name}.dat"
            _write(path, "\n".join(rows))
            outputs.append(path)
    failed = [r.alpha for r in reports if not r.converged]
    _manifest(args, inputs, outputs, started, alphas=args.alphas, unconverged=failed)
    print(sweep_to_csv(reports), end="")
    if failed:
        print(f"warning: no convergence at alpha in {failed}", file=sys.stderr)
        return EXIT_UNCONVERGED
    return EXIT_OK


def _two_link_report(inst: TwoLinkInstance) -> str:
    sol = solve_regimes(inst)
    fopt, clamped = social_opt_f2(inst, with_flag=True)
    p_a, p_g = two_link_prices(inst)
    l1, l2 = link_costs(inst, sol.flow)
    lines = [
        f"A = {_fmt(threshold_A(inst))}",
        f"f2opt = {_fmt(fopt)}" + (" (clamped)" if clamped else ""),
        f"alpha = {_fmt(inst.alpha)}",
        f"regime = {sol.regime.name}",
        f"x = ({_fmt(sol.x[0])}, {_fmt(sol.x[1])})",
        f"y = ({_fmt(sol.y[0])}, {_fmt(sol.y[1])})",
        f"flow = ({_fmt(sol.flow[0])}, {_fmt(sol.flow[1])})",
        f"link latency = ({_fmt(l1)}, {_fmt(l2)})",
        f"total cost = {_fmt(sol.total_cost)}",
        f"P_A = {_fmt(p_a)}",
        f"P_G = {_fmt(p_g)}",
    ]
    return "\n".join(lines) + "\n"


def cmd_two_link(args: argparse.Namespace) -> int:
    base = PRESETS[args.preset] if args.preset else REFERENCE_INSTANCE
    params = {k: getattr(args, k) if getattr(args, k) is not None else getattr(base, k) for k in ("a1", "b1", "a2", "b2")}
    try:
        inst = TwoLinkInstance(alpha=args.alpha, **params)
    except ModelAssumptionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(_two_link_report(inst), end="")
    if args.sweep is not None:
        rows = sweep_table(inst, np.asarray(args.sweep))
        cols = ["alpha", "x2", "y2", "f2", "total_cost", "P_A", "P_G"]
        text = "\n".join([",".join(cols)] + [",".join(_fmt(r[c]) for c in cols) for r in rows]) + "\n"
        if args.sweep_out:
            _write(args.sweep_out, text)
        else:
            print(text, end="")
    return EXIT_OK


def cmd_paths(args: argparse.Namespace) -> int:
    net, _ = _load(args)
    pathset: PathSet = build_pathset(net, args.k)
    text = format_path_dump(pathset, net.free_flow_costs())
    if args.out:
        _write(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetgame", description="Mixed selfish / planner-routed traffic equilibria.")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--seed-free", action="store_true", help=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one alpha and write flows and prices")
    _add_network_args(p)
    _add_solver_args(p)
    p.add_argument("--alpha", type=_alpha, required=True, help="anarchist fraction in [0, 1]")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="price of anarchy / good behaviour over a grid of alphas")
    _add_network_args(p)
    _add_solver_args(p)
    p.add_argument("--alphas", type=parse_alphas, default=parse_alphas("0:0.1:1"),
                   help="start:step:end or comma list (default 0:0.1:1)")
    p.add_argument("--plot-data", action="store_true", help="also write P_A.dat and P_G.dat")
    p.add_argument("--workers", type=int, default=None, help="solve alphas concurrently")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("two-link", help="closed-form two-link report")
    for name in ("a1", "b1", "a2", "b2"):
        p.add_argument(f"--{name}", type=float, default=None)
    p.add_argument("--preset", choices=sorted(PRESETS), help="start from a preset's parameters")
    p.add_argument("--alpha", type=_alpha, default=0.0)
    p.add_argument("--sweep", type=parse_alphas, default=None, help="also print a sweep table over these alphas")
    p.add_argument("--sweep-out", type=Path, default=None, help="write the sweep table here instead of stdout")
    p.set_defaults(func=cmd_two_link)

    p = sub.add_parser("paths", help="dump the k shortest zero-flow paths of every OD pair")
    _add_network_args(p)
    p.add_argument("--k", type=_positive_int, default=4)
    p.add_argument("--out", type=Path, default=None, help="output file (default stdout)")
    p.set_defaults(func=cmd_paths)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed_free:
        parser.error("--seed-free is reserved: the pipeline uses no randomness")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except argparse.ArgumentTypeError as exc:
        parser.error(str(exc))
    except (OSError, ParseError, NoPathError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
