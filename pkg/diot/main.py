# diot/main.py
"""
Command-line entry point.

    python -m diot paths pigou
    python -m diot poa pigou --demand c1=1
    python -m diot diot cyclic --method lp --nonneg
    python -m diot verify pigou --tolls pigou_half.toll --grid 0.05:2:40

Exit codes: 0 success / pass, 1 error or fail, 2 inconclusive verification.
Errors print one stderr line: "<CODE> <detail>".
"""
from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from diot.analysis import (
    budget_check,
    default_grid,
    estimate_used_paths,
    no_diot_search,
    sweep,
    verify_diot,
)
from diot.config import get_settings
from diot.errors import DiotError
from diot.network_io import (
    dump_tolls,
    load_network,
    load_tolls,
    parse_demand,
    parse_grid,
    parse_range,
    parse_values,
    write_sweep_csv,
)
from diot.network_model import Network
from diot.solver import SolveResult, price_of_anarchy, solve_equilibrium, solve_optimum
from diot.tolls import (
    budget_construction,
    build_constraint_system,
    marginal_cost_tolls,
    nonnegative_construction,
    solve_diot_lp,
    trivial_diot,
)

logger = logging.getLogger(__name__)


def _fmt(value: float) -> str:
    return f"{value:.12g}"


def _grid(args: argparse.Namespace, network: Network):
    return parse_grid(args.grid, network) if args.grid else default_grid(network)


def _tolls(args: argparse.Namespace, network: Network):
    if not getattr(args, "tolls", None):
        return None
    tolls, defaulted = load_tolls(args.tolls, network)
    if defaulted:
        print(f"defaulted-to-zero: {','.join(defaulted)}")
    return tolls


def _emit_tolls(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        logger.info("Wrote tolls to %s", out)
    else:
        sys.stdout.write(text)


# ── Solving ───────────────────────────────────────────────────────────────────
def cmd_paths(args: argparse.Namespace) -> int:
    network = load_network(args.network)
    paths = network.path_set(get_settings().path_cap)
    for com in network.commodities:
        for path in paths.for_commodity(com.id):
            print(f"{com.id}\t{'>'.join(path.edges)}")
    return 0


def _print_result(network: Network, result: SolveResult) -> None:
    for edge_id, load in result.loads.as_dict().items():
        print(f"load\t{edge_id}\t{_fmt(load)}")
    for label, flow in result.path_flow.as_dict().items():
        print(f"flow\t{label}\t{_fmt(flow)}")
    print(f"social_cost\t{_fmt(result.social_cost)}")
    print(f"relative_gap\t{result.relative_gap:.3e}")
    print(f"converged\t{str(result.converged).lower()}")


def cmd_equilibrium(args: argparse.Namespace) -> int:
    network = load_network(args.network)
    demand = parse_demand(args.demand, network)
    _print_result(network, solve_equilibrium(network, demand, _tolls(args, network)))
    return 0


def cmd_optimum(args: argparse.Namespace) -> int:
    network = load_network(args.network)
    _print_result(network, solve_optimum(network, parse_demand(args.demand, network)))
    return 0


def cmd_poa(args: argparse.Namespace) -> int:
    network = load_network(args.network)
    print(_fmt(price_of_anarchy(network, parse_demand(args.demand, network))))
    return 0


# ── Tolls ─────────────────────────────────────────────────────────────────────
def cmd_diot(args: argparse.Namespace) -> int:
    network = load_network(args.network)
    certificate: list[str] = []

    if args.method == "trivial":
        tolls = trivial_diot(network)
    elif args.method in ("nonneg", "budget"):
        build = nonnegative_construction if args.method == "nonneg" else budget_construction
        construction = build(network)
        tolls = construction.tolls
        certificate = [
            f"order\t{','.join(construction.order)}",
            f"delta\t{','.join(str(int(d)) for d in construction.delta)}",
            f"xi\t{_fmt(construction.xi)}",
            f"chi\t{_fmt(construction.chi)}",
            f"gamma\t{_fmt(construction.gamma)}",
            "delta_per_commodity\t" + ",".join(
                f"{c}={d}" for c, d in construction.delta_per_commodity.items()
            ),
        ]
    else:
        used = estimate_used_paths(network, _grid(args, network))
        system = build_constraint_system(network, used)
        free = [e.strip() for e in args.free_edges.split(",")] if args.free_edges else None
        outcome = solve_diot_lp(
            system,
            require_nonnegative=args.nonneg,
            objective="minimize_total_toll" if args.minimize_total else "feasibility",
            free_edges=free,
        )
        if outcome.status == "infeasible":
            detail = outcome.certificate.describe() if outcome.certificate else ""
            print(f"INFEASIBLE {detail}".rstrip())
            return 1
        if outcome.status == "unbounded":
            print("UNBOUNDED total toll is unbounded below")
            return 1
        tolls = outcome.tolls
        certificate = [f"lp_status\t{outcome.status}"]

    stream = sys.stdout if args.out else sys.stderr
    for line in certificate:
        print(line, file=stream)
    _emit_tolls(dump_tolls(tolls), args.out)
    return 0


def cmd_marginal(args: argparse.Namespace) -> int:
    network = load_network(args.network)
    tolls = marginal_cost_tolls(network, parse_demand(args.demand, network))
    _emit_tolls(dump_tolls(tolls), args.out)
    return 0


# ── Sweeps ────────────────────────────────────────────────────────────────────
def cmd_verify(args: argparse.Namespace) -> int:
    network = load_network(args.network)
    tolls = _tolls(args, network)
    report = verify_diot(network, tolls, _grid(args, network), rel_tol=args.rel_tol, n_jobs=args.n_jobs)
    worst = report.worst
    print(f"{report.verdict.upper()} points={len(report.points)} worst_rel_gap={worst.rel_gap:.3e} "
          f"at " + ",".join(f"{c}={_fmt(v)}" for c, v in worst.demand.items()))
    return report.exit_code


def cmd_sweep(args: argparse.Namespace) -> int:
    network = load_network(args.network)
    frame = sweep(network, _grid(args, network), tolls=_tolls(args, network), marginal=args.marginal)
    write_sweep_csv(frame, args.out if args.out and args.out != "-" else sys.stdout)
    return 0


def cmd_no_diot(args: argparse.Namespace) -> int:
    network = load_network(args.network)
    demands = parse_values(args.grid) if args.grid else default_grid(network)
    result = no_diot_search(network, parse_range(args.toll_range), demands)
    print(f"best_toll\t{_fmt(result.best_toll)}")
    print(f"minmax_gap\t{result.minmax_gap:.6e}")
    return 0


def cmd_budget(args: argparse.Namespace) -> int:
    network = load_network(args.network)
    check = budget_check(network, _tolls(args, network))
    for label, total in check.sums.items():
        print(f"path\t{label}\t{_fmt(total)}")
    print(f"{'PASS' if check.passed else 'FAIL'} min={_fmt(check.minimum)} on {check.worst_path}")
    return 0 if check.passed else 1


# ══════════════════════════════════════════════════════════════════════════════
#   PARSER
# ══════════════════════════════════════════════════════════════════════════════

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diot",
        description="Wardrop equilibria, system optima and demand-independent optimal tolls.",
    )
    parser.add_argument("--log-level", default=None, help="logging level (default from DIOT_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, handler, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("network", help="network file or bundled fixture name (e.g. fixtures/pigou)")
        p.set_defaults(handler=handler)
        return p

    command("paths", cmd_paths, "list enumerated paths per commodity")

    for name, handler, text in (
        ("equilibrium", cmd_equilibrium, "tolled or untolled Wardrop equilibrium"),
        ("optimum", cmd_optimum, "system optimum"),
        ("poa", cmd_poa, "price of anarchy"),
    ):
        p = command(name, handler, text)
        p.add_argument("--demand", required=True, help="e.g. c1=1,c2=0.5")
        if name == "equilibrium":
            p.add_argument("--tolls", help="toll document")

    p = command("diot", cmd_diot, "construct a demand-independent optimal toll")
    p.add_argument("--method", choices=["trivial", "nonneg", "budget", "lp"], default="trivial")
    p.add_argument("--nonneg", action="store_true", help="lp: require τ ≥ 0")
    p.add_argument("--minimize-total", action="store_true", help="lp: minimise Σ τ_e")
    p.add_argument("--free-edges", help="lp: comma-separated edges allowed a toll (others fixed at 0)")
    p.add_argument("--grid", help="lp: demand grid for used-path estimation")
    p.add_argument("--out", help="write the toll document here")

    p = command("marginal", cmd_marginal, "marginal-cost tolls for one demand")
    p.add_argument("--demand", required=True)
    p.add_argument("--out")

    p = command("verify", cmd_verify, "check that tolls are optimal on a demand grid")
    p.add_argument("--tolls", help="toll document (omit for no tolls)")
    p.add_argument("--grid", help="lo:hi:count, a,b,c or c1=...;c2=...")
    p.add_argument("--rel-tol", type=float, default=None)
    p.add_argument("--n-jobs", type=int, default=None)

    p = command("sweep", cmd_sweep, "per-demand CSV of optimum vs equilibrium costs")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--tolls")
    group.add_argument("--marginal", action="store_true", help="marginal-cost tolls at every point")
    p.add_argument("--grid")
    p.add_argument("--out", help="CSV path, '-' for stdout")

    p = command("no-diot", cmd_no_diot, "min-max gap search over tolls on two parallel links")
    p.add_argument("--toll-range", required=True, help="a:b:step")
    p.add_argument("--grid", help="demand values")

    p = command("budget", cmd_budget, "per-path toll sums (budget certificate)")
    p.add_argument("--tolls", required=True)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = args.log_level or get_settings().log_level
    logging.basicConfig(
        level=getattr(logging, str(level).upper(), logging.INFO),
        format="%(asctime)s | %(levelname)s | %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.handler(args)
    except DiotError as exc:
        print(f"{exc.code} {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"NOT_FOUND {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
