# diot/solver.py
"""
Path-based Frank–Wolfe for nonatomic routing games.

  solve_equilibrium:  minimises the Beckmann potential Σ∫c_e + τ·x (tolled Wardrop equilibrium)
  solve_optimum:      minimises L = Σ x_e·c_e(x_e), i.e. an equilibrium under marginal costs
  social_cost / price_of_anarchy / check_wardrop

Every iteration: path costs at current loads → descent direction over path
flows → exact line search (bisection on the directional derivative).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.optimize import bisect

from diot.config import get_settings
from diot.cost_model import CostTable
from diot.errors import ZeroOptimumError
from diot.network_model import (
    DemandLike,
    LoadProfile,
    Network,
    PathFlow,
    PathSet,
    TollVector,
    as_demand,
    loads_from_flow,
)

logger = logging.getLogger(__name__)

USED_FLOW_FRACTION = 1e-6
WARDROP_TOL = 1e-6


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    relative_gap_tol: float = Field(1e-8, gt=0)
    max_iterations:   int   = Field(100_000, gt=0)
    line_search_tol:  float = Field(1e-12, gt=0)
    step_rule:        Literal["pairwise", "classic"] = "pairwise"
    path_cap:         int   = Field(10_000, gt=0)

    @classmethod
    def from_settings(cls) -> "SolverConfig":
        s = get_settings()
        return cls(
            relative_gap_tol=s.relative_gap_tol,
            max_iterations=s.max_iterations,
            line_search_tol=s.line_search_tol,
            step_rule=s.step_rule,
            path_cap=s.path_cap,
        )


@dataclass(frozen=True)
class SolveResult:
    path_flow:    PathFlow
    loads:        LoadProfile
    objective:    float
    relative_gap: float
    iterations:   int
    converged:    bool
    social_cost:  float
    objective_trace: np.ndarray = field(repr=False)


# ── Objectives ────────────────────────────────────────────────────────────────
@dataclass(frozen=True)
class _Problem:
    """Edge gradient and potential of one convex program over loads."""
    gradient:  Callable[[np.ndarray], np.ndarray]
    potential: Callable[[np.ndarray], float]


def _equilibrium_problem(table: CostTable, tolls: np.ndarray) -> _Problem:
    return _Problem(
        gradient=lambda x: table.value(x) + tolls,
        potential=lambda x: float(table.beckmann(x).sum() + tolls @ x),
    )


def _optimum_problem(table: CostTable) -> _Problem:
    return _Problem(
        gradient=table.marginal,
        potential=lambda x: float(table.social(x).sum()),
    )


def _resolve_config(config: Optional[SolverConfig]) -> SolverConfig:
    return config if config is not None else SolverConfig.from_settings()


def _toll_array(network: Network, tolls: Optional[TollVector]) -> np.ndarray:
    if tolls is None:
        return np.zeros(len(network.edges))
    if tuple(tolls.edge_ids) != network.edge_ids:
        return TollVector.from_mapping(network, tolls.as_dict()).values
    return np.asarray(tolls.values, dtype=float)


# ══════════════════════════════════════════════════════════════════════════════
#   FRANK–WOLFE CORE
# ══════════════════════════════════════════════════════════════════════════════

def _all_or_nothing(paths: PathSet, mu: np.ndarray, path_costs: np.ndarray, ids: Sequence[str]) -> np.ndarray:
    target = np.zeros(len(paths))
    for ci, cid in enumerate(ids):
        start, stop = paths.slices[cid]
        target[start + int(np.argmin(path_costs[start:stop]))] = mu[ci]
    return target


def _pairwise_direction(
    paths: PathSet, flow: np.ndarray, path_costs: np.ndarray, ids: Sequence[str]
) -> np.ndarray:
    """Per commodity: shift the flow of the costliest used path onto the cheapest path."""
    direction = np.zeros(len(paths))
    for cid in ids:
        start, stop = paths.slices[cid]
        costs = path_costs[start:stop]
        used = flow[start:stop] > 0
        if not used.any():
            continue
        toward = int(np.argmin(costs))
        masked = np.where(used, costs, -np.inf)
        away = int(np.argmax(masked))
        if away == toward or costs[away] <= costs[toward]:
            continue
        moved = flow[start + away]
        direction[start + away] -= moved
        direction[start + toward] += moved
    return direction


def _line_search(gradient, loads: np.ndarray, load_step: np.ndarray, tol: float) -> float:
    """Exact step on [0, 1]: root of g(θ) = ∇Φ(x + θ·dx)·dx, which is nondecreasing in θ."""
    moving = load_step != 0
    if not moving.any():
        return 0.0
    x0, dx = loads, load_step

    def slope(theta: float) -> float:
        return float(gradient(x0 + theta * dx)[moving] @ dx[moving])

    if slope(0.0) >= 0:
        return 0.0
    if slope(1.0) <= 0:
        return 1.0
    return float(bisect(slope, 0.0, 1.0, xtol=tol))


def _gap(flow: np.ndarray, path_costs: np.ndarray, mu: np.ndarray, paths: PathSet, ids: Sequence[str]) -> float:
    total = float(flow @ path_costs)
    lower = sum(
        mu[ci] * float(path_costs[slice(*paths.slices[cid])].min()) for ci, cid in enumerate(ids)
    )
    gap = total - lower
    return gap / total if total > 0 else gap


def _frank_wolfe(
    network: Network,
    paths: PathSet,
    mu: np.ndarray,
    problem: _Problem,
    config: SolverConfig,
    label: str,
) -> tuple[np.ndarray, float, int, bool, list[float]]:
    ids = network.commodity_ids
    A = paths.incidence

    flow = _all_or_nothing(paths, mu, A.T @ problem.gradient(np.zeros(len(network.edges))), ids)
    loads = A @ flow
    trace = [problem.potential(loads)]
    rel_gap = float("inf")

    for iteration in range(config.max_iterations + 1):
        path_costs = A.T @ problem.gradient(loads)
        rel_gap = _gap(flow, path_costs, mu, paths, ids)
        if rel_gap <= config.relative_gap_tol:
            logger.debug("%s converged after %d iterations (gap=%.3e)", label, iteration, rel_gap)
            return flow, rel_gap, iteration, True, trace
        if iteration == config.max_iterations:
            break

        if config.step_rule == "pairwise":
            direction = _pairwise_direction(paths, flow, path_costs, ids)
        else:
            direction = _all_or_nothing(paths, mu, path_costs, ids) - flow

        theta = _line_search(problem.gradient, loads, A @ direction, config.line_search_tol)
        if theta == 0.0:
            logger.debug("%s stalled at iteration %d (gap=%.3e)", label, iteration, rel_gap)
            break

        flow = np.maximum(flow + theta * direction, 0.0)
        loads = A @ flow
        trace.append(problem.potential(loads))

    logger.warning(
        "%s did not reach relative gap %.1e (gap=%.3e after %d iterations)",
        label, config.relative_gap_tol, rel_gap, min(iteration, config.max_iterations),
    )
    return flow, rel_gap, iteration, False, trace


def _solve(
    network: Network,
    demand: DemandLike,
    problem_for: Callable[[CostTable], _Problem],
    config: Optional[SolverConfig],
    label: str,
) -> SolveResult:
    config = _resolve_config(config)
    mu = as_demand(network, demand).as_array(network)
    paths = network.path_set(config.path_cap)
    table = CostTable.for_network(network)
    problem = problem_for(table)

    flow, rel_gap, iterations, converged, trace = _frank_wolfe(network, paths, mu, problem, config, label)
    path_flow = PathFlow(paths, flow)
    loads = loads_from_flow(network, path_flow)
    result = SolveResult(
        path_flow       = path_flow,
        loads           = loads,
        objective       = problem.potential(loads.values),
        relative_gap    = rel_gap,
        iterations      = iterations,
        converged       = converged,
        social_cost     = float(table.social(loads.values).sum()),
        objective_trace = np.asarray(trace),
    )
    return result


# ══════════════════════════════════════════════════════════════════════════════
#   PUBLIC API
# ══════════════════════════════════════════════════════════════════════════════

def solve_equilibrium(
    network: Network,
    demand: DemandLike,
    tolls: Optional[TollVector] = None,
    config: Optional[SolverConfig] = None,
) -> SolveResult:
    """Wardrop equilibrium of the game with edge costs c_e + τ_e."""
    toll_values = _toll_array(network, tolls)
    return _solve(
        network, demand, lambda table: _equilibrium_problem(table, toll_values), config, "equilibrium"
    )


def solve_optimum(
    network: Network,
    demand: DemandLike,
    config: Optional[SolverConfig] = None,
) -> SolveResult:
    """System optimum: the equilibrium under marginal costs c_e + x_e·c_e′."""
    return _solve(network, demand, _optimum_problem, config, "optimum")


def social_cost(network: Network, path_flow: PathFlow | Sequence[float]) -> float:
    """L(f) = Σ_e x_e·c_e(x_e); tolls never enter."""
    loads = loads_from_flow(network, path_flow)
    return float(CostTable.for_network(network).social(loads.values).sum())


def price_of_anarchy(
    network: Network,
    demand: DemandLike,
    config: Optional[SolverConfig] = None,
) -> float:
    eq = solve_equilibrium(network, demand, config=config)
    opt = solve_optimum(network, demand, config=config)
    l_eq, l_opt = eq.social_cost, opt.social_cost
    if l_opt <= 0:
        raise ZeroOptimumError("optimum social cost is zero; the price of anarchy is undefined")
    logger.info("PoA = %.6f (L_eq=%.6g, L_opt=%.6g)", l_eq / l_opt, l_eq, l_opt)
    return l_eq / l_opt


@dataclass(frozen=True)
class WardropCheck:
    max_excess: float                 # worst used-path cost above its commodity minimum
    excess:     dict[str, float]      # per commodity
    ok:         bool


def check_wardrop(
    network: Network,
    result: SolveResult,
    tolls: Optional[TollVector] = None,
    marginal: bool = False,
) -> WardropCheck:
    """
    Every path carrying more than 1e-6·μ^i must cost at most min + 1e-6·(1 + |min|).
    marginal=True checks the optimum's condition under marginal costs.
    """
    paths = result.path_flow.path_set
    table = CostTable.for_network(network)
    x = result.loads.values
    edge_costs = table.marginal(x) if marginal else table.value(x) + _toll_array(network, tolls)
    path_costs = paths.incidence.T @ edge_costs
    flow = result.path_flow.values

    excess: dict[str, float] = {}
    ok = True
    for cid in network.commodity_ids:
        start, stop = paths.slices[cid]
        f, costs = flow[start:stop], path_costs[start:stop]
        mu = f.sum()
        best = float(costs.min())
        used = f > USED_FLOW_FRACTION * mu
        worst = float((costs[used] - best).max()) if used.any() else 0.0
        excess[cid] = worst
        if worst > WARDROP_TOL * (1.0 + abs(best)):
            ok = False
    return WardropCheck(max(excess.values(), default=0.0), excess, ok)
