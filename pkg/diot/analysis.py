# diot/analysis.py
"""
Demand-grid sweeps over a routing game.

  DemandGrid / default_grid:   where to look
  estimate_used_paths:         paths used by some optimum on the grid (with refinement)
  verify_diot:                 tolled equilibrium vs optimum at every grid point
  scan_equilibria:             brute-force scan of the tolled equilibrium set on small networks
  sweep:                       per-demand table (fixed tolls, no tolls, or marginal-cost tolls)
  budget_check:                per-path toll sums
  no_diot_search:              min-max optimality gap over constant tolls on two parallel links
"""
from __future__ import annotations

import logging
from collections.abc import Iterator, Mapping
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations, product
from math import comb
from typing import Literal, Optional, Sequence, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.optimize import brentq

from diot.config import get_settings
from diot.cost_model import CostTable, cost_terms
from diot.errors import DomainError, GridError, WrongShapeError
from diot.network_model import DemandVector, Network, Path, TollVector
from diot.solver import SolverConfig, solve_equilibrium, solve_optimum
from diot.tolls import marginal_cost_tolls

logger = logging.getLogger(__name__)

REL_GAP_FLOOR = 1e-12
BUDGET_TOL = 1e-9


# ══════════════════════════════════════════════════════════════════════════════
#   DEMAND GRIDS
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class DemandGrid:
    """Demand vectors as rows of `vectors`, columns in commodity order."""
    commodity_ids: tuple[str, ...]
    vectors:       np.ndarray

    def __post_init__(self):
        if self.vectors.ndim != 2 or self.vectors.shape[0] == 0:
            raise GridError("demand grid is empty")
        if self.vectors.shape[1] != len(self.commodity_ids):
            raise GridError(
                f"demand grid has {self.vectors.shape[1]} columns for {len(self.commodity_ids)} commodities"
            )
        if not np.all(np.isfinite(self.vectors)) or (self.vectors < 0).any():
            raise GridError("demand grid entries must be finite and ≥ 0")

    @classmethod
    def product(
        cls,
        network: Network,
        values: Union[Sequence[float], Mapping[str, Sequence[float]]],
        max_points: Optional[int] = None,
    ) -> "DemandGrid":
        """Cartesian product of per-commodity values; a plain sequence applies to every commodity."""
        ids = network.commodity_ids
        if isinstance(values, Mapping):
            missing = sorted(set(ids) - set(values))
            unknown = sorted(set(values) - set(ids))
            if missing or unknown:
                raise GridError(f"grid keys mismatch (missing={missing}, unknown={unknown})")
            axes = [list(map(float, values[c])) for c in ids]
        else:
            axes = [list(map(float, values)) for _ in ids]
        if any(not axis for axis in axes):
            raise GridError("every commodity needs at least one demand value")

        cap = max_points or get_settings().max_grid_points
        size = int(np.prod([len(axis) for axis in axes]))
        if size > cap:
            raise GridError(f"product grid has {size} points, above the cap of {cap}")
        return cls(ids, np.array(list(product(*axes)), dtype=float).reshape(size, len(ids)))

    @classmethod
    def from_vectors(
        cls,
        network: Network,
        vectors: Sequence[Union[Mapping[str, float], Sequence[float]]],
    ) -> "DemandGrid":
        ids = network.commodity_ids
        rows = []
        for vec in vectors:
            if isinstance(vec, Mapping):
                if set(vec) != set(ids):
                    raise GridError(f"demand vector keys {sorted(vec)} do not match commodities {list(ids)}")
                rows.append([float(vec[c]) for c in ids])
            else:
                rows.append([float(v) for v in vec])
        if not rows:
            raise GridError("demand grid is empty")
        return cls(ids, np.array(rows, dtype=float))

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def __iter__(self) -> Iterator[DemandVector]:
        for row in self.vectors:
            yield self.demand(row)

    def demand(self, row: np.ndarray) -> DemandVector:
        return DemandVector({c: float(v) for c, v in zip(self.commodity_ids, row)})


def _path_load_cost(table: CostTable, incidence: np.ndarray, p: int, load: float) -> float:
    return float(table.value(incidence[:, p] * load) @ incidence[:, p])


def demand_scale(network: Network, commodity_id: str) -> float:
    """
    Demand at which the cheapest free-flow path, carrying it alone, costs as
    much as the most expensive free-flow path. Falls back to 1.
    """
    paths = network.path_set(get_settings().path_cap)
    table = CostTable.for_network(network)
    A = paths.incidence
    start, stop = paths.slices[commodity_id]
    free_flow = (table.value(np.zeros(len(network.edges))) @ A)[start:stop]
    cheapest = start + int(np.argmin(free_flow))
    target = float(free_flow.max())
    if target - float(free_flow.min()) <= 0:
        return 1.0

    def excess(mu: float) -> float:
        return _path_load_cost(table, A, cheapest, mu) - target

    hi = 1.0
    for _ in range(60):
        if excess(hi) > 0:
            return float(brentq(excess, 0.0, hi))
        hi *= 2.0
    return 1.0


def default_grid(network: Network, points: Optional[int] = None) -> DemandGrid:
    """
    Log-spaced demands over [grid_low, grid_high]·scale per commodity.
    Product grid up to max_product_commodities (point count trimmed to the
    cap), a shared diagonal beyond that.
    """
    s = get_settings()
    points = points or s.grid_points
    ids = network.commodity_ids
    base = np.logspace(np.log10(s.grid_low), np.log10(s.grid_high), points)
    scales = {c: demand_scale(network, c) for c in ids}

    if len(ids) <= s.max_product_commodities:
        per_axis = min(points, int(np.floor(s.max_grid_points ** (1.0 / len(ids)) + 1e-9)))
        if per_axis < points:
            base = np.logspace(np.log10(s.grid_low), np.log10(s.grid_high), per_axis)
        return DemandGrid.product(network, {c: base * scales[c] for c in ids})
    return DemandGrid(ids, np.column_stack([base * scales[c] for c in ids]))


# ══════════════════════════════════════════════════════════════════════════════
#   USED PATHS
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class UsedPathSet(Mapping):
    """Commodity id → paths carrying optimal flow somewhere on the grid."""
    by_commodity: dict[str, tuple[Path, ...]]

    def __getitem__(self, commodity_id: str) -> tuple[Path, ...]:
        return self.by_commodity[commodity_id]

    def __iter__(self):
        return iter(self.by_commodity)

    def __len__(self) -> int:
        return len(self.by_commodity)

    def labels(self) -> dict[str, list[str]]:
        return {c: [p.label for p in ps] for c, ps in self.by_commodity.items()}


def _support(network: Network, mu: np.ndarray, epsilon: float, config: Optional[SolverConfig]) -> frozenset[int]:
    result = solve_optimum(network, dict(zip(network.commodity_ids, mu)), config)
    paths = result.path_flow.path_set
    flow = result.path_flow.values
    support = set()
    for ci, cid in enumerate(network.commodity_ids):
        if mu[ci] <= 0:
            continue
        for p in paths.indices(cid):
            if flow[p] > epsilon * mu[ci]:
                support.add(p)
    return frozenset(support)


def estimate_used_paths(
    network: Network,
    grid: Optional[DemandGrid] = None,
    support_epsilon: Optional[float] = None,
    refine_levels: Optional[int] = None,
    config: Optional[SolverConfig] = None,
) -> UsedPathSet:
    s = get_settings()
    grid = grid if grid is not None else default_grid(network)
    eps = support_epsilon if support_epsilon is not None else s.support_epsilon
    levels = refine_levels if refine_levels is not None else s.refine_levels

    supports = [_support(network, mu, eps, config) for mu in grid.vectors]
    used = set().union(*supports)

    def refine(lo: np.ndarray, hi: np.ndarray, s_lo: frozenset, s_hi: frozenset, depth: int) -> None:
        if depth == 0 or s_lo == s_hi:
            return
        mid = 0.5 * (lo + hi)
        s_mid = _support(network, mid, eps, config)
        used.update(s_mid)
        refine(lo, mid, s_lo, s_mid, depth - 1)
        refine(mid, hi, s_mid, s_hi, depth - 1)

    for k in range(len(grid) - 1):
        refine(grid.vectors[k], grid.vectors[k + 1], supports[k], supports[k + 1], levels)

    paths = network.path_set(config.path_cap if config else s.path_cap)
    by_commodity = {
        cid: tuple(paths.paths[p] for p in paths.indices(cid) if p in used)
        for cid in network.commodity_ids
    }
    logger.info(
        "Used paths: %s",
        "; ".join(f"{c}={len(ps)}/{len(paths.indices(c))}" for c, ps in by_commodity.items()),
    )
    return UsedPathSet(by_commodity)


# ══════════════════════════════════════════════════════════════════════════════
#   EQUILIBRIUM-SET SCAN
# ══════════════════════════════════════════════════════════════════════════════

@lru_cache(maxsize=64)
def simplex_grid(parts: int, n: int) -> np.ndarray:
    """All points of {w ≥ 0, Σw = 1} with coordinates in multiples of 1/n."""
    rows = []
    for bars in combinations(range(n + parts - 1), parts - 1):
        edges = (-1,) + bars + (n + parts - 1,)
        rows.append([edges[k + 1] - edges[k] - 1 for k in range(parts)])
    grid = np.array(rows, dtype=float).reshape(-1, parts) / n
    grid.flags.writeable = False
    return grid


def _scan_steps(sizes: Sequence[int], resolution: float, max_points: int) -> int:
    n = max(1, int(round(1.0 / resolution)))
    while n > 1 and int(np.prod([comb(n + k - 1, k - 1) for k in sizes])) > max_points:
        n -= 1
    return n


@dataclass(frozen=True)
class ScanResult:
    resolution: float
    points:     int
    admitted:   int                     # points inside the potential window
    worst_gap:  float
    allowance:  float = 0.0             # relative social-cost error of rounding onto the grid
    skipped:    bool = False


def scan_equilibria(
    network: Network,
    tolls: Optional[TollVector],
    demand: DemandVector,
    l_opt: float,
    resolution: Optional[float] = None,
    max_points: Optional[int] = None,
) -> ScanResult:
    """
    Enumerate path flows on a simplex grid and keep those whose tolled
    Beckmann potential is within the grid's discretisation error of the
    smallest one. Tolled equilibria are exactly the potential minimisers, so
    these are the grid's Wardrop flows. Reports the worst relative gap of
    their social cost over l_opt, with the social-cost error that rounding
    onto the grid can explain.
    """
    s = get_settings()
    resolution = resolution or s.scan_resolution
    max_points = max_points or s.scan_max_points
    paths = network.path_set(s.path_cap)
    A = paths.incidence
    table = CostTable.for_network(network)
    mu = demand.as_array(network)
    tau = np.zeros(len(network.edges)) if tolls is None else tolls.values

    ids = network.commodity_ids
    sizes = [len(paths.indices(c)) if mu[i] > 0 else 1 for i, c in enumerate(ids)]
    n = _scan_steps(sizes, resolution, max_points)
    h = 1.0 / n
    if h > s.scan_coarsest:
        logger.warning("Equilibrium scan skipped: grid step %.3g is coarser than %.3g", h, s.scan_coarsest)
        return ScanResult(h, 0, 0, 0.0, skipped=True)

    # per-commodity flow blocks, combined as a Cartesian product
    flows = np.zeros((1, len(paths)))
    for i, cid in enumerate(ids):
        start, stop = paths.slices[cid]
        if mu[i] > 0:
            block = simplex_grid(stop - start, n) * mu[i]
        else:
            block = np.zeros((1, stop - start))
        padded = np.zeros((block.shape[0], len(paths)))
        padded[:, start:stop] = block
        flows = (flows[:, None, :] + padded[None, :, :]).reshape(-1, len(paths))

    loads = flows @ A.T
    potential = table.beckmann(loads).sum(axis=1) + loads @ tau
    best = int(np.argmin(potential))
    # rounding an equilibrium onto the grid moves loads by about h·max μ and
    # the potential grows quadratically away from its minimisers
    step = h * float(mu.max())
    allowance = float(table.derivative(loads[best] + step) @ np.full(len(network.edges), step ** 2))
    admitted = potential <= potential[best] + allowance + 1e-12

    scale = max(l_opt, REL_GAP_FLOOR)
    social = table.social(loads[admitted]).sum(axis=1)
    worst = float(((social - l_opt) / scale).max())
    # moving step of load on an edge changes x·c(x) by at most step·marginal cost
    slack = float(table.marginal(loads[best] + step).sum()) * step / scale
    return ScanResult(h, flows.shape[0], int(admitted.sum()), max(worst, 0.0), slack)


def _scan_eligible(network: Network) -> bool:
    paths = network.path_set(get_settings().path_cap)
    return all(len(paths.indices(c)) <= 4 for c in network.commodity_ids)


# ══════════════════════════════════════════════════════════════════════════════
#   VERIFICATION
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class SweepPoint:
    demand:    dict[str, float]
    l_opt:     float
    l_eq:      float
    abs_gap:   float
    rel_gap:   float
    converged: bool
    passed:    bool
    scan_gap:  Optional[float] = None


Verdict = Literal["pass", "fail", "inconclusive"]


@dataclass(frozen=True)
class SweepReport:
    points:  tuple[SweepPoint, ...]
    rel_tol: float
    verdict: Verdict
    worst:   SweepPoint

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    @property
    def exit_code(self) -> int:
        return {"pass": 0, "fail": 1, "inconclusive": 2}[self.verdict]

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for pt in self.points:
            row = {f"demand_{c}": v for c, v in pt.demand.items()}
            row.update(
                L_opt=pt.l_opt, L_eq=pt.l_eq, abs_gap=pt.abs_gap, rel_gap=pt.rel_gap,
                converged=pt.converged, passed=pt.passed,
            )
            rows.append(row)
        return pd.DataFrame(rows)


def _evaluate_point(
    network: Network,
    tolls: Optional[TollVector],
    demand: DemandVector,
    rel_tol: float,
    config: Optional[SolverConfig],
    scan: bool,
) -> SweepPoint:
    eq = solve_equilibrium(network, demand, tolls, config)
    opt = solve_optimum(network, demand, config)
    l_eq, l_opt = eq.social_cost, opt.social_cost
    abs_gap = l_eq - l_opt
    rel_gap = abs_gap / max(l_opt, REL_GAP_FLOOR)
    converged = eq.converged and opt.converged

    scan_gap = None
    passed = converged and rel_gap <= rel_tol
    if scan and passed:
        result = scan_equilibria(network, tolls, demand, l_opt)
        if not result.skipped:
            scan_gap = result.worst_gap
            passed = scan_gap <= rel_tol + result.allowance
    logger.debug("μ=%s L_opt=%.9g L_eq=%.9g rel_gap=%.3e", demand.values, l_opt, l_eq, rel_gap)
    return SweepPoint(
        demand    = dict(demand.values),
        l_opt     = l_opt,
        l_eq      = l_eq,
        abs_gap   = abs_gap,
        rel_gap   = rel_gap,
        converged = converged,
        passed    = passed,
        scan_gap  = scan_gap,
    )


def _run_points(fn, items: Sequence, n_jobs: Optional[int]) -> list:
    jobs = n_jobs if n_jobs is not None else get_settings().n_jobs
    if jobs == 1 or len(items) < 2:
        return [fn(item) for item in items]
    # joblib preserves input order in its output list
    return Parallel(n_jobs=jobs)(delayed(fn)(item) for item in items)


class _PointTask:
    """Picklable per-point callable for joblib workers."""

    def __init__(self, network, tolls, rel_tol, config, scan):
        self.network, self.tolls, self.rel_tol, self.config, self.scan = network, tolls, rel_tol, config, scan

    def __call__(self, demand: DemandVector) -> SweepPoint:
        return _evaluate_point(self.network, self.tolls, demand, self.rel_tol, self.config, self.scan)


def verify_diot(
    network: Network,
    tolls: Optional[TollVector],
    grid: Optional[DemandGrid] = None,
    rel_tol: Optional[float] = None,
    config: Optional[SolverConfig] = None,
    n_jobs: Optional[int] = None,
    scan: bool = True,
) -> SweepReport:
    """
    Pass iff at every grid point the tolled equilibrium's social cost is
    within rel_tol of the optimum. Non-converged points make the verdict
    inconclusive; on networks with ≤ 4 paths per commodity the equilibrium
    set is also scanned by brute force.
    """
    rel_tol = rel_tol if rel_tol is not None else get_settings().verify_rel_tol
    grid = grid if grid is not None else default_grid(network)
    scan = scan and _scan_eligible(network)

    task = _PointTask(network, tolls, rel_tol, config, scan)
    points = tuple(_run_points(task, list(grid), n_jobs))

    failed = [p for p in points if p.converged and not p.passed]
    unconverged = [p for p in points if not p.converged]
    verdict: Verdict = "fail" if failed else "inconclusive" if unconverged else "pass"
    worst = max(points, key=lambda p: p.rel_gap)
    if failed:
        worst = max(failed, key=lambda p: max(p.rel_gap, p.scan_gap or 0.0))

    logger.info(
        "Verification %s over %d points (worst rel_gap=%.3e at μ=%s)",
        verdict.upper(), len(points), worst.rel_gap, worst.demand,
    )
    return SweepReport(points, rel_tol, verdict, worst)


# ══════════════════════════════════════════════════════════════════════════════
#   SWEEPS & BUDGET
# ══════════════════════════════════════════════════════════════════════════════

def sweep(
    network: Network,
    grid: DemandGrid,
    tolls: Optional[TollVector] = None,
    marginal: bool = False,
    config: Optional[SolverConfig] = None,
) -> pd.DataFrame:
    """
    One row per demand vector: demand_<commodity>, L_opt, L_eq, abs_gap,
    rel_gap, converged; marginal=True adds toll_<edge> columns and solves
    each equilibrium under that point's marginal-cost tolls.
    """
    if marginal and tolls is not None:
        raise ValueError("fixed tolls and marginal-cost tolls are mutually exclusive")

    rows = []
    for demand in grid:
        point_tolls = marginal_cost_tolls(network, demand, config) if marginal else tolls
        eq = solve_equilibrium(network, demand, point_tolls, config)
        opt = solve_optimum(network, demand, config)
        l_eq, l_opt = eq.social_cost, opt.social_cost
        row = {f"demand_{c}": v for c, v in demand.values.items()}
        row.update(
            L_opt     = l_opt,
            L_eq      = l_eq,
            abs_gap   = l_eq - l_opt,
            rel_gap   = (l_eq - l_opt) / max(l_opt, REL_GAP_FLOOR),
            converged = eq.converged and opt.converged,
        )
        if marginal:
            row.update({f"toll_{e}": v for e, v in point_tolls.as_dict().items()})
        rows.append(row)
    return pd.DataFrame(rows)


@dataclass(frozen=True)
class BudgetCheck:
    sums:       dict[str, float]      # path label → Σ τ_e
    worst_path: str
    minimum:    float
    passed:     bool


def budget_check(network: Network, tolls: TollVector) -> BudgetCheck:
    """Every path's toll sum ≥ −1e-9 implies Σ τ_e x_e ≥ 0 for every feasible flow."""
    paths = network.path_set(get_settings().path_cap)
    sums = paths.incidence.T @ tolls.values
    worst = int(np.argmin(sums))
    check = BudgetCheck(
        sums       = {p.label: float(v) for p, v in zip(paths.paths, sums)},
        worst_path = paths.paths[worst].label,
        minimum    = float(sums[worst]),
        passed     = bool(sums[worst] >= -BUDGET_TOL),
    )
    logger.info("Budget check %s (min path toll sum %.6g on %s)",
                "PASS" if check.passed else "FAIL", check.minimum, check.worst_path)
    return check


# ══════════════════════════════════════════════════════════════════════════════
#   TWO-LINK NO-DIOT SEARCH
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class NoDiotResult:
    best_toll:  float
    minmax_gap: float
    max_gaps:   np.ndarray = field(repr=False)   # worst gap per toll in toll_grid


def _require_two_links(network: Network) -> None:
    if len(network.edges) != 2 or len(network.commodities) != 1:
        raise WrongShapeError("expected exactly two edges and one commodity")
    com = network.commodities[0]
    for edge in network.edges:
        if (edge.tail, edge.head) != (com.origin, com.destination):
            raise WrongShapeError(f"edge {edge.id!r} is not a parallel {com.origin}→{com.destination} link")
        if any(c > 0 and 0 < e < 1 for c, e in cost_terms(edge.cost, network.beta)):
            raise DomainError(f"edge {edge.id!r} has an exponent below 1")


def _split(table: CostTable, mu: np.ndarray, shift: np.ndarray, marginal: bool, iterations: int = 60) -> np.ndarray:
    """
    Load on link 1 where link costs (plus `shift` on link 1) equalise, or a
    corner when one link dominates. Vectorised bisection; shapes broadcast.
    """
    mu, shift = np.broadcast_arrays(mu, shift)
    evaluate = table.marginal if marginal else table.value

    def imbalance(x1: np.ndarray) -> np.ndarray:
        costs = evaluate(np.stack([x1, mu - x1], axis=-1))
        return costs[..., 0] + shift - costs[..., 1]

    lo, hi = np.zeros_like(mu, dtype=float), mu.astype(float).copy()
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        right = imbalance(mid) < 0
        lo = np.where(right, mid, lo)
        hi = np.where(right, hi, mid)
    x1 = 0.5 * (lo + hi)
    x1 = np.where(imbalance(np.zeros_like(mu, dtype=float)) >= 0, 0.0, x1)
    return np.where(imbalance(mu.astype(float)) <= 0, mu, x1)


def no_diot_search(
    network: Network,
    toll_grid: Sequence[float],
    demand_grid: Union[DemandGrid, Sequence[float]],
) -> NoDiotResult:
    """
    For each constant toll τ on link 1 (link 2 untolled), the worst relative
    gap between the tolled equilibrium and the optimum over the demands; the
    toll minimising that worst gap.
    """
    _require_two_links(network)
    table = CostTable.for_network(network)
    taus = np.asarray(toll_grid, dtype=float)
    if isinstance(demand_grid, DemandGrid):
        mus = demand_grid.vectors[:, 0]
    else:
        mus = np.asarray(demand_grid, dtype=float)
    if taus.size == 0 or mus.size == 0:
        raise GridError("toll and demand grids must be non-empty")

    def social(x1: np.ndarray, mu: np.ndarray) -> np.ndarray:
        return table.social(np.stack([x1, mu - x1], axis=-1)).sum(axis=-1)

    opt_x1 = _split(table, mus, np.zeros_like(mus), marginal=True)
    l_opt = social(opt_x1, mus)

    grid_mu = np.broadcast_to(mus, (taus.size, mus.size))
    eq_x1 = _split(table, grid_mu, taus[:, None], marginal=False)
    l_eq = social(eq_x1, grid_mu)

    gaps = (l_eq - l_opt[None, :]) / np.maximum(l_opt[None, :], REL_GAP_FLOOR)
    max_gaps = gaps.max(axis=1)
    best = int(np.argmin(max_gaps))
    logger.info("No-DIOT search: best τ=%.6g with min-max gap %.3e", taus[best], max_gaps[best])
    return NoDiotResult(float(taus[best]), float(max_gaps[best]), max_gaps)
