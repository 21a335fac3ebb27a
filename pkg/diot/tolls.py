# diot/tolls.py
"""
Demand-independent optimal tolls (DIOTs) for BPR networks, plus
demand-specific marginal-cost tolls.

  trivial_diot:          τ̂_e = −β/(β+1)·t_e
  nonnegative_diot_dag:  τ̂ shifted along topological position differences (DAGs)
  budget_diot:           τ̂ shifted until every path's toll sum is ≥ 0
  build_constraint_system / solve_diot_lp:
                         optimality conditions over used paths, solved by a
                         dense two-phase simplex with an infeasibility certificate
  marginal_cost_tolls:   τ_e = x*_e·c′_e(x*_e) at one demand's optimum
"""
from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from itertools import combinations
from typing import Literal, Optional, Sequence

import numpy as np
from scipy.linalg import qr

from diot.config import get_settings
from diot.cost_model import BprCost, CostTable, is_bpr_type
from diot.errors import DiotError, NetworkValidationError, NotBprError, UnknownEdgeError
from diot.network_model import (
    DemandLike,
    Network,
    Path,
    TollVector,
    commodity_order,
    edge_deltas,
    topological_sort,
)
from diot.solver import SolverConfig, solve_optimum

logger = logging.getLogger(__name__)

LP_TOL = 1e-9
MAX_PIVOTS = 50_000


# ── BPR requirements ──────────────────────────────────────────────────────────
def bpr_degrees(network: Network) -> set[float]:
    """Degrees of every edge that is a shifted monomial t + a·x^k with a > 0."""
    degrees: set[float] = set()
    for edge in network.edges:
        if isinstance(edge.cost, BprCost):
            if edge.cost.a > 0:
                degrees.add(float(network.beta))
            continue
        positive = {term.exp for term in edge.cost.terms if term.exp > 0 and term.coef > 0}
        if len(positive) == 1:
            degrees.add(float(positive.pop()))
    return degrees


def require_bpr(network: Network) -> tuple[np.ndarray, np.ndarray]:
    """(t, a) arrays for a network whose every edge is t + a·x^β; NotBprError otherwise."""
    degrees = bpr_degrees(network)
    if len(degrees) > 1:
        raise NotBprError(
            f"network mixes BPR degrees {sorted(degrees)}; a common degree is required for DIOTs"
        )
    t = np.zeros(len(network.edges))
    a = np.zeros(len(network.edges))
    for i, edge in enumerate(network.edges):
        fit = is_bpr_type(edge.cost, network.beta)
        if not fit.ok:
            raise NotBprError(f"edge {edge.id!r} is not of the form t + a·x^{network.beta:g}")
        t[i], a[i] = fit.t, fit.a
    return t, a


def _toll_weight(beta: float) -> float:
    return beta / (beta + 1.0)


def trivial_diot(network: Network) -> TollVector:
    t, _ = require_bpr(network)
    return TollVector(network.edge_ids, -_toll_weight(network.beta) * t)


# ══════════════════════════════════════════════════════════════════════════════
#   SHIFT CONSTRUCTIONS
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class TollConstruction:
    """
    Certificate of a shifted construction τ = τ̂ + δ·gamma.
    gamma is the shift actually applied: χ for the non-negative DAG
    construction, the budget shift for the budget construction.
    """
    order:               tuple[str, ...]
    delta:               np.ndarray
    xi:                  float
    chi:                 float
    gamma:               float
    delta_per_commodity: dict[str, int]
    tolls:               TollVector
    base:                TollVector = field(repr=False)


def _xi(base: np.ndarray, delta: np.ndarray) -> float:
    forward = delta > 0
    if not forward.any():
        return 0.0
    return float((base[forward] / delta[forward]).min())


def _commodity_spans(network: Network, order: Sequence[str]) -> dict[str, int]:
    # Σ_{e∈p} δ_e telescopes to position(d) − position(o) for every o–d path
    pos = {v: i for i, v in enumerate(order)}
    return {c.id: pos[c.destination] - pos[c.origin] for c in network.commodities}


def nonnegative_construction(network: Network) -> TollConstruction:
    base = trivial_diot(network)
    order = tuple(topological_sort(network))
    delta = edge_deltas(network, order)
    xi = _xi(base.values, delta)
    chi = max(-xi, 0.0)
    tolls = TollVector(network.edge_ids, base.values + delta * chi)
    logger.info("Non-negative DIOT: order=%s ξ=%.6g χ=%.6g", ",".join(order), xi, chi)
    return TollConstruction(
        order               = order,
        delta               = delta,
        xi                  = xi,
        chi                 = chi,
        gamma               = chi,
        delta_per_commodity = _commodity_spans(network, order),
        tolls               = tolls,
        base                = base,
    )


def nonnegative_diot_dag(network: Network) -> TollVector:
    return nonnegative_construction(network).tolls


def budget_construction(network: Network, path_cap: Optional[int] = None) -> TollConstruction:
    base = trivial_diot(network)
    order = tuple(commodity_order(network))
    delta = edge_deltas(network, order)
    spans = _commodity_spans(network, order)

    t, _ = require_bpr(network)
    weight = _toll_weight(network.beta)
    paths = network.path_set(path_cap or get_settings().path_cap)
    path_weights = weight * (paths.incidence.T @ t)

    gamma = 0.0
    for com in network.commodities:
        start, stop = paths.slices[com.id]
        gamma = max(gamma, float(path_weights[start:stop].max()) / spans[com.id])

    xi = _xi(base.values, delta)
    tolls = TollVector(network.edge_ids, base.values + delta * gamma)
    logger.info("Budget DIOT: order=%s γ=%.6g", ",".join(order), gamma)
    return TollConstruction(
        order               = order,
        delta               = delta,
        xi                  = xi,
        chi                 = max(-xi, 0.0),
        gamma               = gamma,
        delta_per_commodity = spans,
        tolls               = tolls,
        base                = base,
    )


def budget_diot(network: Network, path_cap: Optional[int] = None) -> tuple[TollVector, float]:
    construction = budget_construction(network, path_cap)
    return construction.tolls, construction.gamma


# ══════════════════════════════════════════════════════════════════════════════
#   CONSTRAINT SYSTEM
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class DiotConstraintSystem:
    """
    Rows over per-edge toll variables:
      A_eq·τ = b_eq   one per pair of used paths of a commodity
      A_ub·τ ≤ b_ub   one per (used, unused) pair of a commodity
    Row (p, q) reads Σ_{e∈p} τ_e − Σ_{e∈q} τ_e  {=, ≤}  κ_q − κ_p with κ_p = β/(β+1)·Σ_{e∈p} t_e.
    """
    edge_ids:  tuple[str, ...]
    A_eq:      np.ndarray
    b_eq:      np.ndarray
    A_ub:      np.ndarray
    b_ub:      np.ndarray
    eq_pairs:  tuple[tuple[str, str], ...]
    ub_pairs:  tuple[tuple[str, str], ...]

    @property
    def is_empty(self) -> bool:
        return not (len(self.b_eq) or len(self.b_ub))

    def residuals(self, tolls: TollVector | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(A_eq·τ − b_eq, A_ub·τ − b_ub)."""
        tau = tolls.values if isinstance(tolls, TollVector) else np.asarray(tolls, dtype=float)
        return self.A_eq @ tau - self.b_eq, self.A_ub @ tau - self.b_ub


def build_constraint_system(
    network: Network,
    used_path_sets: Mapping[str, Iterable[Path]],
    path_cap: Optional[int] = None,
) -> DiotConstraintSystem:
    t, _ = require_bpr(network)
    weight = _toll_weight(network.beta)
    paths = network.path_set(path_cap or get_settings().path_cap)
    incidence = paths.incidence
    kappa = weight * (incidence.T @ t)

    eq_rows, eq_rhs, eq_pairs = [], [], []
    ub_rows, ub_rhs, ub_pairs = [], [], []
    for com in network.commodities:
        members = paths.indices(com.id)
        used = []
        for path in used_path_sets.get(com.id, ()):
            if path.commodity != com.id or path not in paths.paths:
                raise NetworkValidationError(f"path {path.label} is not an enumerated path of {com.id!r}")
            used.append(paths.index_of(path))
        used = sorted(set(used))
        unused = [q for q in members if q not in used]

        for p, q in combinations(used, 2):
            eq_rows.append(incidence[:, p] - incidence[:, q])
            eq_rhs.append(kappa[q] - kappa[p])
            eq_pairs.append((paths.paths[p].label, paths.paths[q].label))
        for p in used:
            for q in unused:
                ub_rows.append(incidence[:, p] - incidence[:, q])
                ub_rhs.append(kappa[q] - kappa[p])
                ub_pairs.append((paths.paths[p].label, paths.paths[q].label))

    n = len(network.edges)
    system = DiotConstraintSystem(
        edge_ids = network.edge_ids,
        A_eq     = np.array(eq_rows, dtype=float).reshape(-1, n),
        b_eq     = np.array(eq_rhs, dtype=float),
        A_ub     = np.array(ub_rows, dtype=float).reshape(-1, n),
        b_ub     = np.array(ub_rhs, dtype=float),
        eq_pairs = tuple(eq_pairs),
        ub_pairs = tuple(ub_pairs),
    )
    logger.debug("Constraint system: %d equalities, %d inequalities", len(eq_rhs), len(ub_rhs))
    return system


# ══════════════════════════════════════════════════════════════════════════════
#   DENSE TWO-PHASE SIMPLEX
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class _LpSolution:
    status: Literal["optimal", "infeasible", "unbounded"]
    x:      Optional[np.ndarray] = None
    value:  float = float("nan")


def _pivot(T: np.ndarray, r: int, j: int) -> None:
    T[r] /= T[r, j]
    column = T[:, j].copy()
    column[r] = 0.0
    T -= np.outer(column, T[r])


def _run_simplex(T: np.ndarray, basis: list[int], tol: float) -> str:
    """Bland's rule on a tableau whose last row holds reduced costs and −objective."""
    m = T.shape[0] - 1
    for _ in range(MAX_PIVOTS):
        entering = np.flatnonzero(T[-1, :-1] < -tol)
        if entering.size == 0:
            return "optimal"
        j = int(entering[0])
        column = T[:m, j]
        rows = np.flatnonzero(column > tol)
        if rows.size == 0:
            return "unbounded"
        ratios = T[rows, -1] / column[rows]
        tied = rows[ratios <= ratios.min() + tol]
        r = int(min(tied, key=lambda i: basis[i]))
        _pivot(T, r, j)
        basis[r] = j
    raise DiotError(f"simplex did not terminate within {MAX_PIVOTS} pivots")


def _linprog(
    c: np.ndarray,
    A_eq: np.ndarray,
    b_eq: np.ndarray,
    A_ub: np.ndarray,
    b_ub: np.ndarray,
    free: np.ndarray,
    tol: float = LP_TOL,
) -> _LpSolution:
    """min c·x  s.t.  A_eq x = b_eq, A_ub x ≤ b_ub, x_j ≥ 0 unless free[j]."""
    n = len(c)
    split = np.flatnonzero(free)
    A_eq = np.hstack([A_eq, -A_eq[:, split]])
    A_ub = np.hstack([A_ub, -A_ub[:, split]])
    cost = np.concatenate([c, -c[split], np.zeros(len(b_ub))])
    n_struct = n + len(split)
    m_eq, m_ub = len(b_eq), len(b_ub)
    m, n_x = m_eq + m_ub, n_struct + m_ub

    A = np.zeros((m, n_x))
    A[:m_eq, :n_struct] = A_eq
    A[m_eq:, :n_struct] = A_ub
    A[m_eq:, n_struct:] = np.eye(m_ub)
    b = np.concatenate([b_eq, b_ub]).astype(float)
    flip = b < 0
    A[flip] *= -1.0
    b[flip] *= -1.0

    def unsplit(x_full: np.ndarray) -> np.ndarray:
        x = x_full[:n].copy()
        x[split] -= x_full[n:n_struct]
        return x

    if m == 0:
        if (cost < -tol).any():
            return _LpSolution("unbounded")
        return _LpSolution("optimal", np.zeros(n), 0.0)

    # ── phase I: artificials on every row ─────────
    T = np.zeros((m + 1, n_x + m + 1))
    T[:m, :n_x] = A
    T[:m, n_x:n_x + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n_x] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(n_x, n_x + m))
    _run_simplex(T, basis, tol)
    if -T[-1, -1] > tol * max(1.0, float(b.max())):
        return _LpSolution("infeasible")

    for r in range(m):
        if basis[r] >= n_x:
            candidates = np.flatnonzero(np.abs(T[r, :n_x]) > tol)
            if candidates.size:
                _pivot(T, r, int(candidates[0]))
                basis[r] = int(candidates[0])
    keep = [r for r in range(m) if basis[r] < n_x]
    if len(keep) < m:
        logger.debug("Dropped %d redundant rows after phase I", m - len(keep))

    # ── phase II ──────────────────────────────────
    T2 = np.zeros((len(keep) + 1, n_x + 1))
    T2[:-1, :n_x] = T[keep, :n_x]
    T2[:-1, -1] = T[keep, -1]
    T2[-1, :n_x] = cost
    basis2 = [basis[r] for r in keep]
    for i, var in enumerate(basis2):
        T2[-1] -= cost[var] * T2[i]
    if _run_simplex(T2, basis2, tol) == "unbounded":
        return _LpSolution("unbounded")

    x_full = np.zeros(n_x)
    for i, var in enumerate(basis2):
        x_full[var] = T2[i, -1]
    x = unsplit(x_full)
    return _LpSolution("optimal", x, float(c @ x))


# ══════════════════════════════════════════════════════════════════════════════
#   LP DIOTs
# ══════════════════════════════════════════════════════════════════════════════

@dataclass(frozen=True)
class FarkasCertificate:
    """An aggregate of the constraints that no admissible τ satisfies: Σ coef·τ_e {=, ≤} rhs."""
    coefficients: dict[str, float]
    relation:     Literal["=", "<="]
    rhs:          float

    def describe(self) -> str:
        terms = []
        for edge_id, coef in self.coefficients.items():
            if abs(coef - 1.0) <= 1e-9:
                term = f"tau[{edge_id}]"
            elif abs(coef + 1.0) <= 1e-9:
                term = f"-tau[{edge_id}]"
            else:
                term = f"{coef:.12g}*tau[{edge_id}]"
            terms.append(term if not terms or term.startswith("-") else "+" + term)
        return f"{''.join(terms) or '0'}{self.relation}{self.rhs:.12g}"


@dataclass(frozen=True)
class LpOutcome:
    status:      Literal["optimal", "infeasible", "unbounded"]
    tolls:       Optional[TollVector] = None
    objective:   float = float("nan")
    certificate: Optional[FarkasCertificate] = None

    @property
    def feasible(self) -> bool:
        return self.status != "infeasible"


def _free_columns(system: DiotConstraintSystem, free_edges: Optional[Iterable[str]]) -> np.ndarray:
    if free_edges is None:
        return np.arange(len(system.edge_ids))
    wanted = list(free_edges)
    unknown = sorted(set(wanted) - set(system.edge_ids))
    if unknown:
        raise UnknownEdgeError(f"free edges not in the network: {unknown}")
    return np.array(sorted(system.edge_ids.index(e) for e in set(wanted)), dtype=int)


def _reduce_rows(
    A_eq: np.ndarray, b_eq: np.ndarray, A_ub: np.ndarray, b_ub: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Linearly independent equality rows (pivoted QR on [A_eq | b_eq]) and
    distinct inequality rows. The feasible set is unchanged.
    """
    if len(b_eq):
        _, R, order = qr(np.column_stack([A_eq, b_eq]).T, mode="economic", pivoting=True)
        diag = np.abs(np.diag(R))
        rank = int((diag > LP_TOL * max(1.0, float(diag.max(initial=0.0)))).sum())
        keep = np.sort(order[:rank])
        A_eq, b_eq = A_eq[keep], b_eq[keep]
    if len(b_ub):
        _, keep = np.unique(np.column_stack([A_ub, b_ub]), axis=0, return_index=True)
        keep = np.sort(keep)
        A_ub, b_ub = A_ub[keep], b_ub[keep]
    return A_eq, b_eq, A_ub, b_ub


def _farkas(
    edge_ids: Sequence[str],
    A_eq: np.ndarray,
    b_eq: np.ndarray,
    A_ub: np.ndarray,
    b_ub: np.ndarray,
    nonnegative: bool,
) -> Optional[FarkasCertificate]:
    """
    Find multipliers y (equalities, free) and z ≥ 0 (inequalities) with
    g = A_eqᵀy + A_ubᵀz, g ≥ 0 on non-negative variables, g = 0 on free ones,
    and b·(y, z) = −1.
    """
    m_eq, m_ub = len(b_eq), len(b_ub)
    n = len(edge_ids)
    G = np.hstack([A_eq.T, A_ub.T])     # n × (m_eq + m_ub)
    rhs_row = np.concatenate([b_eq, b_ub])[None, :]
    free = np.concatenate([np.ones(m_eq, dtype=bool), np.zeros(m_ub, dtype=bool)])

    if nonnegative:
        lp_A_ub, lp_b_ub = -G, np.zeros(n)
        lp_A_eq, lp_b_eq = rhs_row, np.array([-1.0])
    else:
        lp_A_ub, lp_b_ub = np.zeros((0, m_eq + m_ub)), np.zeros(0)
        lp_A_eq, lp_b_eq = np.vstack([G, rhs_row]), np.concatenate([np.zeros(n), [-1.0]])

    solution = _linprog(np.zeros(m_eq + m_ub), lp_A_eq, lp_b_eq, lp_A_ub, lp_b_ub, free)
    if solution.status != "optimal":
        return None
    w = solution.x
    g = G @ w
    scale = float(np.abs(g).max())
    if scale <= LP_TOL:
        scale = 1.0
    g = g / scale
    coefficients = {edge_ids[j]: float(v) for j, v in enumerate(g) if abs(v) > LP_TOL}
    relation = "=" if np.all(w[m_eq:] <= LP_TOL) else "<="
    return FarkasCertificate(coefficients, relation, -1.0 / scale)


def solve_diot_lp(
    system: DiotConstraintSystem,
    require_nonnegative: bool = False,
    objective: Literal["feasibility", "minimize_total_toll"] = "feasibility",
    free_edges: Optional[Iterable[str]] = None,
) -> LpOutcome:
    """
    Tolls satisfying every row of the system (τ ≥ 0 when required).
    Edges outside free_edges are fixed at 0.
    """
    cols = _free_columns(system, free_edges)
    A_eq, b_eq, A_ub, b_ub = _reduce_rows(system.A_eq[:, cols], system.b_eq, system.A_ub[:, cols], system.b_ub)
    logger.debug("DIOT LP: %d/%d equalities and %d/%d inequalities after reduction",
                 len(b_eq), len(system.b_eq), len(b_ub), len(system.b_ub))
    c = np.ones(len(cols)) if objective == "minimize_total_toll" else np.zeros(len(cols))
    free = np.full(len(cols), not require_nonnegative)

    solution = _linprog(c, A_eq, b_eq, A_ub, b_ub, free)
    if solution.status == "infeasible":
        names = [system.edge_ids[j] for j in cols]
        certificate = _farkas(names, A_eq, b_eq, A_ub, b_ub, require_nonnegative)
        logger.info(
            "DIOT LP infeasible%s", f": {certificate.describe()}" if certificate else ""
        )
        return LpOutcome("infeasible", certificate=certificate)
    if solution.status == "unbounded":
        logger.info("DIOT LP objective is unbounded below")
        return LpOutcome("unbounded")

    tau = np.zeros(len(system.edge_ids))
    tau[cols] = solution.x
    tau[np.abs(tau) < LP_TOL] = 0.0
    return LpOutcome("optimal", TollVector(system.edge_ids, tau), solution.value)


# ══════════════════════════════════════════════════════════════════════════════
#   MARGINAL-COST TOLLS
# ══════════════════════════════════════════════════════════════════════════════

def marginal_cost_tolls(
    network: Network,
    demand: DemandLike,
    config: Optional[SolverConfig] = None,
) -> TollVector:
    """τ_e = x*_e·c′_e(x*_e) at the optimum for this demand; zero on unloaded edges."""
    optimum = solve_optimum(network, demand, config)
    x = optimum.loads.values
    loaded = x > 0
    tau = np.zeros_like(x)
    tau[loaded] = x[loaded] * CostTable.for_network(network).derivative(x)[loaded]
    return TollVector(network.edge_ids, tau)
