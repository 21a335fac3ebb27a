# diot/cost_model.py
"""
Edge cost functions.
  • BprCost:          t + a·x^β, with β shared by the whole network
  • MonomialSumCost:  Σ coef·x^exp, used for non-BPR counterexamples

Scalar helpers (cost_value, marginal_cost_value, beckmann_term, ...) serve
documents, reports and tests. Solvers go through CostTable, which evaluates
every edge at once with closed-form derivatives.
"""
from __future__ import annotations

import logging
from typing import TYPE_CHECKING, Annotated, Literal, NamedTuple, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from diot.errors import DomainError, UnknownEdgeError

if TYPE_CHECKING:
    from diot.network_model import LoadProfile, Network, Path, TollVector

logger = logging.getLogger(__name__)


# ── Cost specs ────────────────────────────────────────────────────────────────
class BprCost(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["bpr"] = "bpr"
    t:    float = Field(0.0, ge=0)     # free-flow time
    a:    float = Field(0.0, ge=0)     # congestion coefficient


class MonomialTerm(BaseModel):
    model_config = ConfigDict(frozen=True)

    coef: float = Field(ge=0)
    exp:  float = Field(ge=0)


class MonomialSumCost(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind:  Literal["monomial"] = "monomial"
    terms: tuple[MonomialTerm, ...] = Field(min_length=1)

    @classmethod
    def of(cls, *pairs: tuple[float, float]) -> "MonomialSumCost":
        """MonomialSumCost.of((1, 1), (1, 2)) is x + x²."""
        return cls(terms=tuple(MonomialTerm(coef=c, exp=e) for c, e in pairs))


CostSpec = Annotated[Union[BprCost, MonomialSumCost], Field(discriminator="kind")]


class BprFit(NamedTuple):
    ok: bool
    t:  Optional[float] = None
    a:  Optional[float] = None


def cost_terms(cost: BprCost | MonomialSumCost, beta: float) -> list[tuple[float, float]]:
    """(coef, exp) pairs of the cost as a polynomial-like sum."""
    if isinstance(cost, BprCost):
        return [(cost.t, 0.0), (cost.a, float(beta))]
    return [(term.coef, term.exp) for term in cost.terms]


def _check_load(x: float) -> float:
    if x < 0:
        raise DomainError(f"load must be non-negative, got {x}")
    return float(x)


def _power(x: float, exp: float) -> float:
    # 0**0 is 1 for the constant term
    return 1.0 if exp == 0 else x ** exp


# ── Scalar evaluation ─────────────────────────────────────────────────────────
def cost_value(cost: BprCost | MonomialSumCost, x: float, beta: float = 1.0) -> float:
    x = _check_load(x)
    return sum(c * _power(x, e) for c, e in cost_terms(cost, beta))


def derivative_value(cost: BprCost | MonomialSumCost, x: float, beta: float = 1.0) -> float:
    x = _check_load(x)
    total = 0.0
    for c, e in cost_terms(cost, beta):
        if e == 0 or c == 0:
            continue
        if x == 0 and e < 1:
            return float("inf")
        total += c * e * _power(x, e - 1)
    return total


def marginal_cost_value(cost: BprCost | MonomialSumCost, x: float, beta: float = 1.0) -> float:
    """(x·c(x))′ = c(x) + x·c′(x)."""
    x = _check_load(x)
    return sum(c * (1.0 + e) * _power(x, e) for c, e in cost_terms(cost, beta))


def beckmann_term(cost: BprCost | MonomialSumCost, x: float, beta: float = 1.0) -> float:
    """∫₀ˣ c(s) ds in closed form."""
    x = _check_load(x)
    return sum(c * x ** (e + 1.0) / (e + 1.0) for c, e in cost_terms(cost, beta))


def is_bpr_type(cost: BprCost | MonomialSumCost, beta: float) -> BprFit:
    """True iff the cost is t + a·x^β for the network degree β."""
    if isinstance(cost, BprCost):
        return BprFit(True, cost.t, cost.a)
    t = a = 0.0
    for term in cost.terms:
        if term.exp == 0:
            t += term.coef
        elif np.isclose(term.exp, beta, rtol=0, atol=1e-12):
            a += term.coef
        elif term.coef > 0:
            return BprFit(False)
    return BprFit(True, t, a)


def path_cost(
    network: "Network",
    load_profile: "LoadProfile",
    path: "Path",
    tolls: Optional["TollVector"] = None,
) -> float:
    """Σ over the path's edges of c_e(x_e) + τ_e (latency only without tolls)."""
    total = 0.0
    for edge_id in path.edges:
        idx = network.edge_index.get(edge_id)
        if idx is None:
            raise UnknownEdgeError(f"edge {edge_id!r} is not in the network")
        edge = network.edges[idx]
        total += cost_value(edge.cost, max(float(load_profile.values[idx]), 0.0), network.beta)
        if tolls is not None:
            total += float(tolls.values[idx])
    return total


# ══════════════════════════════════════════════════════════════════════════════
#   VECTORISED TABLE
# ══════════════════════════════════════════════════════════════════════════════

class CostTable:
    """
    All edge costs as one coefficient matrix over a shared exponent list.
    Methods take loads of shape (..., E) and return the same shape.
    Negative loads (round-off) are clipped to 0.
    """

    def __init__(self, costs: Sequence[BprCost | MonomialSumCost], beta: float):
        exps: list[float] = []
        rows: list[dict[float, float]] = []
        for cost in costs:
            row: dict[float, float] = {}
            for c, e in cost_terms(cost, beta):
                if c == 0 and e != 0:
                    continue
                row[e] = row.get(e, 0.0) + c
                if e not in exps:
                    exps.append(e)
            rows.append(row)
        if 0.0 not in exps:
            exps.append(0.0)

        self.exps = np.array(sorted(exps), dtype=float)
        self.coefs = np.zeros((len(rows), len(self.exps)))
        for i, row in enumerate(rows):
            for e, c in row.items():
                self.coefs[i, int(np.searchsorted(self.exps, e))] = c
        self._pos = self.exps > 0

    @classmethod
    def for_network(cls, network: "Network") -> "CostTable":
        return cls([edge.cost for edge in network.edges], network.beta)

    def _powers(self, x: np.ndarray, exps: np.ndarray) -> np.ndarray:
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = x[..., None] ** exps
        # 0 ** 0 must be 1, 0 ** negative only appears in derivatives of exp < 1
        return np.where(exps == 0, 1.0, out)

    def value(self, x: np.ndarray) -> np.ndarray:
        return (self.coefs * self._powers(x, self.exps)).sum(axis=-1)

    def derivative(self, x: np.ndarray) -> np.ndarray:
        exps = self.exps[self._pos]
        coefs = self.coefs[:, self._pos] * exps
        with np.errstate(invalid="ignore"):
            terms = coefs * self._powers(x, exps - 1.0)
            terms = np.where(coefs == 0, 0.0, terms)
        return terms.sum(axis=-1)

    def marginal(self, x: np.ndarray) -> np.ndarray:
        return (self.coefs * (1.0 + self.exps) * self._powers(x, self.exps)).sum(axis=-1)

    def beckmann(self, x: np.ndarray) -> np.ndarray:
        return (self.coefs * self._powers(x, self.exps + 1.0) / (self.exps + 1.0)).sum(axis=-1)

    def social(self, x: np.ndarray) -> np.ndarray:
        """x·c(x) per edge."""
        return np.maximum(np.asarray(x, dtype=float), 0.0) * self.value(x)
