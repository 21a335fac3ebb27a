# diot/network_model.py
"""
The routing game Γ = (G, I, c):
  • a directed multigraph whose edges carry ids and cost specs
  • commodities (OD pairs) with demands supplied separately
  • simple-path enumeration, topological orders, flow/load bookkeeping

A Network is immutable once built; enumerated path sets are cached on it.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import islice
from typing import Mapping, Optional, Sequence, Union

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, model_validator

from diot.cost_model import CostSpec
from diot.errors import (
    CyclicGraphError,
    DemandError,
    NetworkValidationError,
    NoPathError,
    NoValidOrderError,
    PathExplosionError,
    UnknownEdgeError,
)

logger = logging.getLogger(__name__)

DEFAULT_PATH_CAP = 10_000


# ── Graph elements ────────────────────────────────────────────────────────────
class Edge(BaseModel):
    model_config = ConfigDict(frozen=True)

    id:   str
    tail: str
    head: str
    cost: CostSpec


class Commodity(BaseModel):
    model_config = ConfigDict(frozen=True)

    id:          str
    origin:      str
    destination: str


class Path(BaseModel):
    model_config = ConfigDict(frozen=True)

    commodity: str
    edges:     tuple[str, ...]

    @property
    def label(self) -> str:
        return f"{self.commodity}:" + ">".join(self.edges)


# ── Network ───────────────────────────────────────────────────────────────────
class Network(BaseModel):
    model_config = ConfigDict(frozen=True)

    beta:        float = Field(ge=0)
    vertices:    tuple[str, ...]
    edges:       tuple[Edge, ...]
    commodities: tuple[Commodity, ...]

    _graph:        nx.MultiDiGraph = PrivateAttr()
    _edge_index:   dict = PrivateAttr()
    _vertex_index: dict = PrivateAttr()
    _path_sets:    dict = PrivateAttr(default_factory=dict)

    @model_validator(mode="after")
    def _check_invariants(self) -> "Network":
        for kind, ids in (
            ("vertex", self.vertices),
            ("edge", [e.id for e in self.edges]),
            ("commodity", [c.id for c in self.commodities]),
        ):
            seen = set()
            for item in ids:
                if item in seen:
                    raise ValueError(f"duplicate {kind} id {item!r}")
                seen.add(item)

        known = set(self.vertices)
        for e in self.edges:
            for end in (e.tail, e.head):
                if end not in known:
                    raise ValueError(f"edge {e.id!r} references unknown vertex {end!r}")
            if e.tail == e.head:
                raise ValueError(f"edge {e.id!r} is a self-loop at {e.tail!r}")

        if not self.commodities:
            raise ValueError("network has no commodities")
        od_pairs = set()
        for c in self.commodities:
            for end in (c.origin, c.destination):
                if end not in known:
                    raise ValueError(f"commodity {c.id!r} references unknown vertex {end!r}")
            if c.origin == c.destination:
                raise ValueError(f"commodity {c.id!r} has origin equal to destination")
            if (c.origin, c.destination) in od_pairs:
                raise ValueError(f"commodity {c.id!r} duplicates OD pair ({c.origin}, {c.destination})")
            od_pairs.add((c.origin, c.destination))
        return self

    def model_post_init(self, context) -> None:
        graph = nx.MultiDiGraph()
        graph.add_nodes_from(self.vertices)
        for e in self.edges:
            graph.add_edge(e.tail, e.head, key=e.id)
        self._graph = graph
        self._edge_index = {e.id: i for i, e in enumerate(self.edges)}
        self._vertex_index = {v: i for i, v in enumerate(self.vertices)}

    @classmethod
    def build(
        cls,
        beta: float,
        vertices: Sequence[str],
        edges: Sequence[Edge | dict],
        commodities: Sequence[Commodity | dict],
    ) -> "Network":
        """Validated constructor; invariant failures raise NetworkValidationError."""
        try:
            network = cls(
                beta=beta,
                vertices=tuple(vertices),
                edges=tuple(edges),
                commodities=tuple(commodities),
            )
        except ValidationError as exc:
            first = exc.errors()[0]
            where = ".".join(str(p) for p in first.get("loc", ()))
            raise NetworkValidationError(f"{where + ': ' if where else ''}{first['msg']}") from exc

        for c in network.commodities:
            if not nx.has_path(network.graph, c.origin, c.destination):
                raise NetworkValidationError(
                    f"commodity {c.id!r} has no path from {c.origin!r} to {c.destination!r}"
                )
        return network

    # the networkx graph and caches are derived state and stay out of equality
    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Network):
            return NotImplemented
        return (self.beta, self.vertices, self.edges, self.commodities) == (
            other.beta, other.vertices, other.edges, other.commodities
        )

    def __hash__(self) -> int:
        return hash((self.beta, self.vertices, self.edges, self.commodities))

    # ── lookups ────────────────────────────────
    @property
    def graph(self) -> nx.MultiDiGraph:
        return self._graph

    @property
    def edge_index(self) -> dict[str, int]:
        return self._edge_index

    @property
    def vertex_index(self) -> dict[str, int]:
        return self._vertex_index

    @property
    def edge_ids(self) -> tuple[str, ...]:
        return tuple(e.id for e in self.edges)

    @property
    def commodity_ids(self) -> tuple[str, ...]:
        return tuple(c.id for c in self.commodities)

    def commodity(self, commodity_id: str) -> Commodity:
        for c in self.commodities:
            if c.id == commodity_id:
                return c
        raise LookupError(f"unknown commodity {commodity_id!r}")

    def edge(self, edge_id: str) -> Edge:
        idx = self._edge_index.get(edge_id)
        if idx is None:
            raise UnknownEdgeError(f"edge {edge_id!r} is not in the network")
        return self.edges[idx]

    def path_set(self, path_cap: Optional[int] = None) -> "PathSet":
        cap = path_cap or DEFAULT_PATH_CAP
        cached = self._path_sets.get(cap)
        if cached is None:
            cached = build_path_set(self, cap)
            self._path_sets[cap] = cached
        return cached


# ── Flow containers ───────────────────────────────────────────────────────────
@dataclass(frozen=True)
class DemandVector:
    values: Mapping[str, float]

    def __post_init__(self):
        for key, val in self.values.items():
            if not np.isfinite(val) or val < 0:
                raise DemandError(f"demand for {key!r} must be a finite value ≥ 0, got {val}")

    def as_array(self, network: Network) -> np.ndarray:
        expected = set(network.commodity_ids)
        given = set(self.values)
        if given != expected:
            missing = sorted(expected - given)
            extra = sorted(given - expected)
            raise DemandError(f"demand keys mismatch (missing={missing}, unknown={extra})")
        return np.array([float(self.values[c]) for c in network.commodity_ids])


DemandLike = Union[DemandVector, Mapping[str, float], float, int]


def as_demand(network: Network, demand: DemandLike) -> DemandVector:
    """Coerce a mapping, or a scalar applied to every commodity, into a DemandVector."""
    if isinstance(demand, DemandVector):
        demand.as_array(network)
        return demand
    if isinstance(demand, Mapping):
        vector = DemandVector(dict(demand))
    else:
        vector = DemandVector({c: float(demand) for c in network.commodity_ids})
    vector.as_array(network)
    return vector


@dataclass(frozen=True)
class TollVector:
    edge_ids: tuple[str, ...]
    values:   np.ndarray

    @classmethod
    def zeros(cls, network: Network) -> "TollVector":
        return cls(network.edge_ids, np.zeros(len(network.edges)))

    @classmethod
    def from_mapping(cls, network: Network, mapping: Mapping[str, float]) -> "TollVector":
        unknown = sorted(set(mapping) - set(network.edge_ids))
        if unknown:
            raise UnknownEdgeError(f"tolls reference unknown edges {unknown}")
        return cls(network.edge_ids, np.array([float(mapping.get(e, 0.0)) for e in network.edge_ids]))

    @classmethod
    def from_array(cls, network: Network, values: Sequence[float]) -> "TollVector":
        arr = np.asarray(values, dtype=float)
        if arr.shape != (len(network.edges),):
            raise UnknownEdgeError(f"toll vector has shape {arr.shape}, expected ({len(network.edges)},)")
        return cls(network.edge_ids, arr)

    def __getitem__(self, edge_id: str) -> float:
        try:
            return float(self.values[self.edge_ids.index(edge_id)])
        except ValueError:
            raise UnknownEdgeError(f"edge {edge_id!r} is not in the toll vector") from None

    def as_dict(self) -> dict[str, float]:
        return {e: float(v) for e, v in zip(self.edge_ids, self.values)}


@dataclass(frozen=True)
class PathSet:
    """
    All enumerated paths, commodity by commodity.
    incidence[e, p] = 1 iff edge e lies on path p.
    """
    paths:       tuple[Path, ...]
    slices:      dict[str, tuple[int, int]]
    incidence:   np.ndarray

    def __len__(self) -> int:
        return len(self.paths)

    def indices(self, commodity_id: str) -> range:
        start, stop = self.slices[commodity_id]
        return range(start, stop)

    def for_commodity(self, commodity_id: str) -> tuple[Path, ...]:
        start, stop = self.slices[commodity_id]
        return self.paths[start:stop]

    def index_of(self, path: Path) -> int:
        return self.paths.index(path)


@dataclass(frozen=True)
class PathFlow:
    path_set: PathSet
    values:   np.ndarray

    def for_commodity(self, commodity_id: str) -> np.ndarray:
        start, stop = self.path_set.slices[commodity_id]
        return self.values[start:stop]

    def as_dict(self) -> dict[str, float]:
        return {p.label: float(v) for p, v in zip(self.path_set.paths, self.values)}


@dataclass(frozen=True)
class LoadProfile:
    edge_ids: tuple[str, ...]
    values:   np.ndarray

    def __getitem__(self, edge_id: str) -> float:
        return float(self.values[self.edge_ids.index(edge_id)])

    def as_dict(self) -> dict[str, float]:
        return {e: float(v) for e, v in zip(self.edge_ids, self.values)}


# ══════════════════════════════════════════════════════════════════════════════
#   PATHS & ORDERS
# ══════════════════════════════════════════════════════════════════════════════

def _resolve_commodity(network: Network, commodity: Commodity | str) -> Commodity:
    if isinstance(commodity, Commodity):
        if commodity not in network.commodities:
            raise LookupError(f"commodity {commodity.id!r} does not belong to the network")
        return commodity
    return network.commodity(commodity)


def enumerate_paths(
    network: Network,
    commodity: Commodity | str,
    path_cap: int = DEFAULT_PATH_CAP,
) -> list[Path]:
    """All simple origin→destination paths, ordered lexicographically by edge declaration index."""
    com = _resolve_commodity(network, commodity)
    raw = nx.all_simple_edge_paths(network.graph, com.origin, com.destination)
    found = list(islice(raw, path_cap + 1))
    if not found:
        raise NoPathError(f"no path from {com.origin!r} to {com.destination!r} for {com.id!r}")
    if len(found) > path_cap:
        raise PathExplosionError(f"commodity {com.id!r} has more than {path_cap} simple paths")

    index = network.edge_index
    keyed = sorted((tuple(index[k] for _, _, k in p), p) for p in found)
    return [Path(commodity=com.id, edges=tuple(k for _, _, k in p)) for _, p in keyed]


def build_path_set(network: Network, path_cap: int = DEFAULT_PATH_CAP) -> PathSet:
    paths: list[Path] = []
    slices: dict[str, tuple[int, int]] = {}
    for com in network.commodities:
        start = len(paths)
        found = enumerate_paths(network, com, path_cap)
        paths.extend(found)
        slices[com.id] = (start, len(paths))

    incidence = np.zeros((len(network.edges), len(paths)))
    for p, path in enumerate(paths):
        for edge_id in path.edges:
            incidence[network.edge_index[edge_id], p] = 1.0
    logger.debug("Enumerated %d paths over %d commodities", len(paths), len(slices))
    return PathSet(tuple(paths), slices, incidence)


def _lexicographic_order(graph: nx.DiGraph | nx.MultiDiGraph, network: Network) -> list[str]:
    return list(nx.lexicographical_topological_sort(graph, key=network.vertex_index.__getitem__))


def topological_sort(network: Network) -> list[str]:
    """Kahn's order, ties broken by earliest position in the vertex list."""
    try:
        return _lexicographic_order(network.graph, network)
    except nx.NetworkXUnfeasible:
        raise CyclicGraphError("the network contains a directed cycle") from None


def commodity_order(network: Network) -> list[str]:
    """
    A linear order of all vertices with every origin before its destination:
    topological sort of the graph holding one arc o^i→d^i per commodity.
    """
    aux = nx.DiGraph()
    aux.add_nodes_from(network.vertices)
    aux.add_edges_from((c.origin, c.destination) for c in network.commodities)
    try:
        return _lexicographic_order(aux, network)
    except nx.NetworkXUnfeasible:
        raise NoValidOrderError("origin/destination order constraints are cyclic") from None


def edge_deltas(network: Network, order: Sequence[str]) -> np.ndarray:
    """δ_e = position(head) − position(tail) for the given vertex order."""
    pos = {v: i for i, v in enumerate(order)}
    return np.array([pos[e.head] - pos[e.tail] for e in network.edges], dtype=int)


# ══════════════════════════════════════════════════════════════════════════════
#   FLOWS & LOADS
# ══════════════════════════════════════════════════════════════════════════════

def _flow_array(network: Network, path_flow: PathFlow | Sequence[float]) -> tuple[PathSet, np.ndarray]:
    if isinstance(path_flow, PathFlow):
        return path_flow.path_set, np.asarray(path_flow.values, dtype=float)
    paths = network.path_set()
    values = np.asarray(path_flow, dtype=float)
    if values.shape != (len(paths),):
        raise ValueError(f"path flow has shape {values.shape}, expected ({len(paths)},)")
    return paths, values


def loads_from_flow(network: Network, path_flow: PathFlow | Sequence[float]) -> LoadProfile:
    """x_e = Σ_{p∋e} f_p."""
    paths, values = _flow_array(network, path_flow)
    return LoadProfile(network.edge_ids, paths.incidence @ values)


@dataclass(frozen=True)
class FlowViolation:
    kind:      str           # "negative_flow" | "conservation" | "shape"
    commodity: str
    residual:  float
    path:      Optional[str] = None


@dataclass(frozen=True)
class FlowCheck:
    violations: tuple[FlowViolation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_flow(
    network: Network,
    path_flow: PathFlow | Sequence[float],
    demand: DemandLike,
    tol: float = 1e-9,
) -> FlowCheck:
    """Non-negativity and per-commodity conservation within an absolute tolerance."""
    violations: list[FlowViolation] = []
    try:
        paths, values = _flow_array(network, path_flow)
        mu = as_demand(network, demand).as_array(network)
    except (ValueError, DemandError) as exc:
        return FlowCheck((FlowViolation("shape", "*", float("nan"), str(exc)),))

    for p, (path, val) in enumerate(zip(paths.paths, values)):
        if val < -tol:
            violations.append(FlowViolation("negative_flow", path.commodity, float(val), path.label))
    for ci, com in enumerate(network.commodities):
        start, stop = paths.slices[com.id]
        residual = float(mu[ci] - values[start:stop].sum())
        if abs(residual) > tol:
            violations.append(FlowViolation("conservation", com.id, residual))
    return FlowCheck(tuple(violations))
