# diot/network_io.py
"""
Files in and out.
  • network documents (JSON): beta, vertices, edges with {t, a} or {terms}, commodities
  • toll documents (JSON): {edge_id: toll}
  • CLI value syntax: demands "c1=1,c2=0.5", grids "lo:hi:count" / "a,b,c" / "c1=...;c2=...",
    ranges "a:b:step"
  • sweep CSV output
  • bundled fixtures, addressable as "pigou" or "fixtures/pigou"
"""
from __future__ import annotations

import json
import logging
from pathlib import Path as FilePath
from typing import Optional, TextIO, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from diot.analysis import DemandGrid
from diot.cost_model import BprCost, MonomialSumCost, MonomialTerm
from diot.errors import GridError, NetworkValidationError, ParseError
from diot.network_model import Commodity, DemandVector, Edge, Network, TollVector, as_demand

logger = logging.getLogger(__name__)

FIXTURE_DIR = FilePath(__file__).resolve().parent / "fixtures"


# ── Documents ─────────────────────────────────────────────────────────────────
class TermDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    coef: float
    exp:  float


class EdgeDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id:    str
    tail:  str
    head:  str
    t:     Optional[float] = None
    a:     Optional[float] = None
    terms: Optional[list[TermDocument]] = None

    @model_validator(mode="after")
    def _one_cost_form(self) -> "EdgeDocument":
        bpr = self.t is not None or self.a is not None
        if bpr == (self.terms is not None):
            raise ValueError(f"edge {self.id!r} needs exactly one of (t, a) or terms")
        return self

    def to_edge(self) -> Edge:
        if self.terms is not None:
            cost = MonomialSumCost(terms=tuple(MonomialTerm(coef=t.coef, exp=t.exp) for t in self.terms))
        else:
            cost = BprCost(t=self.t or 0.0, a=self.a or 0.0)
        return Edge(id=self.id, tail=self.tail, head=self.head, cost=cost)

    @classmethod
    def from_edge(cls, edge: Edge) -> "EdgeDocument":
        if isinstance(edge.cost, BprCost):
            return cls(id=edge.id, tail=edge.tail, head=edge.head, t=edge.cost.t, a=edge.cost.a)
        terms = [TermDocument(coef=t.coef, exp=t.exp) for t in edge.cost.terms]
        return cls(id=edge.id, tail=edge.tail, head=edge.head, terms=terms)


class CommodityDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    id:          str
    origin:      str
    destination: str


class NetworkDocument(BaseModel):
    model_config = ConfigDict(extra="forbid")

    beta:        float = Field(ge=0)
    vertices:    list[str]
    edges:       list[EdgeDocument]
    commodities: list[CommodityDocument]

    def to_network(self) -> Network:
        return Network.build(
            beta=self.beta,
            vertices=self.vertices,
            edges=[e.to_edge() for e in self.edges],
            commodities=[Commodity(**c.model_dump()) for c in self.commodities],
        )

    @classmethod
    def from_network(cls, network: Network) -> "NetworkDocument":
        return cls(
            beta=network.beta,
            vertices=list(network.vertices),
            edges=[EdgeDocument.from_edge(e) for e in network.edges],
            commodities=[CommodityDocument(**c.model_dump()) for c in network.commodities],
        )


def _parse_json(text: str, source: str) -> object:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{source}: {exc.msg}", line=exc.lineno, column=exc.colno) from None


def _validation_message(exc: ValidationError) -> str:
    first = exc.errors()[0]
    where = ".".join(str(p) for p in first.get("loc", ()))
    return f"{where + ': ' if where else ''}{first['msg']}"


def parse_network(text: str, source: str = "<network>") -> Network:
    data = _parse_json(text, source)
    try:
        document = NetworkDocument.model_validate(data)
    except ValidationError as exc:
        raise NetworkValidationError(_validation_message(exc)) from exc
    return document.to_network()


def resolve_fixture(name: Union[str, FilePath], suffix: str = ".json") -> FilePath:
    """An existing path as given, else a bundled fixture by bare or fixtures/-prefixed name."""
    path = FilePath(name)
    if path.is_file():
        return path
    stem = path.name
    candidates = [FIXTURE_DIR / stem, FIXTURE_DIR / f"{stem}{suffix}"]
    for candidate in candidates:
        if candidate.is_file():
            return candidate
    raise FileNotFoundError(f"no such network or fixture: {name}")


def load_network(path: Union[str, FilePath]) -> Network:
    resolved = resolve_fixture(path)
    network = parse_network(resolved.read_text(encoding="utf-8"), str(resolved))
    logger.info(
        "Loaded %s: %d vertices, %d edges, %d commodities, β=%g",
        resolved.name, len(network.vertices), len(network.edges), len(network.commodities), network.beta,
    )
    return network


def dump_network(network: Network) -> str:
    document = NetworkDocument.from_network(network)
    return document.model_dump_json(indent=2, exclude_none=True) + "\n"


# ── Tolls ─────────────────────────────────────────────────────────────────────
def parse_tolls(text: str, network: Network, source: str = "<tolls>") -> tuple[TollVector, list[str]]:
    """Tolls plus the edges that were missing and defaulted to 0."""
    data = _parse_json(text, source)
    if not isinstance(data, dict):
        raise ParseError(f"{source}: toll document must be an object of edge id → toll")
    try:
        mapping = {str(k): float(v) for k, v in data.items()}
    except (TypeError, ValueError):
        raise ParseError(f"{source}: toll values must be numbers") from None
    defaulted = [e for e in network.edge_ids if e not in mapping]
    if defaulted:
        logger.warning("Tolls default to 0 on %s", ", ".join(defaulted))
    return TollVector.from_mapping(network, mapping), defaulted


def load_tolls(path: Union[str, FilePath], network: Network) -> tuple[TollVector, list[str]]:
    resolved = resolve_fixture(path, suffix=".toll")
    return parse_tolls(resolved.read_text(encoding="utf-8"), network, str(resolved))


def dump_tolls(tolls: TollVector) -> str:
    return json.dumps(tolls.as_dict(), indent=2) + "\n"


# ── CLI value syntax ──────────────────────────────────────────────────────────
def _number(token: str, what: str) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"{what}: {token!r} is not a number") from None


def parse_demand(spec: str, network: Network) -> DemandVector:
    """'c1=1,c2=0.5', or a bare number for every commodity."""
    spec = spec.strip()
    if "=" not in spec:
        return as_demand(network, _number(spec, "demand"))
    values = {}
    for item in filter(None, (part.strip() for part in spec.split(","))):
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ParseError(f"demand: expected id=value, got {item!r}")
        values[key.strip()] = _number(value.strip(), "demand")
    return as_demand(network, values)


def parse_values(spec: str) -> np.ndarray:
    """'lo:hi:count' (log-spaced, inclusive) or 'a,b,c'."""
    spec = spec.strip()
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ParseError(f"grid: expected lo:hi:count, got {spec!r}")
        lo, hi = _number(parts[0], "grid"), _number(parts[1], "grid")
        try:
            count = int(parts[2])
        except ValueError:
            raise ParseError(f"grid: count {parts[2]!r} is not an integer") from None
        if count < 1 or lo <= 0 or hi < lo:
            raise GridError(f"grid: need 0 < lo ≤ hi and count ≥ 1, got {spec!r}")
        return np.logspace(np.log10(lo), np.log10(hi), count)
    values = [_number(tok.strip(), "grid") for tok in spec.split(",") if tok.strip()]
    if not values:
        raise GridError("grid: no values given")
    return np.array(values)


def parse_grid(spec: str, network: Network, max_points: Optional[int] = None) -> DemandGrid:
    """One spec for every commodity, or 'c1=spec;c2=spec' joined as a product."""
    if "=" not in spec:
        return DemandGrid.product(network, parse_values(spec), max_points)
    axes = {}
    for item in filter(None, (part.strip() for part in spec.split(";"))):
        key, _, value = item.partition("=")
        axes[key.strip()] = parse_values(value)
    return DemandGrid.product(network, axes, max_points)


def parse_range(spec: str) -> np.ndarray:
    """'a:b:step', both ends inclusive."""
    parts = spec.strip().split(":")
    if len(parts) != 3:
        raise ParseError(f"range: expected a:b:step, got {spec!r}")
    lo, hi, step = (_number(p, "range") for p in parts)
    if step <= 0 or hi < lo:
        raise GridError(f"range: need a ≤ b and step > 0, got {spec!r}")
    count = int(np.floor((hi - lo) / step + 1e-9)) + 1
    return lo + step * np.arange(count)


# ── Reports ───────────────────────────────────────────────────────────────────
def write_sweep_csv(frame: pd.DataFrame, target: Union[str, FilePath, TextIO]) -> None:
    """Fixed column order, 12 significant digits, LF line endings."""
    frame.to_csv(target, index=False, float_format="%.12g", lineterminator="\n")
