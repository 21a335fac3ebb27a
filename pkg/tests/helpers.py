"""Network builders and brute-force oracles shared by the tests."""
import numpy as np

from diot.analysis import simplex_grid
from diot.cost_model import BprCost, CostTable, MonomialSumCost
from diot.network_model import Commodity, Edge, Network


def two_link(first: MonomialSumCost, offset: float, beta: float = 1.0) -> Network:
    """Parallel links o→d with costs c(x) and c(x) + offset."""
    shifted = MonomialSumCost.of(*[(t.coef, t.exp) for t in first.terms], (offset, 0.0))
    return Network.build(
        beta=beta,
        vertices=["o", "d"],
        edges=[
            Edge(id="e1", tail="o", head="d", cost=first),
            Edge(id="e2", tail="o", head="d", cost=shifted),
        ],
        commodities=[Commodity(id="c1", origin="o", destination="d")],
    )


def random_damg(seed: int) -> Network:
    """
    Random acyclic multigraph on v0..v{n-1}: a chain v_i→v_{i+1} plus random
    forward edges, 1–3 distinct OD pairs with i < j, shared β ∈ {1, 2, 4}.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    vertices = [f"v{i}" for i in range(n)]
    pairs = [(i, i + 1) for i in range(n - 1)]
    total = int(rng.integers(max(5, n - 1), 17))
    while len(pairs) < total:
        i, j = sorted(rng.choice(n, size=2, replace=False))
        pairs.append((int(i), int(j)))

    beta = float(rng.choice([1.0, 2.0, 4.0]))
    edges = [
        Edge(
            id=f"e{k}",
            tail=vertices[i],
            head=vertices[j],
            cost=BprCost(t=float(rng.uniform(0, 2)), a=float(rng.uniform(0.5, 2))),
        )
        for k, (i, j) in enumerate(pairs)
    ]

    od = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = rng.choice(len(od), size=int(rng.integers(1, 4)), replace=False)
    commodities = [
        Commodity(id=f"c{k}", origin=vertices[od[idx][0]], destination=vertices[od[idx][1]])
        for k, idx in enumerate(sorted(int(c) for c in chosen))
    ]
    return Network.build(beta=beta, vertices=vertices, edges=edges, commodities=commodities)


def brute_force_minimum(network: Network, demand: dict, resolution: float, objective: str) -> float:
    """
    Minimum of the Beckmann potential ("beckmann") or the social cost ("social")
    over a simplex grid of path flows, one commodity at a time combined by product.
    """
    paths = network.path_set()
    table = CostTable.for_network(network)
    n = int(round(1.0 / resolution))
    flows = np.zeros((1, len(paths)))
    for cid in network.commodity_ids:
        start, stop = paths.slices[cid]
        grid = simplex_grid(stop - start, n) * demand[cid]
        padded = np.zeros((grid.shape[0], len(paths)))
        padded[:, start:stop] = grid
        flows = (flows[:, None, :] + padded[None, :, :]).reshape(-1, len(paths))
    loads = flows @ paths.incidence.T
    values = table.beckmann(loads) if objective == "beckmann" else table.social(loads)
    return float(values.sum(axis=1).min())
