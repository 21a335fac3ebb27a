import numpy as np
import pytest

from diot.cost_model import BprCost, MonomialSumCost
from diot.errors import CyclicGraphError, NetworkValidationError, NotBprError, NoValidOrderError
from diot.network_model import Commodity, Edge, Network, Path, TollVector
from diot.tolls import (
    budget_construction,
    budget_diot,
    build_constraint_system,
    marginal_cost_tolls,
    nonnegative_construction,
    nonnegative_diot_dag,
    solve_diot_lp,
    trivial_diot,
)
from tests.helpers import random_damg


def _all_paths(network):
    paths = network.path_set()
    return {c: paths.for_commodity(c) for c in network.commodity_ids}


# ── Constructions ─────────────────────────────────────────────────────────────
def test_trivial_diot(pigou, braess):
    np.testing.assert_allclose(trivial_diot(pigou).values, [-0.5, 0.0])
    np.testing.assert_allclose(trivial_diot(braess).values, [0, -0.5, -0.5, 0, 0])


def test_trivial_diot_is_zero_for_constant_costs():
    network = Network.build(
        beta=0,
        vertices=["o", "d"],
        edges=[Edge(id="e1", tail="o", head="d", cost=BprCost(t=3, a=1))],
        commodities=[Commodity(id="c1", origin="o", destination="d")],
    )
    assert not trivial_diot(network).values.any()


def test_nonnegative_diot(pigou, braess):
    np.testing.assert_allclose(nonnegative_diot_dag(pigou).values, [0.0, 0.5])

    construction = nonnegative_construction(braess)
    assert construction.order == ("o", "u", "v", "d")
    np.testing.assert_array_equal(construction.delta, [1, 2, 2, 1, 1])
    assert construction.xi == pytest.approx(-0.25)
    assert construction.chi == pytest.approx(0.25)
    np.testing.assert_allclose(construction.tolls.values, [0.25, 0, 0, 0.25, 0.25])

    # τ + ½t sums to ¾ on every Braess path
    paths = braess.path_set()
    t = np.array([0, 1, 1, 0, 0])
    np.testing.assert_allclose(paths.incidence.T @ (construction.tolls.values + 0.5 * t), 0.75)


def test_nonnegative_diot_keeps_zero_free_flow_tolls():
    network = Network.build(
        beta=1,
        vertices=["o", "m", "d"],
        edges=[
            Edge(id="e1", tail="o", head="m", cost=BprCost(t=0, a=1)),
            Edge(id="e2", tail="m", head="d", cost=BprCost(t=0, a=2)),
            Edge(id="e3", tail="o", head="d", cost=BprCost(t=0, a=1)),
        ],
        commodities=[Commodity(id="c1", origin="o", destination="d")],
    )
    construction = nonnegative_construction(network)
    assert construction.chi == 0.0
    assert not construction.tolls.values.any()


def test_nonnegative_diot_needs_a_dag(cyclic, double_pigou):
    with pytest.raises(CyclicGraphError):
        nonnegative_diot_dag(cyclic)
    with pytest.raises(CyclicGraphError):
        nonnegative_diot_dag(double_pigou)


def test_budget_diot_on_cyclic_network(cyclic):
    construction = budget_construction(cyclic)
    assert construction.order == ("o", "u", "v", "d")
    np.testing.assert_array_equal(construction.delta, [1, 2, -1, 1, 2, 1])
    np.testing.assert_allclose(construction.base.values, [-1, 0, -0.5, -1, 0, -1])
    assert construction.delta_per_commodity == {"c1": 3}
    assert construction.gamma == pytest.approx(1.0)
    np.testing.assert_allclose(construction.tolls.values, [0, 2, -1.5, 0, 2, 0])

    sums = cyclic.path_set().incidence.T @ construction.tolls.values
    np.testing.assert_allclose(sorted(sums), [0, 2, 2, 2.5])


def test_budget_diot_on_pigou_and_braess(pigou, braess):
    tolls, gamma = budget_diot(pigou)
    assert gamma == pytest.approx(0.5)
    np.testing.assert_allclose(tolls.values, [0.0, 0.5])

    tolls, gamma = budget_diot(braess)
    assert gamma == pytest.approx(1 / 6)
    np.testing.assert_allclose(tolls.values, np.array([1, -1, -1, 1, 1]) / 6)


def test_budget_diot_needs_ordered_od_pairs(double_pigou):
    with pytest.raises(NoValidOrderError):
        budget_diot(double_pigou)


def test_constructions_reject_non_bpr(two_link_nonbpr):
    for construct in (trivial_diot, nonnegative_diot_dag, budget_diot):
        with pytest.raises(NotBprError):
            construct(two_link_nonbpr)


def test_mixed_bpr_degrees_are_rejected():
    network = Network.build(
        beta=1,
        vertices=["o", "d"],
        edges=[
            Edge(id="e1", tail="o", head="d", cost=BprCost(t=1, a=1)),
            Edge(id="e2", tail="o", head="d", cost=MonomialSumCost.of((2, 2))),
        ],
        commodities=[Commodity(id="c1", origin="o", destination="d")],
    )
    with pytest.raises(NotBprError, match="mixes"):
        trivial_diot(network)


def test_shift_preserves_path_differences():
    for seed in range(10):
        network = random_damg(seed)
        base = trivial_diot(network).values
        tolls = nonnegative_diot_dag(network).values
        assert (tolls >= -1e-12).all()
        paths = network.path_set()
        for cid in network.commodity_ids:
            start, stop = paths.slices[cid]
            shift = (paths.incidence.T @ (tolls - base))[start:stop]
            np.testing.assert_allclose(shift, shift[0], atol=1e-12)


# ── Constraint system ─────────────────────────────────────────────────────────
def test_pigou_constraint_system(pigou):
    system = build_constraint_system(pigou, _all_paths(pigou))
    np.testing.assert_allclose(system.A_eq, [[1, -1]])
    np.testing.assert_allclose(system.b_eq, [-0.5])
    assert system.A_ub.shape == (0, 2)
    assert system.eq_pairs == (("c1:e1", "c1:e2"),)

    lower_only = build_constraint_system(pigou, {"c1": [Path(commodity="c1", edges=("e2",))]})
    assert lower_only.A_eq.shape == (0, 2)
    np.testing.assert_allclose(lower_only.A_ub, [[-1, 1]])
    np.testing.assert_allclose(lower_only.b_ub, [0.5])


def test_single_path_commodity_gives_empty_system():
    network = Network.build(
        beta=1,
        vertices=["o", "m", "d"],
        edges=[
            Edge(id="e1", tail="o", head="m", cost=BprCost(t=1, a=1)),
            Edge(id="e2", tail="m", head="d", cost=BprCost(t=2, a=1)),
        ],
        commodities=[Commodity(id="c1", origin="o", destination="d")],
    )
    assert build_constraint_system(network, _all_paths(network)).is_empty


def test_cyclic_constraint_system_has_six_equalities(cyclic):
    system = build_constraint_system(cyclic, _all_paths(cyclic))
    assert len(system.b_eq) == 6 and len(system.b_ub) == 0


def test_constraint_system_rejects_foreign_paths(pigou):
    with pytest.raises(NetworkValidationError):
        build_constraint_system(pigou, {"c1": [Path(commodity="c1", edges=("e1", "e2"))]})


def test_trivial_diot_satisfies_every_system(braess, cyclic):
    for network in (braess, cyclic):
        system = build_constraint_system(network, _all_paths(network))
        eq, ub = system.residuals(trivial_diot(network))
        np.testing.assert_allclose(eq, 0, atol=1e-12)
        assert (ub <= 1e-12).all()


# ── LP ────────────────────────────────────────────────────────────────────────
def test_cyclic_lp_nonnegative_is_infeasible(cyclic):
    system = build_constraint_system(cyclic, _all_paths(cyclic))
    outcome = solve_diot_lp(system, require_nonnegative=True)
    assert outcome.status == "infeasible" and not outcome.feasible
    assert outcome.certificate.describe() == "tau[e3]+tau[e4]=-1.5"


def test_cyclic_lp_free_tolls(cyclic):
    system = build_constraint_system(cyclic, _all_paths(cyclic))
    outcome = solve_diot_lp(system)
    assert outcome.status == "optimal"
    tolls = outcome.tolls
    assert tolls["e3"] + tolls["e4"] == pytest.approx(-1.5, abs=1e-9)
    eq, _ = system.residuals(tolls)
    np.testing.assert_allclose(eq, 0, atol=1e-9)


def test_braess_lp_on_the_centre_edge(braess):
    system = build_constraint_system(braess, _all_paths(braess))
    outcome = solve_diot_lp(system, free_edges=["e5"])
    assert outcome.status == "optimal"
    np.testing.assert_allclose(outcome.tolls.values, [0, 0, 0, 0, 0.5], atol=1e-9)


def test_lp_objectives(pigou):
    system = build_constraint_system(pigou, _all_paths(pigou))
    assert solve_diot_lp(system, objective="minimize_total_toll").status == "unbounded"

    outcome = solve_diot_lp(system, require_nonnegative=True, objective="minimize_total_toll")
    assert outcome.status == "optimal"
    np.testing.assert_allclose(outcome.tolls.values, [0.0, 0.5], atol=1e-9)
    assert outcome.objective == pytest.approx(0.5)


def test_lp_is_feasible_on_random_networks():
    for seed in range(20):
        network = random_damg(seed)
        system = build_constraint_system(network, _all_paths(network))
        outcome = solve_diot_lp(system)
        assert outcome.feasible
        eq, ub = system.residuals(outcome.tolls)
        np.testing.assert_allclose(eq, 0, atol=1e-7)
        assert (ub <= 1e-7).all()


# ── Marginal-cost tolls ───────────────────────────────────────────────────────
@pytest.mark.parametrize(
    "mu, expected",
    [(0.25, [0.0, 0.25]), (2.0, [0.0, 0.5]), (0.0, [0.0, 0.0])],
)
def test_pigou_marginal_cost_tolls(pigou, mu, expected):
    np.testing.assert_allclose(marginal_cost_tolls(pigou, mu).values, expected, atol=1e-6)


def test_braess_marginal_cost_tolls(braess):
    tolls = marginal_cost_tolls(braess, 1.0)
    np.testing.assert_allclose(tolls.values, [0.5, 0, 0, 0.5, 0], atol=1e-6)


def test_marginal_cost_tolls_grow_with_demand_on_parallel_links(pigou):
    previous = TollVector.zeros(pigou)
    for mu in np.linspace(0.1, 3.0, 15):
        tolls = marginal_cost_tolls(pigou, mu)
        assert (tolls.values >= previous.values - 1e-6).all()
        previous = tolls
