import numpy as np
import pytest

from diot.errors import ZeroOptimumError
from diot.network_model import TollVector
from diot.solver import (
    SolverConfig,
    check_wardrop,
    price_of_anarchy,
    social_cost,
    solve_equilibrium,
    solve_optimum,
)
from tests.helpers import brute_force_minimum, random_damg


def test_pigou_equilibrium_and_optimum(pigou):
    eq = solve_equilibrium(pigou, {"c1": 1.0})
    assert eq.converged
    np.testing.assert_allclose(eq.loads.values, [0, 1], atol=1e-9)
    assert eq.social_cost == pytest.approx(1.0)

    opt = solve_optimum(pigou, {"c1": 1.0})
    np.testing.assert_allclose(opt.loads.values, [0.5, 0.5], atol=1e-7)
    assert opt.social_cost == pytest.approx(0.75, abs=1e-9)


def test_pigou_small_demand_stays_on_lower_edge(pigou):
    for solve in (solve_equilibrium, solve_optimum):
        result = solve(pigou, 0.3)
        np.testing.assert_allclose(result.loads.values, [0, 0.3], atol=1e-9)


def test_misestimated_marginal_toll(pigou):
    tolls = TollVector.from_mapping(pigou, {"e1": 0.0, "e2": 0.25})
    eq = solve_equilibrium(pigou, 1.0, tolls)
    np.testing.assert_allclose(eq.loads.values, [0.25, 0.75], atol=1e-7)
    assert eq.social_cost == pytest.approx(13 / 16, abs=1e-6)
    assert check_wardrop(pigou, eq, tolls).ok


def test_social_cost(pigou):
    assert social_cost(pigou, [0.5, 0.5]) == pytest.approx(0.75)
    assert social_cost(pigou, [0.25, 0.75]) == pytest.approx(13 / 16)
    assert social_cost(pigou, [0.0, 0.0]) == 0.0


def test_price_of_anarchy(pigou, braess):
    assert price_of_anarchy(pigou, {"c1": 1.0}) == pytest.approx(4 / 3, abs=1e-6)
    assert price_of_anarchy(braess, {"c1": 1.0}) == pytest.approx(4 / 3, abs=1e-6)
    with pytest.raises(ZeroOptimumError):
        price_of_anarchy(pigou, {"c1": 0.0})


def test_braess_equilibrium_uses_zigzag(braess):
    eq = solve_equilibrium(braess, 1.0)
    np.testing.assert_allclose(eq.path_flow.values, [0, 1, 0], atol=1e-9)
    assert eq.social_cost == pytest.approx(2.0)
    opt = solve_optimum(braess, 1.0)
    assert opt.social_cost == pytest.approx(1.5, abs=1e-7)
    assert opt.social_cost <= brute_force_minimum(braess, {"c1": 1.0}, 1e-3, "social") + 1e-7


def test_cyclic_optimum_at_small_demand(cyclic):
    opt = solve_optimum(cyclic, 0.1)
    np.testing.assert_allclose(opt.path_flow.values, [0, 0, 0.1, 0], atol=1e-9)
    assert check_wardrop(cyclic, opt, marginal=True).ok


def test_zero_demand_is_trivially_converged(braess):
    result = solve_equilibrium(braess, 0.0)
    assert result.converged and result.iterations == 0
    assert result.social_cost == 0.0


def test_objective_is_non_increasing(braess):
    for step_rule in ("pairwise", "classic"):
        config = SolverConfig(step_rule=step_rule, relative_gap_tol=1e-4, max_iterations=2000)
        result = solve_optimum(braess, 0.75, config)
        assert (np.diff(result.objective_trace) <= 1e-12).all()


def test_classic_step_rule_reaches_the_same_loads(braess):
    pairwise = solve_optimum(braess, 0.75)
    classic = solve_optimum(braess, 0.75, SolverConfig(step_rule="classic", relative_gap_tol=1e-4, max_iterations=20_000))
    np.testing.assert_allclose(classic.loads.values, pairwise.loads.values, atol=2e-2)


def test_iteration_limit_reports_non_convergence(braess):
    config = SolverConfig(step_rule="classic", max_iterations=1)
    result = solve_optimum(braess, 0.75, config)
    assert not result.converged
    assert result.relative_gap > config.relative_gap_tol
    np.testing.assert_allclose(result.path_flow.values.sum(), 0.75)


def test_negative_tolls_use_absolute_gap(pigou):
    tolls = TollVector.from_mapping(pigou, {"e1": -5.0, "e2": -5.0})
    eq = solve_equilibrium(pigou, 1.0, tolls)
    assert eq.converged
    np.testing.assert_allclose(eq.loads.values, [0, 1], atol=1e-9)


def test_results_are_deterministic(cyclic):
    first = solve_equilibrium(cyclic, 1.3)
    second = solve_equilibrium(cyclic, 1.3)
    np.testing.assert_array_equal(first.path_flow.values, second.path_flow.values)
    np.testing.assert_array_equal(first.objective_trace, second.objective_trace)


def test_solver_matches_brute_force_on_small_instances(pigou, braess, cyclic):
    """
    Frank–Wolfe never does worse than a simplex grid search. Closeness to the
    grid minimum is checked only up to 3 paths: a 1e-3 grid over 4 paths is
    too large to enumerate, so 4-path instances (cyclic included) get the
    one-sided bound at resolution 1e-2.
    """
    networks = [pigou, braess, cyclic] + [n for n in map(random_damg, range(20)) if _small(n)][:4]
    for network in networks:
        demand = {c: 0.8 for c in network.commodity_ids}
        eq = solve_equilibrium(network, demand)
        opt = solve_optimum(network, demand)
        assert eq.converged and opt.converged
        beckmann = brute_force_minimum(network, demand, 1e-3 if _paths(network) <= 3 else 1e-2, "beckmann")
        social = brute_force_minimum(network, demand, 1e-3 if _paths(network) <= 3 else 1e-2, "social")
        assert eq.objective <= beckmann + 1e-7
        assert opt.objective <= social + 1e-7
        if _paths(network) <= 3:
            assert beckmann - eq.objective <= 1e-4
            assert social - opt.objective <= 1e-4


def _paths(network) -> int:
    return len(network.path_set())


def _small(network) -> bool:
    return len(network.commodities) == 1 and _paths(network) <= 4
