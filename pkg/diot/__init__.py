# diot/__init__.py
"""
Demand-independent optimal tolls for nonatomic routing games.
"""
from diot.analysis import (
    DemandGrid,
    SweepReport,
    UsedPathSet,
    budget_check,
    default_grid,
    estimate_used_paths,
    no_diot_search,
    scan_equilibria,
    sweep,
    verify_diot,
)
from diot.cost_model import (
    BprCost,
    CostTable,
    MonomialSumCost,
    beckmann_term,
    cost_value,
    derivative_value,
    is_bpr_type,
    marginal_cost_value,
    path_cost,
)
from diot.network_io import dump_network, dump_tolls, load_network, load_tolls
from diot.network_model import (
    Commodity,
    DemandVector,
    Edge,
    LoadProfile,
    Network,
    Path,
    PathFlow,
    TollVector,
    commodity_order,
    enumerate_paths,
    loads_from_flow,
    topological_sort,
    validate_flow,
)
from diot.solver import (
    SolveResult,
    SolverConfig,
    check_wardrop,
    price_of_anarchy,
    social_cost,
    solve_equilibrium,
    solve_optimum,
)
from diot.tolls import (
    DiotConstraintSystem,
    LpOutcome,
    TollConstruction,
    budget_diot,
    build_constraint_system,
    marginal_cost_tolls,
    nonnegative_diot_dag,
    solve_diot_lp,
    trivial_diot,
)

__version__ = "1.0.0"
