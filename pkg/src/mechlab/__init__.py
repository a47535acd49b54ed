"""Strategyproof knapsack mechanisms with exact rational arithmetic."""

from .audit import (
    AuditReport,
    Deviation,
    SpViolation,
    ValueCache,
    audit_approximation,
    audit_instance,
    audit_strategyproofness,
    enumerate_deviations,
    lower_bound_probe,
    run_sweep,
)
from .core import (
    FractionalGreedySolution,
    Instance,
    InstanceFormatError,
    InstanceTooLargeError,
    Item,
    MechlabError,
    NotApplicableError,
    Outcome,
    agent_opt,
    canonical_order,
    constrained_agent_opt,
    fractional_greedy,
    integral_greedy,
    solve_opt,
    to_rational,
)
from .general import (
    MechanismId,
    OutcomeDistribution,
    mech_best_individual,
    mech_greedy,
    mech_naive_greedy,
    mech_randomized_greedy,
    mech_single_greedy,
    ratio_floor,
    run_mechanism,
)
from .instances import (
    CATALOG_NAMES,
    GeneratorSpec,
    dumps_instance,
    enumerate_unit_density,
    generate,
    golden_ratio_approx,
    lb_det_family,
    lb_rand_family,
    loads_instance,
    paper_deviation,
    paper_instance,
    read_instance,
    write_instance,
)
from .unit_density import (
    a_dominates,
    compute_fit_sets,
    compute_large_sets,
    mech_fit_two,
    mech_large_fit,
    mech_randomized_fit,
    restricted_greedy,
)

__version__ = "0.1.0"
