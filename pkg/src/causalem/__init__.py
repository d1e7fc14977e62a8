"""Bounds on counterfactual probabilities for partially specified SCMs.

Repeated runs of a causal EM sample the exogenous quantifications
compatible with observed categorical data; plugging each converged run
into the model and evaluating a counterfactual query yields an inner
approximation of the query's bounds, with closed-form credibility in the
number of runs.  Exact oracles (vertex enumeration, constructive
compatible quantifications) cover the Markovian and quasi-Markovian
classes at small scale.
"""

from .benchmark import (
    BenchmarkInstance,
    BenchmarkSpec,
    benchmark_instance_rows,
    generate_benchmark,
    rmse,
    sample_dataset,
)
from .em import (
    BoundsResult,
    CredibleInterval,
    EmRun,
    bounds,
    credible_interval,
    em_run,
    required_runs,
    run_many,
)
from .errors import (
    CausalemError,
    DataError,
    EstimationError,
    IncompatibleDataError,
    ModelError,
    NotFullySpecifiedError,
    QueryParseError,
    RestrictionError,
    SizeCapError,
    UnsupportedEvidenceError,
)
from .estimator import CounterfactualBounds
from .factors import Factor, QueryResult, joint_probability, query
from .graphs import (
    CComponent,
    ComponentDecomposition,
    World,
    c_components,
    markovianity_class,
    twin_graph,
    world_name,
)
from .io import load_dataset, load_model, save_dataset, save_model
from .likelihood import (
    CompatibilityResult,
    EmpiricalTables,
    MarginalLL,
    compatibility_test,
    empirical_frequencies,
    ll_star,
    marginal_ll,
)
from .model import (
    Dataset,
    Pmf,
    Scm,
    StructuralEquation,
    ValidationReport,
    Variable,
    conservative_equation,
    endo,
    exo,
    find_states_by_function,
    function_signature,
    restrict_model,
    validate_scm,
)
from .oracle import (
    ConstraintSystem,
    ExactBounds,
    compatible_quantification,
    constraint_system,
    embeds,
    exact_bounds,
)
from .queries import (
    QueryDescriptor,
    QueryOutcome,
    causal_effect,
    evaluate,
    intervene,
    parse_query,
    pn,
    pns,
    ps,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
