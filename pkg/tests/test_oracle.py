"""Constraint systems, vertex enumeration, exact bounds, constructive PMFs."""

from fractions import Fraction

import numpy as np
import pytest

from causalem.em import run_many
from causalem.errors import DataError, IncompatibleDataError, ModelError
from causalem.graphs import c_components
from causalem.likelihood import empirical_frequencies, ll_star, marginal_ll
from causalem.model import (
    Dataset,
    Scm,
    StructuralEquation,
    endo,
    exo,
    find_states_by_function,
    restrict_model,
)
from causalem.oracle import (
    compatible_quantification,
    constraint_system,
    embeds,
    exact_bounds,
    polytope_vertices,
)
from conftest import random_fscm, random_markovian_dag
from causalem.benchmark import sample_dataset


@pytest.fixture(scope="module")
def study_system(study_model, study_data):
    decomposition = c_components(study_model)
    tables = empirical_frequencies(study_data, decomposition, study_model)
    return constraint_system(study_model, tables, decomposition)


def test_study_constraint_counts(study_system):
    by_exo = {g.exogenous[0]: g for g in study_system.groups}
    assert by_exo["W"].independent_rows == 1
    assert by_exo["U"].independent_rows == 2
    assert by_exo["V"].independent_rows == 4


def test_study_constraint_rhs_values(study_system):
    u_group = next(g for g in study_system.groups if g.exogenous == ("U",))
    # context (Z=0, X=0) has right-hand side P(X=0 | Z=0)
    idx = u_group.contexts.index((0, 0))
    assert u_group.rhs[idx] == Fraction(116, 470)
    idx = u_group.contexts.index((1, 0))
    assert u_group.rhs[idx] == Fraction(120, 230)


def test_restricted_system_infeasible(restricted_study_model, study_data):
    decomposition = c_components(restricted_study_model)
    tables = empirical_frequencies(study_data, decomposition, restricted_study_model)
    system = constraint_system(restricted_study_model, tables, decomposition)
    assert not system.is_feasible()
    u_group = next(g for g in system.groups if g.exogenous == ("U",))
    assert u_group.vertices() == ()


def test_identity_mechanism_forces_empirical_pmf():
    model = Scm(
        [exo("U", 2), endo("X")], [StructuralEquation("X", ("U",), (0, 1))]
    )
    data = Dataset(("X",), {(0,): 25, (1,): 75})
    decomposition = c_components(model)
    tables = empirical_frequencies(data, decomposition, model)
    system = constraint_system(model, tables, decomposition)
    verts = system.groups[0].vertices()
    assert verts == ((Fraction(1, 4), Fraction(3, 4)),)


def test_polytope_vertices_simplex_corners():
    verts = polytope_vertices([], [], 3)
    assert sorted(verts) == sorted(
        [
            (Fraction(1), Fraction(0), Fraction(0)),
            (Fraction(0), Fraction(1), Fraction(0)),
            (Fraction(0), Fraction(0), Fraction(1)),
        ]
    )


def test_polytope_vertices_segment():
    # p0 + p1 = 1/2 within the 3-simplex: a 1-dimensional face section
    verts = polytope_vertices([[1, 1, 0]], [Fraction(1, 2)], 3)
    assert sorted(verts) == sorted(
        [
            (Fraction(1, 2), Fraction(0), Fraction(1, 2)),
            (Fraction(0), Fraction(1, 2), Fraction(1, 2)),
        ]
    )


def test_polytope_vertices_infeasible():
    verts = polytope_vertices([[1, 0], [1, 0]], [Fraction(1, 3), Fraction(2, 3)], 2)
    assert verts == ()


def test_exact_bounds_study_pns(study_model, study_data):
    result = exact_bounds(study_model, study_data, "pns(X,Y)")
    assert result.lower == pytest.approx(0.0, abs=1e-9)
    # z-stratified envelope evaluated on the empirical study frequencies
    expected_upper = (470 / 700) * (2 / 116) + (230 / 700) * (1 / 110)
    assert result.upper == pytest.approx(expected_upper, abs=1e-9)


def test_exact_bounds_constraint_order_invariance(study_model, study_data):
    # shuffling the dataset's stored order must not change anything
    shuffled = Dataset(
        ("Z", "X", "Y"), dict(reversed(list(study_data.counts.items())))
    )
    a = exact_bounds(study_model, study_data, "pns(X,Y)")
    b = exact_bounds(study_model, shuffled, "pns(X,Y)")
    assert a.interval == b.interval


def test_exact_bounds_incompatible_raises(restricted_study_model, study_data):
    with pytest.raises(IncompatibleDataError):
        exact_bounds(restricted_study_model, study_data, "pns(X,Y)")


def test_exact_bounds_rejects_general_models():
    from causalem.benchmark import BenchmarkSpec, generate_benchmark

    inst = generate_benchmark(BenchmarkSpec(m=4, klass="general", seed=1))
    data = sample_dataset(inst.truth, 200, seed=2)
    with pytest.raises(ModelError):
        exact_bounds(inst.observable, data, "pns(X1,X4)")


def test_exact_bounds_degenerate_empirical_tables():
    model = Scm(
        [exo("U", 2), endo("X")], [StructuralEquation("X", ("U",), (0, 1))]
    )
    data = Dataset(("X",), {(0,): 10, (1,): 30})
    result = exact_bounds(model, data, "prob(X=1)")
    assert result.lower == pytest.approx(0.75, abs=1e-12)
    assert result.upper == pytest.approx(0.75, abs=1e-12)


def test_exact_bounds_contain_large_em_sample():
    rng = np.random.default_rng(2)
    from causalem.benchmark import BenchmarkSpec, generate_benchmark
    from causalem.em import bounds as em_bounds

    inst = generate_benchmark(BenchmarkSpec(m=3, klass="markovian", seed=8))
    data = sample_dataset(inst.truth, 500, seed=9)
    exact = exact_bounds(inst.observable, data, "pns(X1,X3)")
    approx = em_bounds(
        inst.observable, data, "pns(X1,X3)", n_runs=60, seed=10, max_iter=100_000
    )
    assert exact.lower - 1e-6 <= approx.lower
    assert approx.upper <= exact.upper + 1e-6


def test_compatible_quantification_no_parent_case():
    model = Scm(
        [exo("U", 2), endo("X")], [StructuralEquation("X", ("U",), (0, 1))]
    )
    data = Dataset(("X",), {(0,): 30, (1,): 10})
    tables = empirical_frequencies(data, c_components(model), model)
    pmfs = compatible_quantification(model, tables, exact=True)
    assert pmfs["U"] == (Fraction(3, 4), Fraction(1, 4))


def test_compatible_quantification_satisfies_study_constraints(
    study_model, study_data, study_system
):
    tables = empirical_frequencies(
        study_data, c_components(study_model), study_model
    )
    pmfs = compatible_quantification(study_model, tables, exact=True)
    u = pmfs["U"]
    assert u[0] + u[2] == Fraction(116, 470)
    assert u[0] + u[1] == Fraction(120, 230)
    floats = {k: np.array([float(x) for x in v]) for k, v in pmfs.items()}
    assert study_system.max_residual(floats) < 1e-12


def test_compatible_quantification_requires_defined_contexts(study_model):
    data = Dataset(("Z", "X", "Y"), {(0, 0, 0): 5, (0, 1, 1): 5})
    tables = empirical_frequencies(data, c_components(study_model), study_model)
    with pytest.raises(DataError):
        compatible_quantification(study_model, tables)
    pmfs = compatible_quantification(study_model, tables, fill_undefined=True)
    fscm = study_model.with_exogenous_pmfs({k: tuple(v) for k, v in pmfs.items()})
    value = marginal_ll(fscm, data)
    assert value.is_finite
    assert value.value == pytest.approx(
        ll_star(data, tables), abs=1e-9
    )


def test_compatible_quantification_random_models_reach_maximum():
    rng = np.random.default_rng(14)
    for _ in range(10):
        model = random_markovian_dag(rng, int(rng.integers(2, 5)))
        truth = random_fscm(rng, model)
        data = sample_dataset(truth, 400, seed=int(rng.integers(2**31)))
        decomposition = c_components(model)
        tables = empirical_frequencies(data, decomposition, model)
        pmfs = compatible_quantification(model, tables, fill_undefined=True)
        system = constraint_system(model, tables, decomposition)
        assert system.max_residual(pmfs) < 1e-9
        fscm = model.with_exogenous_pmfs({k: tuple(v) for k, v in pmfs.items()})
        assert marginal_ll(fscm, data).value == pytest.approx(
            ll_star(data, tables), abs=1e-6
        )


def test_embedding_distinguishes_restrictions(study_model, study_data):
    # dropping the always-treat mechanism contradicts the data: not embedded
    from conftest import X_CONST1, X_CONST0

    const1 = find_states_by_function(study_model, "X", [X_CONST1])[0]
    const0 = find_states_by_function(study_model, "X", [X_CONST0])[0]
    keep_upper = {"U": [u for u in range(4) if u != const1]}
    keep_lower = {"U": [u for u in range(4) if u != const0]}
    assert not embeds(study_model, study_data, keep_upper)
    assert embeds(study_model, study_data, keep_lower)
    # and the feasibility of the restricted systems agrees with the verdicts
    lower_model = restrict_model(study_model, keep_lower)
    decomposition = c_components(lower_model)
    tables = empirical_frequencies(study_data, decomposition, lower_model)
    assert constraint_system(lower_model, tables, decomposition).is_feasible()


def test_converged_em_runs_land_in_feasible_set_random_models():
    rng = np.random.default_rng(99)
    for _ in range(5):
        model = random_markovian_dag(rng, 3)
        truth = random_fscm(rng, model)
        data = sample_dataset(truth, 300, seed=int(rng.integers(2**31)))
        decomposition = c_components(model)
        tables = empirical_frequencies(data, decomposition, model)
        system = constraint_system(model, tables, decomposition)
        for run in run_many(model, data, n_runs=3, seed=4):
            assert run.converged
            assert system.max_residual(
                {k: np.array(v) for k, v in run.pmfs.items()}
            ) < 1e-5


def test_exact_bounds_rejects_contradicted_deterministic_component():
    # an endogenous variable with no exogenous parent is a fixed mechanism;
    # data it cannot produce must be rejected
    model = Scm(
        [exo("U", 2), endo("X"), endo("Y")],
        [
            StructuralEquation("X", ("U",), (0, 1)),
            StructuralEquation("Y", ("X",), (0, 1)),
        ],
    )
    good = Dataset(("X", "Y"), {(0, 0): 5, (1, 1): 5})
    bad = Dataset(("X", "Y"), {(0, 1): 5})
    result = exact_bounds(model, good, "prob(Y=1)")
    assert result.lower == pytest.approx(0.5)
    with pytest.raises(IncompatibleDataError):
        exact_bounds(model, bad, "prob(Y=1)")


def test_exact_bounds_dominate_feasible_interior_points(study_model, study_data):
    # the query extrema over the feasible set are attained at vertex
    # combinations; random interior mixtures must stay inside, for both the
    # joint-counterfactual query and the conditional (ratio) one
    decomposition = c_components(study_model)
    tables = empirical_frequencies(study_data, decomposition, study_model)
    system = constraint_system(study_model, tables, decomposition)
    vertex_sets = {
        g.exogenous[0]: np.array(
            [[float(x) for x in v] for v in g.vertices()]
        )
        for g in system.groups
    }
    rng = np.random.default_rng(123)
    from causalem.queries import pn as pn_value, pns as pns_value

    pns_bounds = exact_bounds(study_model, study_data, "pns(X,Y)")
    pn_bounds = exact_bounds(study_model, study_data, "pn(X=1, Y=1)")
    for _ in range(60):
        pmfs = {}
        for name, verts in vertex_sets.items():
            weights = rng.dirichlet(np.ones(len(verts)))
            pmfs[name] = tuple(weights @ verts)
        fscm = study_model.with_exogenous_pmfs(pmfs)
        value = pns_value(fscm, "X", "Y")
        assert pns_bounds.lower - 1e-9 <= value <= pns_bounds.upper + 1e-9
        value = pn_value(fscm, "X", "Y")
        assert pn_bounds.lower - 1e-9 <= value <= pn_bounds.upper + 1e-9


def test_exact_bounds_quasi_markovian_component():
    # a confounded pair makes one component carry two endogenous variables;
    # the constraints stay linear in its single exogenous PMF
    from causalem.benchmark import BenchmarkSpec, generate_benchmark
    from causalem.em import bounds as em_bounds

    inst = None
    for seed in range(30, 60):
        candidate = generate_benchmark(
            BenchmarkSpec(m=3, klass="quasi-markovian", seed=seed, truth_concentration=0.5)
        )
        data = sample_dataset(candidate.truth, 400, seed=seed + 1)
        decomposition = c_components(candidate.observable)
        tables = empirical_frequencies(data, decomposition, candidate.observable)
        system = constraint_system(candidate.observable, tables, decomposition)
        if any(len(g.contexts) > 4 for g in system.groups) and system.is_feasible():
            inst = (candidate, data, system)
            break
    assert inst is not None
    candidate, data, system = inst
    exact = exact_bounds(candidate.observable, data, "pns(X1,X3)")
    approx = em_bounds(
        candidate.observable, data, "pns(X1,X3)", n_runs=30, seed=5,
        max_iter=200_000,
    )
    assert exact.lower - 1e-6 <= approx.lower
    assert approx.upper <= exact.upper + 1e-6
    # random mixtures of the feasible vertices stay inside the bounds
    rng = np.random.default_rng(0)
    vertex_arrays = {
        g.exogenous[0]: np.array([[float(x) for x in v] for v in g.vertices()])
        for g in system.groups
    }
    from causalem.queries import pns as pns_value

    for _ in range(20):
        pmfs = {}
        for name, verts in vertex_arrays.items():
            weights = rng.dirichlet(np.ones(len(verts)))
            pmfs[name] = tuple(weights @ verts)
        value = pns_value(candidate.observable.with_exogenous_pmfs(pmfs), "X1", "X3")
        assert exact.lower - 1e-9 <= value <= exact.upper + 1e-9


def test_vertex_enumeration_cap_suggests_em_fallback():
    # a 3-parent conservative mechanism has 256 exogenous states; basic-
    # solution enumeration is astronomically large and must fail fast
    from causalem.errors import SizeCapError
    from causalem.model import conservative_equation, endo, exo

    a, b, c, w = endo("A"), endo("B"), endo("C"), endo("W")
    variables = []
    equations = []
    for var in (a, b, c):
        card, eq = conservative_equation(var, [], f"U{var.name}")
        variables.append(exo(f"U{var.name}", card))
        equations.append(eq)
    card, eq = conservative_equation(w, [a, b, c], "V")
    variables.append(exo("V", card))
    equations.append(eq)
    model = Scm(variables + [a, b, c, w], equations)
    rng = np.random.default_rng(1)
    rows = rng.integers(0, 2, size=(200, 4))
    data = Dataset.from_rows(("A", "B", "C", "W"), rows)
    with pytest.raises(SizeCapError):
        exact_bounds(model, data, "pns(A,W)")
