"""Component decomposition, markovianity, twin graphs and surgery."""

import numpy as np
import pytest

from causalem.errors import ModelError
from causalem.factors import query
from causalem.graphs import (
    World,
    c_components,
    markovianity_class,
    twin_graph,
    world_name,
)
from causalem.model import (
    Scm,
    StructuralEquation,
    conservative_equation,
    endo,
    exo,
    validate_scm,
)
from conftest import random_fscm, random_markovian_dag
from oracles import bfs_reduction_components, enum_joint_endogenous, enum_query


def build_confounded_chain() -> Scm:
    """X1 -> X2 -> X3 -> X4 with U2 confounding X2 and X4."""
    xs = [endo(f"X{i}") for i in range(1, 5)]
    eqs = [
        StructuralEquation("X1", ("U1",), (0, 1)),
        # X2 = X1 xor first digit of U2; X4 = X3 xor second digit of U2
        StructuralEquation(
            "X2",
            ("X1", "U2"),
            tuple((x1 ^ (u & 1)) for x1 in range(2) for u in range(4)),
        ),
        StructuralEquation(
            "X3",
            ("X2", "U3"),
            tuple((x2 ^ u) for x2 in range(2) for u in range(2)),
        ),
        StructuralEquation(
            "X4",
            ("X3", "U2"),
            tuple((x3 ^ (u >> 1)) for x3 in range(2) for u in range(4)),
        ),
    ]
    model = Scm([exo("U1", 2), exo("U2", 4), exo("U3", 2)] + xs, eqs)
    assert validate_scm(model).ok
    return model


def test_confounded_chain_components_and_contexts():
    model = build_confounded_chain()
    decomposition = c_components(model)
    by_exo = {c.exogenous: c for c in decomposition}
    assert set(by_exo) == {("U1",), ("U2",), ("U3",)}
    shared = by_exo[("U2",)]
    assert shared.endogenous == ("X2", "X4")
    assert shared.context == ("X1", "X2", "X3", "X4")
    assert shared.var_context("X2") == ("X1",)
    assert shared.var_context("X4") == ("X1", "X2", "X3")
    third = by_exo[("U3",)]
    assert third.context == ("X2", "X3")
    assert third.var_context("X3") == ("X2",)
    assert markovianity_class(model) == "quasi-markovian"


def test_markovian_chain_gives_singleton_components():
    xs = [endo(f"X{i}") for i in range(1, 6)]
    eqs = []
    exos = []
    for i, x in enumerate(xs):
        parents = [xs[i - 1]] if i else []
        card, eq = conservative_equation(x, parents, f"U{i + 1}")
        exos.append(exo(f"U{i + 1}", card))
        eqs.append(eq)
    model = Scm(exos + xs, eqs)
    decomposition = c_components(model)
    assert len(decomposition) == 5
    assert all(len(c.endogenous) == 1 and len(c.exogenous) == 1 for c in decomposition)
    assert markovianity_class(model) == "markovian"


def test_components_match_bfs_oracle_on_random_models():
    from causalem.benchmark import BenchmarkSpec, generate_benchmark

    rng = np.random.default_rng(7)
    models = [random_markovian_dag(rng, int(rng.integers(2, 6))) for _ in range(10)]
    models += [
        generate_benchmark(
            BenchmarkSpec(m=int(rng.integers(3, 7)), klass=klass, seed=700 + i)
        ).observable
        for i, klass in enumerate(
            ["quasi-markovian", "general", "quasi-markovian", "general"]
        )
    ]
    for model in models:
        decomposition = c_components(model)
        ours = {
            frozenset(c.exogenous) | frozenset(c.endogenous) for c in decomposition
        }
        oracle = bfs_reduction_components(model)
        assert ours == oracle


def test_markovianity_classes(study_model):
    assert markovianity_class(study_model) == "markovian"
    assert markovianity_class(build_confounded_chain()) == "quasi-markovian"
    from causalem.benchmark import BenchmarkSpec, generate_benchmark

    inst = generate_benchmark(BenchmarkSpec(m=5, klass="general", seed=0))
    assert markovianity_class(inst.observable) == "general"


def test_twin_graph_two_worlds_shares_exogenous(two_node_model):
    twin = twin_graph(two_node_model, [World.make(0), World.make(1)])
    endo_names = {v.name for v in twin.endogenous}
    assert endo_names == {"X#0", "Y#0", "X#1", "Y#1"}
    exo_names = {v.name for v in twin.exogenous}
    assert exo_names == {"U", "V"}
    assert set(twin.edges) == {
        ("U", "X#0"), ("U", "X#1"),
        ("V", "Y#0"), ("V", "Y#1"),
        ("X#0", "Y#0"), ("X#1", "Y#1"),
    }


def test_twin_graph_study_model_counts(study_model):
    twin = twin_graph(study_model, [World.make(0), World.make(1)])
    assert len(twin.endogenous) == 6
    assert {v.name for v in twin.exogenous} == {"W", "U", "V"}


def test_twin_graph_prunes_orphan_exogenous(study_model):
    # intervening on X in both worlds leaves its exogenous parent childless
    twin = twin_graph(
        study_model, [World.make(0, {"X": 1}), World.make(1, {"X": 0})]
    )
    assert {v.name for v in twin.exogenous} == {"W", "V"}
    assert twin.parents(world_name("X", 0)) == ()
    assert twin.equations[world_name("X", 0)].table == (1,)
    assert twin.equations[world_name("X", 1)].table == (0,)


def test_twin_graph_single_world_isomorphic(two_node_model):
    twin = twin_graph(two_node_model, [World.make(0)])
    assert len(twin.endogenous) == len(two_node_model.endogenous)
    assert {v.name for v in twin.exogenous} == {"U", "V"}
    renamed = {world_name(v.name, 0): v.name for v in two_node_model.endogenous}
    for copy_name, original in renamed.items():
        eq = twin.equations[copy_name]
        expected = two_node_model.equations[original]
        mapped_parents = tuple(renamed.get(p, p) for p in eq.parents)
        assert mapped_parents == expected.parents
        assert eq.table == expected.table


def test_twin_graph_node_count_property():
    rng = np.random.default_rng(3)
    for _ in range(5):
        model = random_markovian_dag(rng, int(rng.integers(2, 5)))
        k = int(rng.integers(1, 4))
        twin = twin_graph(model, [World.make(i) for i in range(k)])
        assert len(twin.endogenous) == k * len(model.endogenous)
        assert len(twin.exogenous) <= len(model.exogenous)


def test_twin_graph_rejects_exogenous_intervention(two_node_model):
    with pytest.raises(ModelError):
        twin_graph(two_node_model, [World.make(0, {"U": 0})])


def test_factorisation_identity_on_random_fscms():
    # product of component conditionals reproduces the joint marginal
    rng = np.random.default_rng(11)
    for _ in range(10):
        model = random_fscm(rng, random_markovian_dag(rng, int(rng.integers(2, 5))))
        joint = enum_joint_endogenous(model)
        decomposition = c_components(model)
        endo_names = [v.name for v in model.endogenous]
        for cfg, expected in joint.items():
            assignment = dict(zip(endo_names, cfg))
            product = 1.0
            for comp in decomposition:
                for child in comp.endogenous:
                    ctx_vars = comp.var_context(child)
                    evidence = {v: assignment[v] for v in ctx_vars}
                    res = query(model, (child,), evidence)
                    if not res.supported:
                        product = 0.0
                        break
                    product *= res.values[assignment[child]]
            assert product == pytest.approx(expected, abs=1e-9)


def test_posterior_depends_only_on_component_context():
    # P(U | full endogenous evidence) equals P(U | component context)
    model = build_confounded_chain()
    pmfs = {
        "U1": (0.3, 0.7),
        "U2": (0.1, 0.2, 0.3, 0.4),
        "U3": (0.6, 0.4),
    }
    fscm = model.with_exogenous_pmfs(pmfs)
    decomposition = c_components(fscm)
    comp = next(c for c in decomposition if c.exogenous == ("U2",))
    from causalem.model import iter_configurations

    for full in iter_configurations([2, 2, 2, 2]):
        evidence = dict(zip(("X1", "X2", "X3", "X4"), full))
        res_full = query(fscm, ("U2",), evidence)
        ctx_evidence = {v: evidence[v] for v in comp.context}
        res_ctx = query(fscm, ("U2",), ctx_evidence)
        if not res_full.supported:
            continue
        assert np.allclose(res_full.values, res_ctx.values, atol=1e-12)
        oracle = enum_query(fscm, ("U2",), evidence)
        expected = np.array([oracle.get((s,), 0.0) for s in range(4)])
        assert np.allclose(res_full.values, expected, atol=1e-12)


def test_twin_graph_serialises_to_model_format(tmp_path, study_model):
    from causalem.io import load_model, save_model

    twin = twin_graph(study_model, [World.make(0, {"X": 1}), World.make(1, {"X": 0})])
    path = tmp_path / "twin.json"
    save_model(twin, path)
    assert load_model(path) == twin


def test_twin_graph_rejects_colliding_names():
    from causalem.model import Scm, StructuralEquation, endo, exo

    model = Scm(
        [exo("U", 2), endo("X"), endo("X#0")],
        [
            StructuralEquation("X", ("U",), (0, 1)),
            StructuralEquation("X#0", ("X",), (0, 1)),
        ],
    )
    with pytest.raises(ModelError):
        twin_graph(model, [World.make(0)])
