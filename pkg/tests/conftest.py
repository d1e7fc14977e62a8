"""Shared fixtures: the treatment/recovery study models and small builders."""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from causalem.model import (
    Dataset,
    Scm,
    conservative_equation,
    endo,
    exo,
    find_states_by_function,
    restrict_model,
)

# Observational study over gender (Z), treatment (X), recovery (Y);
# 700 patients.
STUDY_COUNTS = {
    (0, 0, 0): 2,
    (0, 0, 1): 114,
    (0, 1, 0): 41,
    (0, 1, 1): 313,
    (1, 0, 0): 107,
    (1, 0, 1): 13,
    (1, 1, 0): 109,
    (1, 1, 1): 1,
}

# Truth tables over the lexicographic parent configurations used to pin
# mechanism states semantically.  X's mechanisms are maps z -> x over
# (z=0, z=1); Y's are maps (x, z) -> y over ((0,0), (0,1), (1,0), (1,1)).
X_NOT_Z = (1, 0)
X_CONST0 = (0, 0)
X_IDENTITY = (0, 1)
X_CONST1 = (1, 1)
Y_X_OR_NOT_Z = (1, 0, 1, 1)
Y_NOT_X_OR_NOT_Z = (1, 1, 1, 0)
Y_NOT_X_AND_Z = (0, 1, 0, 0)


def build_study_model() -> Scm:
    """Conservative model for the study: Z <- W, X <- (Z, U), Y <- (X, Z, V)."""
    z, x, y = endo("Z"), endo("X"), endo("Y")
    card_w, eq_z = conservative_equation(z, [], "W")
    card_u, eq_x = conservative_equation(x, [z], "U")
    card_v, eq_y = conservative_equation(y, [x, z], "V")
    return Scm(
        [exo("W", card_w), exo("U", card_u), exo("V", card_v), z, x, y],
        [eq_z, eq_x, eq_y],
    )


def build_two_node_model() -> Scm:
    """Conservative two-variable model: X <- U, Y <- (X, V)."""
    x, y = endo("X"), endo("Y")
    card_u, eq_x = conservative_equation(x, [], "U")
    card_v, eq_y = conservative_equation(y, [x], "V")
    return Scm([exo("U", card_u), exo("V", card_v), x, y], [eq_x, eq_y])


def restrict_study_model_upper(model: Scm) -> Scm:
    """Drop X's always-treat mechanism (the restriction that contradicts the data)."""
    const1 = find_states_by_function(model, "X", [X_CONST1])[0]
    keep = [u for u in range(model.cardinality("U")) if u != const1]
    return restrict_model(model, {"U": keep})


def build_reduced_study_model() -> Scm:
    """Three mechanisms each for X and Y, with the published exogenous PMFs."""
    model = build_study_model()
    u_keep = find_states_by_function(model, "X", [X_NOT_Z, X_CONST0, X_IDENTITY])
    v_keep = find_states_by_function(
        model, "Y", [Y_X_OR_NOT_Z, Y_NOT_X_OR_NOT_Z, Y_NOT_X_AND_Z]
    )
    reduced = restrict_model(model, {"U": list(u_keep), "V": list(v_keep)})
    return reduced.with_exogenous_pmfs(
        {
            "W": (470 / 700, 230 / 700),
            "U": (0.677, 0.0, 0.323),
            "V": (0.47, 0.439, 0.091),
        }
    )


def random_markovian_dag(
    rng: np.random.Generator, n_nodes: int, max_parents: int = 2
) -> Scm:
    """Random conservative Markovian model over binary endogenous variables."""
    names = [f"X{i}" for i in range(n_nodes)]
    variables = [endo(n) for n in names]
    exo_vars = []
    equations = []
    for i, var in enumerate(variables):
        k = int(rng.integers(0, min(i, max_parents) + 1))
        parents_idx = sorted(rng.choice(i, size=k, replace=False)) if k else []
        parents = [variables[j] for j in parents_idx]
        card, eq = conservative_equation(var, parents, f"U{i}")
        exo_vars.append(exo(f"U{i}", card))
        equations.append(eq)
    return Scm(exo_vars + variables, equations)


def random_fscm(rng: np.random.Generator, model: Scm, concentration: float = 1.0) -> Scm:
    pmfs = {
        v.name: tuple(rng.dirichlet(np.full(v.cardinality, concentration)))
        for v in model.exogenous
    }
    return model.with_exogenous_pmfs(pmfs)


@pytest.fixture(scope="session")
def study_model() -> Scm:
    return build_study_model()


@pytest.fixture(scope="session")
def study_data() -> Dataset:
    return Dataset(("Z", "X", "Y"), STUDY_COUNTS)


@pytest.fixture(scope="session")
def restricted_study_model(study_model) -> Scm:
    return restrict_study_model_upper(study_model)


@pytest.fixture(scope="session")
def reduced_study_model() -> Scm:
    return build_reduced_study_model()


@pytest.fixture(scope="session")
def two_node_model() -> Scm:
    return build_two_node_model()
