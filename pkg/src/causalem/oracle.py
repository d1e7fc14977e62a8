"""Ground-truth machinery for the EM approximation.

The compatibility constraint system ties each exogenous quantification to
the empirical conditionals; for Markovian and quasi-Markovian models the
constraints are linear per exogenous variable, and exhaustive enumeration
of the basic feasible solutions yields every vertex of the feasible
polytope exactly.  Query values are multilinear in the per-variable PMFs,
so evaluating every vertex combination gives exact query bounds.  Also
here: the constructive compatible quantification for conservative
Markovian models, and the embedding test for restrictions.

Constraint right-hand sides and vertex coordinates are exact rationals;
query evaluation at vertices is floating point.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DataError, IncompatibleDataError, ModelError, SizeCapError
from .factors import component_indicator
from .graphs import (
    MARKOVIAN,
    QUASI_MARKOVIAN,
    ComponentDecomposition,
    c_components,
    markovianity_class,
)
from .likelihood import EmpiricalTables, empirical_frequencies
from .model import Dataset, Scm, function_signature, iter_configurations
from .queries import QueryDescriptor, evaluate, parse_query

# -- exact linear algebra ----------------------------------------------------


def _rref(rows: list[list[Fraction]]) -> tuple[list[list[Fraction]], bool]:
    """Reduced row-echelon form; second value is False if a row reads 0 = c."""
    rows = [list(r) for r in rows]
    n_cols = len(rows[0]) if rows else 0
    pivot_row = 0
    for col in range(n_cols - 1):
        pivot = None
        for r in range(pivot_row, len(rows)):
            if rows[r][col] != 0:
                pivot = r
                break
        if pivot is None:
            continue
        rows[pivot_row], rows[pivot] = rows[pivot], rows[pivot_row]
        lead = rows[pivot_row][col]
        rows[pivot_row] = [v / lead for v in rows[pivot_row]]
        for r in range(len(rows)):
            if r != pivot_row and rows[r][col] != 0:
                factor = rows[r][col]
                rows[r] = [a - factor * b for a, b in zip(rows[r], rows[pivot_row])]
        pivot_row += 1
        if pivot_row == len(rows):
            break
    reduced = [r for r in rows if any(v != 0 for v in r[:-1])]
    consistent = all(
        any(v != 0 for v in r[:-1]) or r[-1] == 0 for r in rows
    )
    return reduced, consistent


def _solve_square(
    a: list[list[Fraction]], b: list[Fraction]
) -> list[Fraction] | None:
    """Unique solution of a square rational system, or None if singular."""
    n = len(a)
    rows = [list(r) + [bv] for r, bv in zip(a, b)]
    for col in range(n):
        pivot = next((r for r in range(col, n) if rows[r][col] != 0), None)
        if pivot is None:
            return None
        rows[col], rows[pivot] = rows[pivot], rows[col]
        lead = rows[col][col]
        rows[col] = [v / lead for v in rows[col]]
        for r in range(n):
            if r != col and rows[r][col] != 0:
                factor = rows[r][col]
                rows[r] = [x - factor * y for x, y in zip(rows[r], rows[col])]
    return [rows[i][n] for i in range(n)]


def polytope_vertices(
    constraints: Sequence[Sequence[Fraction | int]],
    rhs: Sequence[Fraction],
    dimension: int,
    support_cap: int = 500_000,
) -> tuple[tuple[Fraction, ...], ...]:
    """All vertices of ``{p >= 0, sum(p) = 1, constraints @ p = rhs}``.

    Enumerates basic solutions: every support of size equal to the system's
    rank whose square subsystem is uniquely solvable and non-negative.
    Returns an empty tuple when the polytope is empty.
    """
    aug: list[list[Fraction]] = [
        [Fraction(v) for v in row] + [Fraction(b)] for row, b in zip(constraints, rhs)
    ]
    aug.append([Fraction(1)] * dimension + [Fraction(1)])
    reduced, consistent = _rref(aug)
    if not consistent:
        return ()
    rank = len(reduced)
    n_supports = math.comb(dimension, rank)
    if n_supports > support_cap:
        raise SizeCapError(
            f"vertex enumeration needs {n_supports} candidate supports, "
            f"exceeding the cap {support_cap}"
        )
    coeff = [row[:-1] for row in reduced]
    target = [row[-1] for row in reduced]
    vertices: dict[tuple[Fraction, ...], None] = {}
    for support in itertools.combinations(range(dimension), rank):
        square = [[coeff[r][c] for c in support] for r in range(rank)]
        solution = _solve_square(square, target)
        if solution is None or any(v < 0 for v in solution):
            continue
        point = [Fraction(0)] * dimension
        for c, v in zip(support, solution):
            point[c] = v
        vertices[tuple(point)] = None
    return tuple(vertices.keys())


# -- constraint system --------------------------------------------------------


@dataclass(frozen=True)
class ConstraintGroup:
    """Compatibility constraints of one c-component.

    Rows pair an indicator over the component's joint exogenous states with
    an exact right-hand side (the product of empirical conditionals for that
    context).  With a single exogenous variable the rows are linear in its
    PMF; with several they constrain the product measure.
    """

    component: int
    exogenous: tuple[str, ...]
    exo_cards: tuple[int, ...]
    context_vars: tuple[str, ...]
    contexts: tuple[tuple[int, ...], ...]
    matrix: np.ndarray
    rhs: tuple[Fraction, ...]
    omitted: tuple[tuple[int, ...], ...] = ()

    @property
    def linear(self) -> bool:
        return len(self.exogenous) == 1

    @property
    def independent_rows(self) -> int:
        """Constraint rows independent given the simplex normalisation."""
        if not self.contexts:
            return 0
        dim = self.matrix.shape[1]
        aug = [
            [Fraction(int(v)) for v in row] + [b]
            for row, b in zip(self.matrix, self.rhs)
        ]
        aug.append([Fraction(1)] * dim + [Fraction(1)])
        reduced, _ = _rref(aug)
        return max(len(reduced) - 1, 0)

    def joint_pmf(self, pmfs: Mapping[str, Sequence[float]]) -> np.ndarray:
        joint = np.ones(1)
        for name in self.exogenous:
            joint = np.outer(joint, np.asarray(pmfs[name], dtype=float)).reshape(-1)
        return joint

    def residuals(self, pmfs: Mapping[str, Sequence[float]]) -> np.ndarray:
        if not self.contexts:
            return np.zeros(0)
        joint = self.joint_pmf(pmfs)
        lhs = self.matrix @ joint
        return lhs - np.array([float(b) for b in self.rhs])

    def vertices(
        self, support_cap: int = 500_000
    ) -> tuple[tuple[Fraction, ...], ...]:
        if not self.linear:
            raise ModelError(
                "vertex enumeration needs a single exogenous variable per component"
            )
        return polytope_vertices(
            [[int(v) for v in row] for row in self.matrix],
            list(self.rhs),
            self.exo_cards[0],
            support_cap=support_cap,
        )


@dataclass(frozen=True)
class ConstraintSystem:
    groups: tuple[ConstraintGroup, ...]

    def residuals(self, pmfs: Mapping[str, Sequence[float]]) -> np.ndarray:
        parts = [g.residuals(pmfs) for g in self.groups]
        return np.concatenate(parts) if parts else np.zeros(0)

    def max_residual(self, pmfs: Mapping[str, Sequence[float]]) -> float:
        res = self.residuals(pmfs)
        return float(np.abs(res).max()) if res.size else 0.0

    @property
    def linear(self) -> bool:
        return all(g.linear for g in self.groups)

    def is_feasible(self, support_cap: int = 500_000) -> bool:
        """Exact feasibility for linear (single-exogenous) systems."""
        if not self.linear:
            raise ModelError(
                "feasibility by vertex enumeration needs single-exogenous components"
            )
        return all(len(g.vertices(support_cap)) > 0 for g in self.groups)


def constraint_system(
    model: Scm,
    tables: EmpiricalTables,
    decomposition: ComponentDecomposition | None = None,
    size_cap: int | None = None,
) -> ConstraintSystem:
    """Build the compatibility constraints from empirical tables.

    One equality per component and observed context: the probability that
    the component's mechanisms realise the context equals the product of the
    member conditionals.  Contexts whose conditionals are undefined are
    omitted and reported on the group.
    """
    decomposition = decomposition or c_components(model)
    groups = []
    for comp in decomposition:
        if not comp.endogenous or not comp.exogenous:
            continue
        counts = tables.context_counts(comp.index)
        contexts = sorted(ctx for ctx, n in counts.items() if n > 0)
        kept = []
        rhs = []
        omitted = []
        col = {name: i for i, name in enumerate(comp.context)}
        for ctx in contexts:
            product = Fraction(1)
            ok = True
            for child in comp.endogenous:
                family = tables.family(child)
                sub = tuple(ctx[col[v]] for v in family.context_vars)
                if not family.defined(sub):
                    ok = False
                    break
                product *= family.frequency(sub, ctx[col[child]])
            if ok:
                kept.append(ctx)
                rhs.append(product)
            else:
                omitted.append(ctx)
        ctx_array = np.array(kept, dtype=np.int64).reshape(len(kept), -1)
        matrix = component_indicator(model, comp, ctx_array, size_cap=size_cap)
        groups.append(
            ConstraintGroup(
                component=comp.index,
                exogenous=comp.exogenous,
                exo_cards=tuple(model.cardinality(u) for u in comp.exogenous),
                context_vars=comp.context,
                contexts=tuple(kept),
                matrix=matrix,
                rhs=tuple(rhs),
                omitted=tuple(omitted),
            )
        )
    return ConstraintSystem(tuple(groups))


# -- exact bounds -------------------------------------------------------------


@dataclass(frozen=True)
class ExactBounds:
    lower: float
    upper: float
    vertex_counts: tuple[tuple[str, int], ...]
    combinations: int
    skipped: int = 0

    @property
    def interval(self) -> tuple[float, float]:
        return (self.lower, self.upper)


def exact_bounds(
    model: Scm,
    data: Dataset,
    query: QueryDescriptor | str,
    support_cap: int = 500_000,
    combination_cap: int = 100_000,
) -> ExactBounds:
    """Exact query bounds for Markovian or quasi-Markovian models.

    Enumerates the vertices of each exogenous variable's feasible polytope;
    the query is multilinear in the per-variable PMFs, so its extrema over
    the feasible set are attained at vertex combinations, all of which are
    evaluated.  Raises :class:`IncompatibleDataError` when some polytope is
    empty, and :class:`SizeCapError` when enumeration would exceed the caps
    (use the EM driver instead in that case).
    """
    descriptor = parse_query(query, model) if isinstance(query, str) else query
    decomposition = c_components(model)
    klass = markovianity_class(decomposition)
    if klass not in (MARKOVIAN, QUASI_MARKOVIAN):
        raise ModelError(
            "exact bounds need a Markovian or quasi-Markovian model; "
            "use the EM driver for the general class"
        )
    data.check_against(model)
    tables = empirical_frequencies(data, decomposition, model)
    system = constraint_system(model, tables, decomposition)

    for comp in decomposition:
        if comp.endogenous and not comp.exogenous:
            proj = data.project(comp.context)
            contexts = np.array(sorted(proj.counts), dtype=np.int64)
            indicator = component_indicator(model, comp, contexts.reshape(len(proj.counts), -1))
            if not (indicator[:, 0] > 0).all():
                raise IncompatibleDataError(
                    f"the deterministic mechanisms of {comp.endogenous} cannot "
                    "produce some observed configuration"
                )

    vertex_sets: list[tuple[str, tuple[tuple[Fraction, ...], ...]]] = []
    for group in system.groups:
        verts = group.vertices(support_cap)
        if not verts:
            raise IncompatibleDataError(
                f"no exogenous PMF for {group.exogenous[0]!r} satisfies the "
                "compatibility constraints"
            )
        vertex_sets.append((group.exogenous[0], verts))
    # Exogenous variables in no constraint group (orphans) are unconstrained;
    # any PMF works and cannot influence an endogenous query, so pin a corner.
    constrained = {name for name, _ in vertex_sets}
    for var in model.exogenous:
        if var.name not in constrained:
            corner = tuple(
                Fraction(1) if i == 0 else Fraction(0) for i in range(var.cardinality)
            )
            vertex_sets.append((var.name, (corner,)))

    combos = math.prod(len(v) for _, v in vertex_sets)
    if combos > combination_cap:
        raise SizeCapError(
            f"{combos} vertex combinations exceed the cap {combination_cap}"
        )

    lower = math.inf
    upper = -math.inf
    skipped = 0
    names = [name for name, _ in vertex_sets]
    for combo in itertools.product(*(verts for _, verts in vertex_sets)):
        pmfs = {
            name: tuple(float(x) for x in point) for name, point in zip(names, combo)
        }
        outcome = evaluate(model.with_exogenous_pmfs(pmfs), descriptor)
        if not outcome.supported:
            skipped += 1
            continue
        lower = min(lower, outcome.value)
        upper = max(upper, outcome.value)
    if not math.isfinite(lower):
        raise IncompatibleDataError(
            "the query evidence has zero probability at every feasible vertex"
        )
    return ExactBounds(
        lower=lower,
        upper=upper,
        vertex_counts=tuple((name, len(v)) for name, v in vertex_sets),
        combinations=combos,
        skipped=skipped,
    )


# -- constructive compatible quantification -----------------------------------


def compatible_quantification(
    model: Scm,
    tables: EmpiricalTables,
    exact: bool = False,
    fill_undefined: bool = False,
) -> dict[str, tuple] | dict[str, np.ndarray]:
    """Exogenous PMFs that reproduce the empirical conditionals exactly.

    For each endogenous variable of a conservative Markovian model, stack
    the cumulative empirical conditionals of every parent configuration on
    [0, 1], form the least common partition of their endpoints, map each
    cell to the deterministic parent-to-child function it induces, and give
    that function's exogenous state the cell's total width.

    With ``fill_undefined`` unobserved parent configurations get uniform
    conditionals (they are unconstrained); otherwise they raise.
    """
    decomposition = c_components(model)
    if markovianity_class(decomposition) != MARKOVIAN:
        raise ModelError("the constructive quantification needs a Markovian model")
    out_exact: dict[str, tuple] = {}
    for comp in decomposition:
        if not comp.endogenous:
            continue
        child = comp.endogenous[0]
        exo_parent = comp.exogenous[0] if comp.exogenous else None
        if exo_parent is None:
            raise ModelError(f"{child!r} has no exogenous parent")
        family = tables.family(child)
        child_card = model.cardinality(child)
        eq = model.equations[child]
        endo_parents = tuple(p for p in eq.parents if p != exo_parent)
        parent_cards = [model.cardinality(p) for p in endo_parents]

        conditionals = []
        for cfg in iter_configurations(parent_cards):
            assignment = dict(zip(endo_parents, cfg))
            key = tuple(assignment[v] for v in family.context_vars)
            if family.defined(key):
                conditionals.append(family.probabilities(key))
            elif fill_undefined:
                conditionals.append(
                    tuple(Fraction(1, child_card) for _ in range(child_card))
                )
            else:
                raise DataError(
                    f"no observations for parent configuration {assignment} of {child!r}"
                )

        cumulative = []
        for probs in conditionals:
            acc = [Fraction(0)]
            for p in probs:
                acc.append(acc[-1] + p)
            cumulative.append(acc)
        endpoints = sorted({point for acc in cumulative for point in acc})

        pmf = [Fraction(0)] * model.cardinality(exo_parent)
        signature_to_state = {
            function_signature(model, child, u): u
            for u in range(model.cardinality(exo_parent))
        }
        for left, right in zip(endpoints, endpoints[1:]):
            mid = (left + right) / 2
            signature = []
            for acc in cumulative:
                state = next(
                    s for s in range(child_card) if acc[s] <= mid < acc[s + 1]
                )
                signature.append(state)
            key = tuple(signature)
            if key not in signature_to_state:
                raise ModelError(
                    f"{child!r} is not conservative: no exogenous state encodes "
                    f"the parent map {key}"
                )
            pmf[signature_to_state[key]] += right - left
        out_exact[exo_parent] = tuple(pmf)

    if exact:
        return out_exact
    return {k: np.array([float(x) for x in v]) for k, v in out_exact.items()}


# -- embedding ----------------------------------------------------------------


def embeds(
    model: Scm,
    data: Dataset,
    allowed: Mapping[str, Sequence[int]],
    support_cap: int = 500_000,
) -> bool:
    """Can the restriction still be the true model behind the data?

    True iff for every exogenous variable some compatible PMF of the full
    model is supported entirely inside the kept states.  The maximum kept
    mass over a polytope is attained at a vertex, so it suffices to scan the
    vertex enumeration.
    """
    decomposition = c_components(model)
    if markovianity_class(decomposition) != MARKOVIAN:
        raise ModelError("the embedding test is defined for Markovian models")
    data.check_against(model)
    tables = empirical_frequencies(data, decomposition, model)
    system = constraint_system(model, tables, decomposition)
    for group in system.groups:
        name = group.exogenous[0]
        if name not in allowed:
            continue
        keep = set(allowed[name])
        verts = group.vertices(support_cap)
        if not verts:
            return False
        if not any(
            sum(v[i] for i in range(len(v)) if i in keep) == 1 for v in verts
        ):
            return False
    return True
