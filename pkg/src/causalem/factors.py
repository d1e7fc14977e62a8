"""Exact inference over fully specified models.

A fully specified model is a Bayesian network whose endogenous tables are
degenerate, so queries reduce to factor products and marginalisation.
Structural equations stay in their sparse index-map form and are expanded
to one-hot tables lazily, bounded by the size cap.  Elimination order is
min-fill with ties broken by variable name, so repeated queries are
deterministic.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ModelError, NotFullySpecifiedError, SizeCapError
from .graphs import CComponent
from .limits import resolve_size_cap
from .model import Assignment, Scm, StructuralEquation


@dataclass(frozen=True)
class Factor:
    """A non-negative table over an ordered scope of variables."""

    scope: tuple[str, ...]
    cards: tuple[int, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != tuple(self.cards):
            raise ModelError(
                f"factor table shape {self.values.shape} does not match cards {self.cards}"
            )

    @property
    def size(self) -> int:
        return int(self.values.size)

    def aligned(self, scope: Sequence[str], cards: Sequence[int]) -> np.ndarray:
        """Values broadcast against a superset scope."""
        axes = [self.scope.index(v) for v in scope if v in self.scope]
        vals = np.transpose(self.values, axes=axes) if axes else self.values
        shape = tuple(c if v in self.scope else 1 for v, c in zip(scope, cards))
        return vals.reshape(shape)

    def product(self, other: "Factor", size_cap: int) -> "Factor":
        scope = self.scope + tuple(v for v in other.scope if v not in self.scope)
        card_of = dict(zip(self.scope, self.cards)) | dict(zip(other.scope, other.cards))
        cards = tuple(card_of[v] for v in scope)
        size = math.prod(cards) if cards else 1
        if size > size_cap:
            raise SizeCapError(
                f"intermediate factor over {scope} needs {size} entries, "
                f"exceeding the cap {size_cap}"
            )
        values = self.aligned(scope, cards) * other.aligned(scope, cards)
        return Factor(scope, cards, values)

    def sum_out(self, name: str) -> "Factor":
        axis = self.scope.index(name)
        scope = self.scope[:axis] + self.scope[axis + 1 :]
        cards = self.cards[:axis] + self.cards[axis + 1 :]
        return Factor(scope, cards, self.values.sum(axis=axis))

    def restrict(self, evidence: Assignment) -> "Factor":
        factor = self
        for name, state in evidence.items():
            if name not in factor.scope:
                continue
            axis = factor.scope.index(name)
            scope = factor.scope[:axis] + factor.scope[axis + 1 :]
            cards = factor.cards[:axis] + factor.cards[axis + 1 :]
            factor = Factor(scope, cards, np.take(factor.values, state, axis=axis))
        return factor


def equation_factor(model: Scm, eq: StructuralEquation, size_cap: int) -> Factor:
    """One-hot CPT factor for a structural equation (child axis last)."""
    parent_cards = model.parent_cards(eq.child)
    child_card = model.cardinality(eq.child)
    size = (math.prod(parent_cards) if parent_cards else 1) * child_card
    if size > size_cap:
        raise SizeCapError(
            f"CPT for {eq.child!r} needs {size} entries, exceeding the cap {size_cap}"
        )
    one_hot = np.eye(child_card, dtype=np.float64)[eq.table_array]
    values = one_hot.reshape(tuple(parent_cards) + (child_card,))
    return Factor(eq.parents + (eq.child,), tuple(parent_cards) + (child_card,), values)


def prior_factor(model: Scm, name: str) -> Factor:
    return Factor((name,), (model.cardinality(name),), model.pmf(name).copy())


@dataclass(frozen=True)
class QueryResult:
    """A conditional PMF over the targets, or an unsupported-evidence flag."""

    targets: tuple[str, ...]
    cards: tuple[int, ...]
    values: np.ndarray | None
    supported: bool
    evidence_probability: float
    elimination_order: tuple[str, ...]

    def at(self, assignment: Assignment) -> float:
        if not self.supported or self.values is None:
            raise ModelError("query result is unsupported (zero-probability evidence)")
        idx = tuple(int(assignment[t]) for t in self.targets)
        return float(self.values[idx])


def _min_fill_order(scopes: list[set[str]], to_eliminate: set[str]) -> list[str]:
    neighbors: dict[str, set[str]] = {}
    for scope in scopes:
        for v in scope:
            neighbors.setdefault(v, set()).update(scope - {v})
    order = []
    remaining = set(to_eliminate)
    while remaining:
        best = None
        best_fill = None
        for v in sorted(remaining):
            nbrs = [n for n in neighbors.get(v, set()) if n != v]
            fill = 0
            for i, a in enumerate(nbrs):
                for b in nbrs[i + 1 :]:
                    if b not in neighbors.get(a, set()):
                        fill += 1
            if best_fill is None or fill < best_fill:
                best, best_fill = v, fill
        assert best is not None
        order.append(best)
        remaining.discard(best)
        nbrs = set(neighbors.pop(best, set()))
        for a in nbrs:
            neighbors[a].discard(best)
            neighbors[a].update(nbrs - {a})
    return order


def query(
    model: Scm,
    targets: Sequence[str],
    evidence: Assignment | None = None,
    size_cap: int | None = None,
) -> QueryResult:
    """Normalised conditional PMF ``P(targets | evidence)`` by variable elimination.

    Zero-probability evidence yields a flagged, unsupported result rather
    than an exception.
    """
    if not model.is_fully_specified:
        raise NotFullySpecifiedError(
            "exact inference requires exogenous PMFs for every exogenous variable"
        )
    cap = resolve_size_cap(size_cap)
    targets = tuple(targets)
    evidence = dict(evidence or {})
    if not targets:
        raise ModelError("at least one target variable is required")
    if len(set(targets)) != len(targets):
        raise ModelError("duplicate target variables")
    for t in targets:
        model.variable(t)
    for name, state in evidence.items():
        var = model.variable(name)
        if not (0 <= state < var.cardinality):
            raise ModelError(f"evidence {name}={state} is outside the domain")
    overlap = set(targets) & set(evidence)
    if overlap:
        raise ModelError(f"targets and evidence overlap on {sorted(overlap)}")

    factors = [prior_factor(model, v.name) for v in model.exogenous]
    factors += [equation_factor(model, eq, cap) for eq in model.equations.values()]
    factors = [f.restrict(evidence) for f in factors]

    to_eliminate = {
        v.name for v in model.variables if v.name not in targets and v.name not in evidence
    }
    order = _min_fill_order([set(f.scope) for f in factors], to_eliminate)

    for name in order:
        related = [f for f in factors if name in f.scope]
        if not related:
            continue
        factors = [f for f in factors if name not in f.scope]
        product = related[0]
        for f in related[1:]:
            product = product.product(f, cap)
        factors.append(product.sum_out(name))

    result = Factor((), (), np.array(1.0))
    for f in factors:
        result = result.product(f, cap)

    card_of = dict(zip(result.scope, result.cards))
    aligned = result.aligned(targets, tuple(card_of[t] for t in targets))
    total = float(aligned.sum())
    if total <= 0.0 or not math.isfinite(total):
        return QueryResult(
            targets=targets,
            cards=tuple(model.cardinality(t) for t in targets),
            values=None,
            supported=False,
            evidence_probability=max(total, 0.0),
            elimination_order=tuple(order),
        )
    values = aligned / total
    return QueryResult(
        targets=targets,
        cards=tuple(model.cardinality(t) for t in targets),
        values=values,
        supported=True,
        evidence_probability=total,
        elimination_order=tuple(order),
    )


def joint_probability(model: Scm, assignment: Assignment) -> float:
    """The joint probability of one complete (endogenous + exogenous) configuration."""
    if not model.is_fully_specified:
        raise NotFullySpecifiedError("the joint PMF requires exogenous PMFs")
    missing = [v.name for v in model.variables if v.name not in assignment]
    if missing:
        raise ModelError(f"assignment is missing {missing}")
    prob = 1.0
    for var in model.exogenous:
        state = assignment[var.name]
        if not (0 <= state < var.cardinality):
            raise ModelError(f"{var.name}={state} is outside the domain")
        prob *= float(model.pmf(var.name)[state])
    for var in model.endogenous:
        eq = model.equations[var.name]
        states = [assignment[p] for p in eq.parents]
        if eq.value(states, model.parent_cards(var.name)) != assignment[var.name]:
            return 0.0
    return prob


def exogenous_strides(cards: Sequence[int]) -> tuple[int, ...]:
    """Row-major strides for a joint exogenous index (first variable most significant)."""
    strides = []
    acc = 1
    for c in reversed(cards):
        strides.append(acc)
        acc *= c
    return tuple(reversed(strides))


def component_indicator(
    model: Scm,
    component: CComponent,
    contexts: np.ndarray,
    size_cap: int | None = None,
) -> np.ndarray:
    """Indicator table ``I[c, u] = 1`` iff joint exogenous state ``u`` realises context ``c``.

    ``contexts`` is an integer array of shape ``(n, len(component.context))``
    with columns ordered like ``component.context``.  The joint exogenous
    index runs row-major over ``component.exogenous``.  Realising a context
    means every endogenous member's equation maps its parents (endogenous
    ones read from the context, exogenous ones decoded from ``u``) to the
    member's context value.
    """
    cap = resolve_size_cap(size_cap)
    exo_cards = [model.cardinality(u) for u in component.exogenous]
    joint = math.prod(exo_cards) if exo_cards else 1
    contexts = np.asarray(contexts, dtype=np.int64)
    if contexts.ndim != 2 or contexts.shape[1] != len(component.context):
        raise ModelError("contexts must be (n, len(component.context))")
    if contexts.shape[0] * joint > cap:
        raise SizeCapError(
            f"indicator table needs {contexts.shape[0] * joint} entries, "
            f"exceeding the cap {cap}"
        )
    col = {name: i for i, name in enumerate(component.context)}
    strides = exogenous_strides(exo_cards)
    u_digits = {
        name: (np.arange(joint) // stride) % card
        for name, stride, card in zip(component.exogenous, strides, exo_cards)
    }
    out = np.ones((contexts.shape[0], joint), dtype=np.float64)
    for member in component.endogenous:
        eq = model.equations[member]
        cards = model.parent_cards(member)
        flat = np.zeros((contexts.shape[0], joint), dtype=np.int64)
        for p, card in zip(eq.parents, cards):
            flat *= card
            if model.variable(p).is_exogenous:
                flat += u_digits[p][None, :]
            else:
                flat += contexts[:, col[p]][:, None]
        produced = eq.table_array[flat]
        out *= produced == contexts[:, col[member]][:, None]
    return out
