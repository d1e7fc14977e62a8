"""Graph analysis: c-components, their contexts, and counterfactual graphs.

The reduction of a model's graph keeps only the exogenous-to-endogenous
arcs; its connected components partition both variable sets and determine
the contexts used by the likelihood decomposition and by the per-component
EM.  Counterfactual (twin) graphs replicate the endogenous structure once
per world, sharing the exogenous variables, with per-world surgery.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

from .errors import ModelError
from .model import ENDOGENOUS, Scm, StructuralEquation, Variable


@dataclass(frozen=True)
class CComponent:
    """One confounded component with its factorisation contexts.

    ``context`` holds the component's endogenous members plus their
    endogenous parents; ``var_context(x)`` removes ``x`` itself and every
    variable at or after ``x`` in the recorded topological order.
    """

    index: int
    exogenous: tuple[str, ...]
    endogenous: tuple[str, ...]
    context: tuple[str, ...]
    _var_context: tuple[tuple[str, tuple[str, ...]], ...]

    def var_context(self, name: str) -> tuple[str, ...]:
        for var, ctx in self._var_context:
            if var == name:
                return ctx
        raise ModelError(f"{name!r} is not an endogenous member of this component")


@dataclass(frozen=True)
class ComponentDecomposition:
    """All c-components plus the topological order they were derived under."""

    components: tuple[CComponent, ...]
    topological_order: tuple[str, ...]

    def __iter__(self):
        return iter(self.components)

    def __len__(self) -> int:
        return len(self.components)

    def __getitem__(self, i: int) -> CComponent:
        return self.components[i]

    def component_of(self, name: str) -> CComponent:
        for comp in self.components:
            if name in comp.endogenous or name in comp.exogenous:
                return comp
        raise ModelError(f"{name!r} belongs to no component")


def c_components(model: Scm) -> ComponentDecomposition:
    """Connected components of the reduction (endogenous-endogenous arcs removed)."""
    parent = {v.name: v.name for v in model.variables}

    def find(a: str) -> str:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    for var in model.endogenous:
        for p in model.parents(var.name):
            if model.variable(p).is_exogenous:
                union(p, var.name)

    topo = model.topological_order
    position = {name: i for i, name in enumerate(topo)}

    groups: dict[str, list[str]] = {}
    for v in model.variables:
        groups.setdefault(find(v.name), []).append(v.name)

    # Deterministic component order: by earliest member in the topological order.
    ordered = sorted(groups.values(), key=lambda ns: min(position[n] for n in ns))

    components = []
    for idx, names in enumerate(ordered):
        endo_members = sorted(
            (n for n in names if not model.variable(n).is_exogenous),
            key=position.__getitem__,
        )
        exo_members = sorted(
            (n for n in names if model.variable(n).is_exogenous),
            key=position.__getitem__,
        )
        context: set[str] = set(endo_members)
        for n in endo_members:
            for p in model.parents(n):
                if not model.variable(p).is_exogenous:
                    context.add(p)
        context_sorted = tuple(sorted(context, key=position.__getitem__))
        var_context = []
        for n in endo_members:
            cut = position[n]
            var_context.append(
                (n, tuple(c for c in context_sorted if position[c] < cut))
            )
        components.append(
            CComponent(
                index=idx,
                exogenous=tuple(exo_members),
                endogenous=tuple(endo_members),
                context=context_sorted,
                _var_context=tuple(var_context),
            )
        )
    return ComponentDecomposition(tuple(components), topo)


MARKOVIAN = "markovian"
QUASI_MARKOVIAN = "quasi-markovian"
GENERAL = "general"


def markovianity_class(model: Scm | ComponentDecomposition) -> str:
    """Classify the model by its component sizes."""
    decomposition = model if isinstance(model, ComponentDecomposition) else c_components(model)
    comps = [c for c in decomposition if c.endogenous]
    if all(len(c.exogenous) <= 1 and len(c.endogenous) == 1 for c in comps):
        return MARKOVIAN
    if all(len(c.exogenous) <= 1 for c in comps):
        return QUASI_MARKOVIAN
    return GENERAL


@dataclass(frozen=True)
class World:
    """One world of a counterfactual graph, with an optional intervention."""

    index: int
    do: tuple[tuple[str, int], ...] = ()

    @classmethod
    def make(cls, index: int, do: Mapping[str, int] | None = None) -> "World":
        items = tuple(sorted((str(k), int(v)) for k, v in (do or {}).items()))
        return cls(index, items)

    @property
    def intervention(self) -> dict[str, int]:
        return dict(self.do)


def world_name(name: str, index: int) -> str:
    """Name of an endogenous variable's copy in one world."""
    return f"{name}#{index}"


def twin_graph(model: Scm, worlds: Sequence[World]) -> Scm:
    """Counterfactual graph: per-world endogenous copies sharing the exogenous set.

    In a world with ``do(X=x)`` the copy of ``X`` loses all incoming arcs
    (endogenous and exogenous) and its equation becomes the constant ``x``.
    Exogenous variables left without children are pruned.
    """
    if not worlds:
        raise ModelError("at least one world is required")
    existing = {v.name for v in model.variables}
    for w in worlds:
        for var in model.endogenous:
            if world_name(var.name, w.index) in existing:
                raise ModelError(
                    f"world copy name {world_name(var.name, w.index)!r} collides "
                    "with an existing variable"
                )
        for name, state in w.do:
            var = model.variable(name)
            if var.is_exogenous:
                raise ModelError(f"cannot intervene on exogenous variable {name!r}")
            if not (0 <= state < var.cardinality):
                raise ModelError(f"do({name}={state}) is outside the domain")

    equations: list[StructuralEquation] = []
    used_exo: set[str] = set()
    endo_copies: list[Variable] = []
    for w in worlds:
        do = w.intervention
        for var in model.endogenous:
            copy_name = world_name(var.name, w.index)
            endo_copies.append(Variable(copy_name, var.cardinality, ENDOGENOUS))
            if var.name in do:
                equations.append(
                    StructuralEquation(copy_name, (), (do[var.name],))
                )
                continue
            eq = model.equations[var.name]
            new_parents = []
            for p in eq.parents:
                if model.variable(p).is_exogenous:
                    new_parents.append(p)
                    used_exo.add(p)
                else:
                    new_parents.append(world_name(p, w.index))
            equations.append(
                StructuralEquation(copy_name, tuple(new_parents), eq.table)
            )

    variables = [v for v in model.exogenous if v.name in used_exo] + endo_copies
    pmfs = None
    if model.exogenous_pmfs is not None:
        pmfs = {
            name: pmf.values
            for name, pmf in model.exogenous_pmfs.items()
            if name in used_exo
        }
    return Scm(variables, equations, pmfs)
