"""Structural causal models over categorical variables.

The data model: variables, tabular structural equations, models with
optional exogenous PMFs (absent for any exogenous variable makes the model
partially specified), and datasets of complete endogenous observations.
Also the structural validators, the conservative mechanism constructor, and
model restriction by dropping exogenous states.

States are integers ``0..cardinality-1`` throughout.  Parent configurations
index equation tables in lexicographic (row-major) order with the first
parent most significant.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import DataError, ModelError, RestrictionError, SizeCapError
from .limits import resolve_size_cap

ENDOGENOUS = "endogenous"
EXOGENOUS = "exogenous"

Assignment = Mapping[str, int]


def flat_index(states: Sequence[int], cards: Sequence[int]) -> int:
    """Row-major index of a joint configuration (first variable most significant)."""
    idx = 0
    for s, c in zip(states, cards, strict=True):
        idx = idx * c + s
    return idx


def iter_configurations(cards: Sequence[int]) -> Iterable[tuple[int, ...]]:
    """All joint configurations in lexicographic order."""
    return itertools.product(*(range(c) for c in cards))


@dataclass(frozen=True)
class Variable:
    """A categorical variable with a finite, indexed state space."""

    name: str
    cardinality: int
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in (ENDOGENOUS, EXOGENOUS):
            raise ModelError(f"unknown kind {self.kind!r} for variable {self.name!r}")
        floor = 2 if self.kind == ENDOGENOUS else 1
        if not isinstance(self.cardinality, int) or self.cardinality < floor:
            raise ModelError(
                f"variable {self.name!r} needs integer cardinality >= {floor}, "
                f"got {self.cardinality!r}"
            )

    @property
    def is_exogenous(self) -> bool:
        return self.kind == EXOGENOUS


def endo(name: str, cardinality: int = 2) -> Variable:
    return Variable(name, cardinality, ENDOGENOUS)


def exo(name: str, cardinality: int) -> Variable:
    return Variable(name, cardinality, EXOGENOUS)


@dataclass(frozen=True)
class StructuralEquation:
    """Total map from joint parent configurations to a child state.

    ``table[i]`` is the child state for the i-th parent configuration in
    lexicographic order over ``parents``.
    """

    child: str
    parents: tuple[str, ...]
    table: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "table", tuple(int(v) for v in self.table))
        if len(set(self.parents)) != len(self.parents):
            raise ModelError(f"equation for {self.child!r} repeats a parent")

    @cached_property
    def table_array(self) -> np.ndarray:
        arr = np.asarray(self.table, dtype=np.int64)
        arr.setflags(write=False)
        return arr

    def value(self, parent_states: Sequence[int], parent_cards: Sequence[int]) -> int:
        return self.table[flat_index(parent_states, parent_cards)]


@dataclass(frozen=True)
class Pmf:
    """A probability mass function over one variable's states."""

    variable: str
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals:
            raise ModelError(f"empty PMF for {self.variable!r}")
        if any(not math.isfinite(v) or v < 0 for v in vals):
            raise ModelError(f"PMF for {self.variable!r} has negative or non-finite entries")
        if abs(sum(vals) - 1.0) > 1e-9:
            raise ModelError(
                f"PMF for {self.variable!r} sums to {sum(vals)!r}, expected 1 within 1e-9"
            )

    def as_array(self) -> np.ndarray:
        arr = np.asarray(self.values, dtype=np.float64)
        arr.setflags(write=False)
        return arr


class Scm:
    """An acyclic SCM; immutable after construction.

    Exogenous variables are roots by construction (they never appear as an
    equation child, and only equations induce arcs).  The constructor rejects
    structurally unusable input; semantic requirements (surjectivity, PMF
    normalisation) are reported by :func:`validate_scm`.
    """

    def __init__(
        self,
        variables: Iterable[Variable],
        equations: Iterable[StructuralEquation],
        exogenous_pmfs: Mapping[str, Sequence[float]] | None = None,
    ) -> None:
        self.variables: tuple[Variable, ...] = tuple(variables)
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise ModelError("duplicate variable names")
        self._by_name: dict[str, Variable] = {v.name: v for v in self.variables}

        eqs: dict[str, StructuralEquation] = {}
        for eq in equations:
            if eq.child in eqs:
                raise ModelError(f"two equations for {eq.child!r}")
            eqs[eq.child] = eq
        self.equations: dict[str, StructuralEquation] = eqs

        endo_names = [v.name for v in self.variables if not v.is_exogenous]
        for name in endo_names:
            if name not in eqs:
                raise ModelError(f"endogenous variable {name!r} has no equation")
        for child, eq in eqs.items():
            if child not in self._by_name:
                raise ModelError(f"equation child {child!r} is not a declared variable")
            if self._by_name[child].is_exogenous:
                raise ModelError(f"exogenous variable {child!r} cannot have an equation")
            cards = []
            for p in eq.parents:
                if p not in self._by_name:
                    raise ModelError(f"equation for {child!r} references unknown parent {p!r}")
                cards.append(self._by_name[p].cardinality)
            size = math.prod(cards) if cards else 1
            if len(eq.table) != size:
                raise ModelError(
                    f"equation table for {child!r} has {len(eq.table)} entries, "
                    f"expected {size}"
                )
            k = self._by_name[child].cardinality
            if any(not (0 <= v < k) for v in eq.table):
                raise ModelError(f"equation table for {child!r} has out-of-domain states")

        self._topo: tuple[str, ...] = self._topological_order()

        self.exogenous_pmfs: dict[str, Pmf] | None = None
        if exogenous_pmfs is not None:
            pmfs: dict[str, Pmf] = {}
            for name, values in exogenous_pmfs.items():
                var = self._by_name.get(name)
                if var is None or not var.is_exogenous:
                    raise ModelError(f"PMF given for non-exogenous variable {name!r}")
                pmf = values if isinstance(values, Pmf) else Pmf(name, tuple(values))
                if len(pmf.values) != var.cardinality:
                    raise ModelError(
                        f"PMF for {name!r} has {len(pmf.values)} entries, "
                        f"expected {var.cardinality}"
                    )
                pmfs[name] = pmf
            self.exogenous_pmfs = pmfs

    # -- graph structure ----------------------------------------------------

    def _topological_order(self) -> tuple[str, ...]:
        # Kahn's algorithm with declaration-order tie-breaking, so downstream
        # "topologically follows" tests are deterministic.
        position = {v.name: i for i, v in enumerate(self.variables)}
        indeg = {v.name: 0 for v in self.variables}
        children: dict[str, list[str]] = {v.name: [] for v in self.variables}
        for child, eq in self.equations.items():
            indeg[child] = len(eq.parents)
            for p in eq.parents:
                children[p].append(child)
        ready = sorted((n for n, d in indeg.items() if d == 0), key=position.__getitem__)
        order: list[str] = []
        while ready:
            node = ready.pop(0)
            order.append(node)
            inserted = False
            for c in children[node]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
                    inserted = True
            if inserted:
                ready.sort(key=position.__getitem__)
        if len(order) != len(self.variables):
            raise ModelError("the model graph has a cycle")
        return tuple(order)

    @property
    def topological_order(self) -> tuple[str, ...]:
        return self._topo

    @property
    def endogenous(self) -> tuple[Variable, ...]:
        return tuple(v for v in self.variables if not v.is_exogenous)

    @property
    def exogenous(self) -> tuple[Variable, ...]:
        return tuple(v for v in self.variables if v.is_exogenous)

    def variable(self, name: str) -> Variable:
        try:
            return self._by_name[name]
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    def cardinality(self, name: str) -> int:
        return self.variable(name).cardinality

    def parents(self, name: str) -> tuple[str, ...]:
        eq = self.equations.get(name)
        return eq.parents if eq is not None else ()

    @property
    def edges(self) -> tuple[tuple[str, str], ...]:
        out = []
        for child in (v.name for v in self.variables if not v.is_exogenous):
            for p in self.equations[child].parents:
                out.append((p, child))
        return tuple(out)

    def parent_cards(self, name: str) -> tuple[int, ...]:
        return tuple(self.cardinality(p) for p in self.parents(name))

    # -- specification ------------------------------------------------------

    @property
    def is_fully_specified(self) -> bool:
        if self.exogenous_pmfs is None:
            return False
        return all(v.name in self.exogenous_pmfs for v in self.exogenous)

    def pmf(self, name: str) -> np.ndarray:
        if self.exogenous_pmfs is None or name not in self.exogenous_pmfs:
            raise ModelError(f"no PMF specified for {name!r}")
        return self.exogenous_pmfs[name].as_array()

    def with_exogenous_pmfs(self, pmfs: Mapping[str, Sequence[float]]) -> "Scm":
        """A copy of this model with the given exogenous PMFs attached."""
        merged: dict[str, Sequence[float]] = {}
        if self.exogenous_pmfs:
            merged.update({k: p.values for k, p in self.exogenous_pmfs.items()})
        for k, v in pmfs.items():
            merged[k] = tuple(np.asarray(v, dtype=float).tolist())
        return Scm(self.variables, self.equations.values(), merged)

    def without_exogenous_pmfs(self) -> "Scm":
        return Scm(self.variables, self.equations.values(), None)

    # -- mechanics -----------------------------------------------------------

    def evaluate(self, exogenous_states: Assignment) -> dict[str, int]:
        """Forward pass: endogenous values induced by a joint exogenous state."""
        values: dict[str, int] = dict(exogenous_states)
        for name in self._topo:
            var = self._by_name[name]
            if var.is_exogenous:
                if name not in values:
                    raise ModelError(f"missing exogenous state for {name!r}")
                continue
            eq = self.equations[name]
            states = [values[p] for p in eq.parents]
            values[name] = eq.value(states, self.parent_cards(name))
        return {v.name: values[v.name] for v in self.endogenous}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Scm):
            return NotImplemented
        return (
            self.variables == other.variables
            and self.equations == other.equations
            and self.exogenous_pmfs == other.exogenous_pmfs
        )

    def __repr__(self) -> str:
        kind = "FSCM" if self.is_fully_specified else "PSCM"
        return (
            f"<{kind} {len(self.endogenous)} endogenous, "
            f"{len(self.exogenous)} exogenous>"
        )


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate_scm`; an empty violation list means valid."""

    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self) -> None:
        if self.violations:
            raise ModelError("invalid model: " + "; ".join(self.violations))


def validate_scm(model: Scm, size_cap: int | None = None) -> ValidationReport:
    """Check the semantic model requirements and report every violation.

    Per-variable surjectivity: each equation's image covers the child's whole
    state space.  Joint surjectivity: every joint endogenous configuration is
    induced by at least one joint exogenous configuration, checked by
    exhaustive enumeration (bounded by the size cap).  PMFs, when present,
    must be normalised.
    """
    violations: list[str] = []

    for var in model.endogenous:
        eq = model.equations[var.name]
        image = set(eq.table)
        missing = [s for s in range(var.cardinality) if s not in image]
        if missing:
            violations.append(
                f"equation for {var.name!r} is not surjective: "
                f"states {missing} never produced"
            )

    if model.exogenous_pmfs:
        for name, pmf in model.exogenous_pmfs.items():
            total = sum(pmf.values)
            if abs(total - 1.0) > 1e-9:
                violations.append(f"PMF for {name!r} sums to {total!r}")

    exo_vars = model.exogenous
    cap = resolve_size_cap(size_cap)
    joint_exo = math.prod(v.cardinality for v in exo_vars) if exo_vars else 1
    joint_endo = math.prod(v.cardinality for v in model.endogenous)
    if joint_exo > cap:
        raise SizeCapError(
            f"joint exogenous space has {joint_exo} states, exceeding the cap {cap}; "
            "joint surjectivity cannot be checked exhaustively"
        )
    if joint_endo > joint_exo:
        violations.append(
            "not jointly surjective: joint endogenous space is larger than the "
            f"joint exogenous space ({joint_endo} > {joint_exo})"
        )
    else:
        endo_names = [v.name for v in model.endogenous]
        seen: set[tuple[int, ...]] = set()
        exo_names = [v.name for v in exo_vars]
        for combo in iter_configurations([v.cardinality for v in exo_vars]):
            values = model.evaluate(dict(zip(exo_names, combo)))
            seen.add(tuple(values[n] for n in endo_names))
        if len(seen) < joint_endo:
            example = next(
                cfg
                for cfg in iter_configurations([v.cardinality for v in model.endogenous])
                if cfg not in seen
            )
            violations.append(
                f"not jointly surjective: endogenous configuration "
                f"{dict(zip(endo_names, example))} is never realised"
            )

    return ValidationReport(tuple(violations))


def conservative_equation(
    child: Variable,
    endo_parents: Sequence[Variable],
    exo_name: str | None = None,
    size_cap: int | None = None,
) -> tuple[int, StructuralEquation]:
    """Build the conservative mechanism for ``child`` given its endogenous parents.

    The exogenous parent's states enumerate every deterministic map from joint
    endogenous-parent configurations to child states.  The enumeration is
    mixed-radix little-endian: parent configurations are ordered
    lexicographically, child states act as digits, and state ``u`` encodes
    function number ``u`` with the digit for configuration ``j`` at weight
    ``cardinality(child) ** j``.

    Returns the exogenous cardinality and the equation, whose parents are the
    endogenous parents (in the given order) followed by the exogenous one.
    """
    if child.is_exogenous:
        raise ModelError("conservative mechanisms are built for endogenous children")
    if any(p.is_exogenous for p in endo_parents):
        raise ModelError("conservative mechanisms take endogenous parents only")
    k = child.cardinality
    n_configs = math.prod(p.cardinality for p in endo_parents) if endo_parents else 1
    cap = resolve_size_cap(size_cap)
    exo_card = k**n_configs
    if exo_card > cap or n_configs * exo_card > cap:
        raise SizeCapError(
            f"conservative mechanism for {child.name!r} needs {exo_card} exogenous "
            f"states ({n_configs * exo_card} table entries), exceeding the cap {cap}"
        )
    name = exo_name if exo_name is not None else f"U_{child.name}"
    table = []
    for j in range(n_configs):
        weight = k**j
        for u in range(exo_card):
            table.append((u // weight) % k)
    equation = StructuralEquation(
        child=child.name,
        parents=tuple(p.name for p in endo_parents) + (name,),
        table=tuple(table),
    )
    return exo_card, equation


def function_signature(
    model: Scm, child: str, exo_state: int
) -> tuple[int, ...]:
    """The deterministic endogenous-parent -> child map encoded by one exogenous state.

    Returns the child state for every endogenous-parent configuration in
    lexicographic order.  Requires the child to have exactly one exogenous
    parent.
    """
    eq = model.equations[child]
    exo_parents = [p for p in eq.parents if model.variable(p).is_exogenous]
    if len(exo_parents) != 1:
        raise ModelError(f"{child!r} does not have exactly one exogenous parent")
    exo_parent = exo_parents[0]
    endo_parents = [p for p in eq.parents if p != exo_parent]
    cards = model.parent_cards(child)
    out = []
    for cfg in iter_configurations([model.cardinality(p) for p in endo_parents]):
        assignment = dict(zip(endo_parents, cfg))
        assignment[exo_parent] = exo_state
        states = [assignment[p] for p in eq.parents]
        out.append(eq.value(states, cards))
    return tuple(out)


def find_states_by_function(
    model: Scm, child: str, functions: Sequence[Sequence[int]]
) -> tuple[int, ...]:
    """Exogenous states of ``child``'s mechanism matching the given maps.

    Each function is a child-state vector over the lexicographic
    endogenous-parent configurations, as in :func:`function_signature`.  This
    selects states semantically, independent of the enumeration order the
    model happens to use.
    """
    eq = model.equations[child]
    exo_parent = next(p for p in eq.parents if model.variable(p).is_exogenous)
    by_signature = {
        function_signature(model, child, u): u
        for u in range(model.cardinality(exo_parent))
    }
    states = []
    for fn in functions:
        key = tuple(int(v) for v in fn)
        if key not in by_signature:
            raise ModelError(
                f"{child!r} has no exogenous state realising the map {key}"
            )
        states.append(by_signature[key])
    return tuple(states)


def restrict_model(
    model: Scm,
    allowed: Mapping[str, Sequence[int]],
    size_cap: int | None = None,
) -> Scm:
    """Drop exogenous states (with their mechanisms), re-indexing densely.

    ``allowed`` maps exogenous names to the kept states (non-empty, in the
    original indexing); unlisted variables keep their full domain.  PMFs, when
    present, are conditioned on the kept states and re-normalised.  The
    restricted model is re-validated; broken per-variable or joint
    surjectivity raises :class:`RestrictionError`.
    """
    keep: dict[str, list[int]] = {}
    for var in model.exogenous:
        states = list(allowed.get(var.name, range(var.cardinality)))
        if not states:
            raise ModelError(f"restriction for {var.name!r} is empty")
        if len(set(states)) != len(states):
            raise ModelError(f"restriction for {var.name!r} repeats states")
        if any(not (0 <= s < var.cardinality) for s in states):
            raise ModelError(f"restriction for {var.name!r} has out-of-domain states")
        keep[var.name] = states
    for name in allowed:
        if name not in keep:
            raise ModelError(f"restriction names non-exogenous variable {name!r}")

    variables = []
    for var in model.variables:
        if var.is_exogenous:
            variables.append(Variable(var.name, len(keep[var.name]), EXOGENOUS))
        else:
            variables.append(var)

    equations = []
    for var in model.endogenous:
        eq = model.equations[var.name]
        old_cards = model.parent_cards(var.name)
        kept_states = [
            keep[p] if model.variable(p).is_exogenous else list(range(c))
            for p, c in zip(eq.parents, old_cards)
        ]
        table = [
            eq.value(cfg, old_cards) for cfg in itertools.product(*kept_states)
        ]
        equations.append(StructuralEquation(var.name, eq.parents, tuple(table)))

    pmfs = None
    if model.exogenous_pmfs is not None:
        pmfs = {}
        for name, pmf in model.exogenous_pmfs.items():
            vals = [pmf.values[s] for s in keep[name]]
            total = sum(vals)
            if total <= 0:
                raise ModelError(
                    f"restriction removes all probability mass of {name!r}"
                )
            pmfs[name] = tuple(v / total for v in vals)

    restricted = Scm(variables, equations, pmfs)
    report = validate_scm(restricted, size_cap=size_cap)
    if not report.ok:
        raise RestrictionError(
            "restriction breaks model requirements: " + "; ".join(report.violations)
        )
    return restricted


class Dataset:
    """A multiset of complete endogenous observations, stored as counts."""

    def __init__(self, columns: Sequence[str], counts: Mapping[tuple[int, ...], int]):
        self.columns: tuple[str, ...] = tuple(columns)
        if len(set(self.columns)) != len(self.columns):
            raise DataError("duplicate dataset columns")
        clean: dict[tuple[int, ...], int] = {}
        for cfg, count in counts.items():
            cfg = tuple(int(s) for s in cfg)
            if len(cfg) != len(self.columns):
                raise DataError(f"configuration {cfg} does not match the columns")
            count = int(count)
            if count < 0:
                raise DataError(f"negative count for configuration {cfg}")
            if any(s < 0 for s in cfg):
                raise DataError(f"negative state in configuration {cfg}")
            if count:
                clean[cfg] = clean.get(cfg, 0) + count
        self._counts = clean

    @classmethod
    def from_rows(cls, columns: Sequence[str], rows: Iterable[Sequence[int]]) -> "Dataset":
        counts: dict[tuple[int, ...], int] = {}
        for row in rows:
            cfg = tuple(int(s) for s in row)
            counts[cfg] = counts.get(cfg, 0) + 1
        return cls(columns, counts)

    @property
    def counts(self) -> dict[tuple[int, ...], int]:
        return dict(self._counts)

    @property
    def n(self) -> int:
        return sum(self._counts.values())

    def project(self, columns: Sequence[str]) -> "Dataset":
        """Marginal counts over a subset of columns (in the given order)."""
        idx = []
        for c in columns:
            if c not in self.columns:
                raise DataError(f"unknown column {c!r}")
            idx.append(self.columns.index(c))
        counts: dict[tuple[int, ...], int] = {}
        for cfg, count in self._counts.items():
            sub = tuple(cfg[i] for i in idx)
            counts[sub] = counts.get(sub, 0) + count
        return Dataset(columns, counts)

    def check_against(self, model: Scm) -> None:
        """Raise unless columns cover all endogenous variables with in-domain states."""
        endo_names = {v.name for v in model.endogenous}
        if set(self.columns) != endo_names:
            raise DataError(
                f"dataset columns {self.columns} do not match the endogenous "
                f"variables {sorted(endo_names)}"
            )
        cards = [model.cardinality(c) for c in self.columns]
        for cfg in self._counts:
            if any(not (0 <= s < k) for s, k in zip(cfg, cards)):
                raise DataError(f"configuration {cfg} is outside the variable domains")
        if self.n == 0:
            raise DataError("dataset is empty")

    def __len__(self) -> int:
        return len(self._counts)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.columns == other.columns and self._counts == other._counts

    def __repr__(self) -> str:
        return f"<Dataset n={self.n} over {', '.join(self.columns)}>"
