"""Counterfactual and interventional queries on fully specified models.

Queries are evaluated by building the counterfactual graph (world copies
sharing the exogenous variables, with per-world surgery) and running exact
inference on it.  Zero-probability evidence yields a flagged outcome, not
an exception, so multi-run drivers can report per-run validity.

Query strings
-------------
``pns(X,Y)``            necessity-and-sufficiency for cause X on effect Y,
                        using state pairs (1,0); general states via
                        ``pns(X=x1/x0, Y=y1/y0)``.
``pn(X=1,Y=1)``         necessity given the factual evidence; the
                        counterfactual flips the cause. ``pn(X=x1/x0,
                        Y=y1/y0)`` spells all states out.
``ps(X=0,Y=0)``         sufficiency, symmetric to ``pn``.
``effect(do X=1; Y)``   interventional probability P(Y=1 | do(X=1));
                        ``effect(do X=1; Y=0)`` picks the target state.
``prob(Y=1 | X=0)``     plain conditional; the evidence part is optional.
"""

from __future__ import annotations

import re
from collections.abc import Mapping
from dataclasses import dataclass

from . import factors
from .errors import ModelError, QueryParseError, UnsupportedEvidenceError
from .graphs import World, twin_graph, world_name
from .model import Scm, StructuralEquation

PNS = "pns"
PN = "pn"
PS = "ps"
CAUSAL_EFFECT = "effect"
CONDITIONAL = "conditional"


@dataclass(frozen=True)
class QueryDescriptor:
    """A counterfactual, interventional, or conditional probability query.

    ``cause`` and ``effect`` pair a variable with two distinguished states
    ``(s1, s0)``; how the pair is used depends on ``kind``.
    """

    kind: str
    effect: tuple[str, tuple[int, int]]
    cause: tuple[str, tuple[int, int]] | None = None
    evidence: tuple[tuple[str, int], ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in (PNS, PN, PS, CAUSAL_EFFECT, CONDITIONAL):
            raise ModelError(f"unknown query kind {self.kind!r}")
        if self.kind != CONDITIONAL and self.cause is None:
            raise ModelError(f"{self.kind} queries need a cause")
        if self.cause is not None and self.cause[0] == self.effect[0]:
            raise ModelError("cause and effect must be distinct variables")
        if self.kind == PNS and self.evidence:
            raise ModelError("necessity-and-sufficiency queries take no evidence")
        effect = (self.effect[0], (int(self.effect[1][0]), int(self.effect[1][1])))
        object.__setattr__(self, "effect", effect)
        if self.cause is not None:
            cause = (self.cause[0], (int(self.cause[1][0]), int(self.cause[1][1])))
            object.__setattr__(self, "cause", cause)
        if isinstance(self.evidence, Mapping):
            items = self.evidence.items()
        else:
            items = self.evidence
        object.__setattr__(
            self, "evidence", tuple(sorted((str(k), int(v)) for k, v in items))
        )

    def validate(self, model: Scm) -> None:
        pairs = [self.effect] + ([self.cause] if self.cause else [])
        for name, states in pairs:
            var = model.variable(name)
            if var.is_exogenous:
                raise ModelError(f"query variable {name!r} is exogenous")
            for s in states:
                if not (0 <= s < var.cardinality):
                    raise ModelError(f"state {name}={s} is outside the domain")
        for name, s in self.evidence:
            var = model.variable(name)
            if var.is_exogenous:
                raise ModelError(f"evidence variable {name!r} is exogenous")
            if not (0 <= s < var.cardinality):
                raise ModelError(f"evidence {name}={s} is outside the domain")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "effect": [self.effect[0], list(self.effect[1])],
            "cause": None if self.cause is None else [self.cause[0], list(self.cause[1])],
            "evidence": {k: v for k, v in self.evidence},
        }

    def __str__(self) -> str:
        ev = dict(self.evidence)
        if self.kind == PNS:
            x, (x1, x0) = self.cause
            y, (y1, y0) = self.effect
            return f"pns({x}={x1}/{x0}, {y}={y1}/{y0})"
        if self.kind in (PN, PS):
            x, (x1, x0) = self.cause
            y, (y1, y0) = self.effect
            return f"{self.kind}({x}={x1}/{x0}, {y}={y1}/{y0})"
        if self.kind == CAUSAL_EFFECT:
            x, (x1, _) = self.cause
            y, (y1, _) = self.effect
            return f"effect(do {x}={x1}; {y}={y1})"
        y, (y1, _) = self.effect
        if ev:
            inner = ", ".join(f"{k}={v}" for k, v in sorted(ev.items()))
            return f"prob({y}={y1} | {inner})"
        return f"prob({y}={y1})"


@dataclass(frozen=True)
class QueryOutcome:
    """A query value, or an unsupported-evidence flag."""

    descriptor: QueryDescriptor
    value: float | None
    supported: bool
    note: str = ""

    def require(self) -> float:
        if not self.supported or self.value is None:
            raise UnsupportedEvidenceError(
                f"{self.descriptor}: {self.note or 'evidence has zero probability'}"
            )
        return self.value


def intervene(model: Scm, do: Mapping[str, int]) -> Scm:
    """Single-world surgery: forced nodes lose all incoming arcs.

    Each intervened equation becomes the constant state; exogenous variables
    left without children are pruned.
    """
    for name, state in do.items():
        var = model.variable(name)
        if var.is_exogenous:
            raise ModelError(f"cannot intervene on exogenous variable {name!r}")
        if not (0 <= state < var.cardinality):
            raise ModelError(f"do({name}={state}) is outside the domain")
    equations = []
    used_exo: set[str] = set()
    for var in model.endogenous:
        if var.name in do:
            equations.append(StructuralEquation(var.name, (), (do[var.name],)))
            continue
        eq = model.equations[var.name]
        equations.append(eq)
        used_exo.update(p for p in eq.parents if model.variable(p).is_exogenous)
    variables = [v for v in model.variables if not v.is_exogenous or v.name in used_exo]
    pmfs = None
    if model.exogenous_pmfs is not None:
        pmfs = {
            name: pmf.values
            for name, pmf in model.exogenous_pmfs.items()
            if name in used_exo
        }
    return Scm(variables, equations, pmfs)


def _clip(value: float) -> float:
    if value < -1e-9 or value > 1.0 + 1e-9:
        raise ModelError(f"query value {value} escapes [0, 1]")
    return min(max(value, 0.0), 1.0)


def evaluate(
    model: Scm, query: QueryDescriptor, size_cap: int | None = None
) -> QueryOutcome:
    """Evaluate any query kind on a fully specified model."""
    query.validate(model)
    if query.kind == PNS:
        x, (x1, x0) = query.cause
        y, (y1, y0) = query.effect
        twin = twin_graph(model, [World.make(0, {x: x1}), World.make(1, {x: x0})])
        res = factors.query(
            twin, (world_name(y, 0), world_name(y, 1)), size_cap=size_cap
        )
        value = res.values[y1, y0]
        return QueryOutcome(query, _clip(float(value)), True)

    if query.kind in (PN, PS):
        x, (x1, x0) = query.cause
        y, (y1, y0) = query.effect
        if query.kind == PN:
            do_state, target_state = x0, y0
            default_evidence = {x: x1, y: y1}
        else:
            do_state, target_state = x1, y1
            default_evidence = {x: x0, y: y0}
        evidence = dict(query.evidence) or default_evidence
        twin = twin_graph(model, [World.make(0), World.make(1, {x: do_state})])
        shifted = {world_name(k, 0): v for k, v in evidence.items()}
        res = factors.query(
            twin, (world_name(y, 1),), evidence=shifted, size_cap=size_cap
        )
        if not res.supported:
            return QueryOutcome(query, None, False, "evidence has zero probability")
        return QueryOutcome(query, _clip(float(res.values[target_state])), True)

    if query.kind == CAUSAL_EFFECT:
        x, (x1, _) = query.cause
        y, (y1, _) = query.effect
        surgered = intervene(model, {x: x1})
        res = factors.query(
            surgered, (y,), evidence=dict(query.evidence), size_cap=size_cap
        )
        if not res.supported:
            return QueryOutcome(query, None, False, "evidence has zero probability")
        return QueryOutcome(query, _clip(float(res.values[y1])), True)

    # conditional
    y, (y1, _) = query.effect
    res = factors.query(model, (y,), evidence=dict(query.evidence), size_cap=size_cap)
    if not res.supported:
        return QueryOutcome(query, None, False, "evidence has zero probability")
    return QueryOutcome(query, _clip(float(res.values[y1])), True)


def pns(
    model: Scm,
    cause: str,
    effect: str,
    cause_states: tuple[int, int] = (1, 0),
    effect_states: tuple[int, int] = (1, 0),
) -> float:
    """P(effect would hold under the cause AND fail without it)."""
    q = QueryDescriptor(PNS, (effect, effect_states), (cause, cause_states))
    return evaluate(model, q).require()


def pn(
    model: Scm,
    cause: str,
    effect: str,
    evidence: Mapping[str, int] | None = None,
    cause_states: tuple[int, int] = (1, 0),
    effect_states: tuple[int, int] = (1, 0),
) -> float:
    """Probability of necessity, given factual evidence (default: cause and
    effect both at their distinguished states)."""
    q = QueryDescriptor(
        PN,
        (effect, effect_states),
        (cause, cause_states),
        tuple(sorted((evidence or {}).items())),
    )
    return evaluate(model, q).require()


def ps(
    model: Scm,
    cause: str,
    effect: str,
    evidence: Mapping[str, int] | None = None,
    cause_states: tuple[int, int] = (1, 0),
    effect_states: tuple[int, int] = (1, 0),
) -> float:
    """Probability of sufficiency, symmetric to :func:`pn`."""
    q = QueryDescriptor(
        PS,
        (effect, effect_states),
        (cause, cause_states),
        tuple(sorted((evidence or {}).items())),
    )
    return evaluate(model, q).require()


def causal_effect(
    model: Scm,
    do: Mapping[str, int],
    target: str,
    state: int = 1,
    evidence: Mapping[str, int] | None = None,
) -> float:
    """Interventional probability P(target=state | do(...), evidence)."""
    (cause_var, cause_state), *rest = list(do.items())
    if rest:
        raise ModelError("causal-effect queries intervene on a single variable")
    q = QueryDescriptor(
        CAUSAL_EFFECT,
        (target, (state, state)),
        (cause_var, (cause_state, cause_state)),
        tuple(sorted((evidence or {}).items())),
    )
    return evaluate(model, q).require()


_NAME = r"[A-Za-z_][A-Za-z_0-9.@-]*"
_PAIR_RE = re.compile(rf"^({_NAME})\s*=\s*(\d+)\s*/\s*(\d+)$")
_SINGLE_RE = re.compile(rf"^({_NAME})\s*=\s*(\d+)$")
_BARE_RE = re.compile(rf"^({_NAME})$")


def _parse_pair(
    text: str, model: Scm | None, default: tuple[int, int] | None
) -> tuple[str, tuple[int, int]]:
    text = text.strip()
    m = _PAIR_RE.match(text)
    if m:
        return m.group(1), (int(m.group(2)), int(m.group(3)))
    m = _BARE_RE.match(text)
    if m and default is not None:
        return m.group(1), default
    raise QueryParseError(f"cannot parse variable/state pair {text!r}")


def _complement(name: str, state: int, model: Scm | None) -> int:
    card = 2 if model is None else model.cardinality(name)
    if card != 2:
        raise QueryParseError(
            f"{name!r} is not binary; spell both states as {name}=s1/s0"
        )
    return 1 - state


def parse_query(text: str, model: Scm | None = None) -> QueryDescriptor:
    """Parse the compact query grammar (see the module docstring)."""
    s = text.strip()
    m = re.match(rf"^(pns|pn|ps)\s*\(\s*(.+?)\s*,\s*(.+?)\s*\)$", s)
    if m:
        kind, cause_txt, effect_txt = m.group(1), m.group(2), m.group(3)
        if kind == "pns":
            cause = _parse_pair(cause_txt, model, (1, 0))
            effect = _parse_pair(effect_txt, model, (1, 0))
            q = QueryDescriptor(PNS, effect, cause)
        else:
            pair = _PAIR_RE.match(cause_txt.strip())
            if pair:
                cause = (pair.group(1), (int(pair.group(2)), int(pair.group(3))))
            else:
                single = _SINGLE_RE.match(cause_txt.strip())
                if not single:
                    raise QueryParseError(f"cannot parse {cause_txt!r} in {text!r}")
                name, state = single.group(1), int(single.group(2))
                other = _complement(name, state, model)
                cause = (name, (state, other) if kind == "pn" else (other, state))
            pair = _PAIR_RE.match(effect_txt.strip())
            if pair:
                effect = (pair.group(1), (int(pair.group(2)), int(pair.group(3))))
            else:
                single = _SINGLE_RE.match(effect_txt.strip())
                if not single:
                    raise QueryParseError(f"cannot parse {effect_txt!r} in {text!r}")
                name, state = single.group(1), int(single.group(2))
                other = _complement(name, state, model)
                effect = (name, (state, other) if kind == "pn" else (other, state))
            q = QueryDescriptor(PN if kind == "pn" else PS, effect, cause)
        if model is not None:
            q.validate(model)
        return q

    m = re.match(rf"^effect\s*\(\s*do\s+({_NAME})\s*=\s*(\d+)\s*;\s*(.+?)\s*\)$", s)
    if m:
        cause = (m.group(1), (int(m.group(2)), int(m.group(2))))
        target_txt = m.group(3).strip()
        tm = _SINGLE_RE.match(target_txt) or _BARE_RE.match(target_txt)
        if not tm:
            raise QueryParseError(f"cannot parse effect target {target_txt!r}")
        state = int(tm.group(2)) if tm.lastindex and tm.lastindex >= 2 else 1
        q = QueryDescriptor(CAUSAL_EFFECT, (tm.group(1), (state, state)), cause)
        if model is not None:
            q.validate(model)
        return q

    m = re.match(rf"^prob\s*\(\s*({_NAME})\s*=\s*(\d+)\s*(?:\|\s*(.+?))?\s*\)$", s)
    if m:
        target = (m.group(1), (int(m.group(2)), int(m.group(2))))
        evidence = []
        if m.group(3):
            for part in m.group(3).split(","):
                em_ = _SINGLE_RE.match(part.strip())
                if not em_:
                    raise QueryParseError(f"cannot parse evidence {part.strip()!r}")
                evidence.append((em_.group(1), int(em_.group(2))))
        q = QueryDescriptor(CONDITIONAL, target, None, tuple(sorted(evidence)))
        if model is not None:
            q.validate(model)
        return q

    raise QueryParseError(
        f"unrecognised query {text!r}; expected pns(...), pn(...), ps(...), "
        "effect(do ...; ...), or prob(...)"
    )
