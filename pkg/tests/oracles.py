"""Independent brute-force oracles used to check the library's fast paths.

Everything here enumerates joint state spaces directly in pure Python and
deliberately avoids the library's factor engine, component machinery, and
twin-graph construction, so a bug cannot hide on both sides of a test.
"""

from __future__ import annotations

import itertools
import math

from causalem.model import Scm


def _exo_space(model: Scm):
    names = [v.name for v in model.exogenous]
    cards = [v.cardinality for v in model.exogenous]
    for combo in itertools.product(*(range(c) for c in cards)):
        yield dict(zip(names, combo))


def exo_probability(model: Scm, exo_assignment: dict[str, int]) -> float:
    p = 1.0
    for name, state in exo_assignment.items():
        p *= float(model.pmf(name)[state])
    return p


def enum_joint_endogenous(model: Scm) -> dict[tuple[int, ...], float]:
    """P(x) for every joint endogenous configuration, by exogenous enumeration."""
    endo_names = [v.name for v in model.endogenous]
    out: dict[tuple[int, ...], float] = {}
    for u in _exo_space(model):
        p = exo_probability(model, u)
        if p == 0.0:
            continue
        values = model.evaluate(u)
        key = tuple(values[n] for n in endo_names)
        out[key] = out.get(key, 0.0) + p
    return out


def enum_query(
    model: Scm, targets: tuple[str, ...], evidence: dict[str, int] | None = None
) -> dict[tuple[int, ...], float] | None:
    """Conditional P(targets | evidence) by full enumeration; None if evidence
    has zero probability."""
    evidence = evidence or {}
    totals: dict[tuple[int, ...], float] = {}
    mass = 0.0
    for u in _exo_space(model):
        p = exo_probability(model, u)
        if p == 0.0:
            continue
        values = model.evaluate(u)
        values.update(u)
        if any(values[k] != v for k, v in evidence.items()):
            continue
        mass += p
        key = tuple(values[t] for t in targets)
        totals[key] = totals.get(key, 0.0) + p
    if mass <= 0.0:
        return None
    return {k: v / mass for k, v in totals.items()}


def counterfactual_outcome(
    model: Scm, u: dict[str, int], do: dict[str, int]
) -> dict[str, int]:
    """Forward pass under an intervention, implemented from scratch."""
    values: dict[str, int] = dict(u)
    for name in model.topological_order:
        var = model.variable(name)
        if var.is_exogenous:
            continue
        if name in do:
            values[name] = do[name]
            continue
        eq = model.equations[name]
        cards = model.parent_cards(name)
        idx = 0
        for p, c in zip(eq.parents, cards):
            idx = idx * c + values[p]
        values[name] = eq.table[idx]
    return values


def enum_pns(
    model: Scm,
    cause: str,
    effect: str,
    cause_states: tuple[int, int] = (1, 0),
    effect_states: tuple[int, int] = (1, 0),
) -> float:
    x1, x0 = cause_states
    y1, y0 = effect_states
    total = 0.0
    for u in _exo_space(model):
        p = exo_probability(model, u)
        if p == 0.0:
            continue
        v1 = counterfactual_outcome(model, u, {cause: x1})
        v0 = counterfactual_outcome(model, u, {cause: x0})
        if v1[effect] == y1 and v0[effect] == y0:
            total += p
    return total


def enum_pn(
    model: Scm,
    cause: str,
    effect: str,
    evidence: dict[str, int] | None = None,
    cause_states: tuple[int, int] = (1, 0),
    effect_states: tuple[int, int] = (1, 0),
) -> float | None:
    x1, x0 = cause_states
    y1, y0 = effect_states
    evidence = dict(evidence or {cause: x1, effect: y1})
    num = 0.0
    den = 0.0
    for u in _exo_space(model):
        p = exo_probability(model, u)
        if p == 0.0:
            continue
        factual = counterfactual_outcome(model, u, {})
        if any(factual[k] != v for k, v in evidence.items()):
            continue
        den += p
        if counterfactual_outcome(model, u, {cause: x0})[effect] == y0:
            num += p
    if den <= 0.0:
        return None
    return num / den


def enum_causal_effect(
    model: Scm, do: dict[str, int], target: str, state: int
) -> float:
    total = 0.0
    for u in _exo_space(model):
        p = exo_probability(model, u)
        if p == 0.0:
            continue
        if counterfactual_outcome(model, u, do)[target] == state:
            total += p
    return total


def enum_marginal_ll(model: Scm, data) -> float:
    """Sum of count * log P(x) over the dataset, from the enumerated joint."""
    joint = enum_joint_endogenous(model)
    endo_names = [v.name for v in model.endogenous]
    idx = [data.columns.index(n) for n in endo_names]
    total = 0.0
    for cfg, count in data.counts.items():
        key = tuple(cfg[i] for i in idx)
        p = joint.get(key, 0.0)
        if p <= 0.0:
            return -math.inf
        total += count * math.log(p)
    return total


def bfs_reduction_components(model: Scm) -> set[frozenset[str]]:
    """Connected components of the reduction via breadth-first search."""
    adjacency: dict[str, set[str]] = {v.name: set() for v in model.variables}
    for var in model.endogenous:
        for p in model.parents(var.name):
            if model.variable(p).is_exogenous:
                adjacency[p].add(var.name)
                adjacency[var.name].add(p)
    seen: set[str] = set()
    components = set()
    for start in adjacency:
        if start in seen:
            continue
        frontier = [start]
        group = set()
        while frontier:
            node = frontier.pop()
            if node in group:
                continue
            group.add(node)
            frontier.extend(adjacency[node] - group)
        seen |= group
        components.add(frozenset(group))
    return components


def direct_ll_star(model: Scm, data) -> float:
    """Maximum log-likelihood computed straight from dataset projections.

    Independent route: components found by BFS, contexts ordered by the
    declaration order, frequencies from raw nested loops.
    """
    position = {name: i for i, name in enumerate(model.topological_order)}
    total = 0.0
    for group in bfs_reduction_components(model):
        members = sorted(
            (n for n in group if not model.variable(n).is_exogenous),
            key=position.__getitem__,
        )
        for child in members:
            context = set(members) | {
                p
                for m in members
                for p in model.parents(m)
                if not model.variable(p).is_exogenous
            }
            ctx_vars = sorted(
                (c for c in context if position[c] < position[child]),
                key=position.__getitem__,
            )
            counts: dict[tuple, dict[int, int]] = {}
            child_idx = data.columns.index(child)
            ctx_idx = [data.columns.index(c) for c in ctx_vars]
            for cfg, count in data.counts.items():
                key = tuple(cfg[i] for i in ctx_idx)
                counts.setdefault(key, {})
                counts[key][cfg[child_idx]] = counts[key].get(cfg[child_idx], 0) + count
            for per_state in counts.values():
                n_ctx = sum(per_state.values())
                for n in per_state.values():
                    if n > 0:
                        total += n * math.log(n / n_ctx)
    return total


def credible_probability_by_integration(n: int, width: float, delta: float) -> float:
    """Numerical double integration of the credibility ratio."""
    from scipy import integrate

    def density(x: float, y: float) -> float:
        return (width / (width + x + y)) ** n

    half = delta / 2.0
    num, _ = integrate.dblquad(density, 0.0, half, 0.0, half, epsabs=1e-13, epsrel=1e-12)
    top = 1.0 - width
    den, _ = integrate.dblquad(
        density, 0.0, top, 0.0, lambda y: top - y, epsabs=1e-13, epsrel=1e-12
    )
    return num / den
