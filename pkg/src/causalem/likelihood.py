"""Empirical frequency tables, log-likelihoods, and the compatibility test.

The endogenous log-likelihood decomposes per c-component into multinomial
families ``P(x | context-of-x)``; its global maximum is attained exactly at
the empirical frequencies.  A partially specified model is compatible with
a dataset when some exogenous quantification makes the marginal
log-likelihood reach that maximum; repeated EM runs give an effective test.

Frequencies are kept as exact ratios of counts; log-likelihoods are floats.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DataError, ModelError
from .factors import component_indicator
from .graphs import CComponent, ComponentDecomposition, c_components
from .model import Dataset, Scm


@dataclass(frozen=True)
class ConditionalFamily:
    """Counts ``n(x, context)`` for one endogenous variable within its component."""

    child: str
    child_card: int
    context_vars: tuple[str, ...]
    counts: Mapping[tuple[int, ...], np.ndarray]

    def defined(self, context: tuple[int, ...]) -> bool:
        return context in self.counts

    def context_total(self, context: tuple[int, ...]) -> int:
        return int(self.counts[context].sum())

    def frequency(self, context: tuple[int, ...], state: int) -> Fraction:
        """Exact empirical conditional probability ``n(x, ctx) / n(ctx)``."""
        if context not in self.counts:
            raise DataError(
                f"context {context} over {self.context_vars} has no observations"
            )
        row = self.counts[context]
        return Fraction(int(row[state]), int(row.sum()))

    def probabilities(self, context: tuple[int, ...]) -> tuple[Fraction, ...]:
        return tuple(self.frequency(context, s) for s in range(self.child_card))


@dataclass(frozen=True)
class EmpiricalTables:
    """Per-component empirical conditionals plus raw context counts."""

    n: int
    families: Mapping[str, ConditionalFamily]
    component_index: Mapping[str, int]
    component_contexts: tuple[tuple[tuple[str, ...], Mapping[tuple[int, ...], int]], ...]

    def family(self, child: str) -> ConditionalFamily:
        if child not in self.families:
            raise ModelError(f"no conditional family for {child!r}")
        return self.families[child]

    def context_counts(self, component: int) -> Mapping[tuple[int, ...], int]:
        return self.component_contexts[component][1]


def empirical_frequencies(
    data: Dataset,
    decomposition: ComponentDecomposition,
    model: Scm | None = None,
) -> EmpiricalTables:
    """Empirical conditional tables for every component member.

    Contexts never observed are simply absent (flagged by ``defined``), not
    invented.  Passing the model pins each child's cardinality; without it,
    the largest observed state is assumed to be the last one.
    """
    if data.n == 0:
        raise DataError("dataset is empty")
    if model is not None:
        data.check_against(model)
    families: dict[str, ConditionalFamily] = {}
    component_index: dict[str, int] = {}
    component_contexts = []
    for comp in decomposition:
        if comp.context:
            proj = data.project(comp.context)
            component_contexts.append((comp.context, proj.counts))
        else:
            component_contexts.append((comp.context, {}))
        for child in comp.endogenous:
            ctx_vars = comp.var_context(child)
            if model is not None:
                child_card = model.cardinality(child)
            else:
                child_card = 1 + max(
                    (cfg[data.columns.index(child)] for cfg in data.counts), default=0
                )
            sub = data.project((child,) + ctx_vars)
            counts: dict[tuple[int, ...], np.ndarray] = {}
            for cfg, count in sub.counts.items():
                state, ctx = cfg[0], cfg[1:]
                row = counts.get(ctx)
                if row is None:
                    row = np.zeros(child_card, dtype=np.int64)
                    counts[ctx] = row
                row[state] += count
            families[child] = ConditionalFamily(
                child=child,
                child_card=child_card,
                context_vars=ctx_vars,
                counts=counts,
            )
            component_index[child] = comp.index
    return EmpiricalTables(
        n=data.n,
        families=families,
        component_index=component_index,
        component_contexts=tuple(component_contexts),
    )


def ll_star(data: Dataset, tables: EmpiricalTables) -> float:
    """Global maximum of the endogenous log-likelihood, at the empirical frequencies.

    Zero-count cells contribute nothing (``0 log 0 := 0``).
    """
    if data.n != tables.n:
        raise DataError("tables were built from a different dataset")
    total = 0.0
    for family in tables.families.values():
        for row in family.counts.values():
            n_ctx = int(row.sum())
            for n_state in row:
                if n_state > 0:
                    total += float(n_state) * math.log(n_state / n_ctx)
    return total


@dataclass(frozen=True)
class MarginalLL:
    """Marginal log-likelihood value, with zero-mass contexts flagged explicitly.

    ``value`` is finite only when every observed context has positive model
    probability; otherwise the model cannot generate the data and ``value``
    is meaningless (kept at ``-inf`` for reporting, never for comparisons:
    check ``is_finite`` first).
    """

    value: float
    impossible_contexts: tuple[tuple[int, tuple[int, ...]], ...] = ()

    @property
    def is_finite(self) -> bool:
        return not self.impossible_contexts


def joint_exogenous_prior(model: Scm, component: CComponent) -> np.ndarray:
    """Row-major joint PMF over a component's exogenous variables."""
    prior = np.ones(1, dtype=np.float64)
    for name in component.exogenous:
        prior = np.outer(prior, model.pmf(name)).reshape(-1)
    return prior


def marginal_ll(
    model: Scm,
    data: Dataset,
    decomposition: ComponentDecomposition | None = None,
    size_cap: int | None = None,
) -> MarginalLL:
    """Marginal log-likelihood of a fully specified model on endogenous data.

    Sums, per component and observed context, ``n(context) * log Q(context)``
    where ``Q`` marginalises the component's exogenous variables.  Contexts
    with zero model probability are flagged.
    """
    data.check_against(model)
    decomposition = decomposition or c_components(model)
    total = 0.0
    impossible: list[tuple[int, tuple[int, ...]]] = []
    for comp in decomposition:
        if not comp.endogenous:
            continue
        proj = data.project(comp.context)
        contexts = sorted(proj.counts)
        counts = np.array([proj.counts[c] for c in contexts], dtype=np.float64)
        ctx_array = np.array(contexts, dtype=np.int64).reshape(len(contexts), -1)
        indicator = component_indicator(model, comp, ctx_array, size_cap=size_cap)
        prior = joint_exogenous_prior(model, comp)
        q = indicator @ prior
        zero = q <= 0.0
        if zero.any():
            impossible.extend((comp.index, contexts[i]) for i in np.nonzero(zero)[0])
            continue
        total += float(counts @ np.log(q))
    if impossible:
        return MarginalLL(value=-math.inf, impossible_contexts=tuple(impossible))
    return MarginalLL(value=total)


COMPATIBLE = "compatible"
INCOMPATIBLE = "incompatible"
INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class CompatibilityResult:
    verdict: str
    ll_star: float
    best_ll: float | None
    gap: float | None
    tol: float
    n_runs: int
    converged_runs: int

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "ll_star": self.ll_star,
            "best_ll": self.best_ll,
            "gap": self.gap,
            "tol": self.tol,
            "runs": self.n_runs,
            "converged_runs": self.converged_runs,
        }


def compatibility_test(
    model: Scm,
    data: Dataset,
    runs: int = 10,
    tol: float = 1e-3,
    seed: int | None = None,
    epsilon: float | None = None,
    max_iter: int | None = None,
    jobs: int = 1,
) -> CompatibilityResult:
    """Decide whether some exogenous quantification can reproduce the data.

    Runs the causal EM ``runs`` times.  If any converged run reaches the
    frequency maximum within ``tol`` (nats, absolute on the total
    log-likelihood) the verdict is compatible; if all runs converge strictly
    below, incompatible; otherwise inconclusive.
    """
    from . import em  # deferred: em depends on this module

    if runs < 1:
        raise ValueError("runs must be >= 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    data.check_against(model)
    decomposition = c_components(model)
    tables = empirical_frequencies(data, decomposition)
    target = ll_star(data, tables)
    results = em.run_many(
        model, data, n_runs=runs, seed=seed, epsilon=epsilon, max_iter=max_iter, jobs=jobs
    )
    converged = [r for r in results if r.converged]
    best = max((r.log_likelihood for r in converged), default=None)
    gap = None if best is None else target - best
    if best is not None and best >= target - tol:
        verdict = COMPATIBLE
    elif len(converged) == len(results):
        verdict = INCOMPATIBLE
    else:
        verdict = INCONCLUSIVE
    return CompatibilityResult(
        verdict=verdict,
        ll_star=target,
        best_ll=best,
        gap=gap,
        tol=tol,
        n_runs=runs,
        converged_runs=len(converged),
    )
