"""The causal EM: sampling exogenous quantifications compatible with data.

Each run initialises every exogenous PMF from a symmetric Dirichlet(1) and
iterates, independently per c-component, the update

    P(u) <- N^{-1} * sum over observed contexts  count * P(u | context)

until the summed KL divergence between successive PMF sets falls below the
convergence threshold.  On compatible models every converged run lands on
the likelihood plateau, so the run values of a counterfactual query sample
the set of compatible fully specified models; their extremes give an inner
approximation of the query's bounds, with a closed-form credible interval
for the approximation quality as a function of the number of runs.
"""

from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import EstimationError
from .factors import component_indicator
from .graphs import ComponentDecomposition, c_components
from .model import Dataset, Scm
from .queries import QueryDescriptor, evaluate, parse_query

DEFAULT_EPSILON = 2.0 * float(np.finfo(np.float64).eps)
DEFAULT_MAX_ITER = 10_000
MAX_REINITS = 5

# Per-run Dirichlet concentrations for the multi-run driver, cycled by run
# index.  Uniform simplex draws cluster centrally for high cardinalities, so
# an interval estimated from them under-covers the extremes; mixing in
# sparser starts makes the converged points spread further over the
# compatible set at no cost to correctness (every converged run lands there
# regardless of where it started).
INIT_CONCENTRATIONS: tuple[float, ...] = (1.0, 0.5, 0.25, 0.1)


@dataclass(frozen=True)
class EmRun:
    """One converged (or flagged) EM run.

    ``ll_traces`` holds the per-component marginal log-likelihood across
    iterations; ``final_deltas`` the summed KL divergence of the last step
    per component (the convergence metric at stopping time).
    """

    seed: int
    pmfs: Mapping[str, tuple[float, ...]]
    iterations: tuple[int, ...]
    log_likelihood: float
    converged: bool
    ll_traces: tuple[tuple[float, ...], ...]
    final_deltas: tuple[float, ...]
    reinitialisations: int
    note: str = ""

    def to_dict(self, include_traces: bool = False) -> dict:
        doc = {
            "seed": int(self.seed),
            "pmfs": {k: list(v) for k, v in self.pmfs.items()},
            "iterations": list(self.iterations),
            "log_likelihood": self.log_likelihood,
            "converged": self.converged,
            "final_deltas": list(self.final_deltas),
            "reinitialisations": self.reinitialisations,
            "note": self.note,
        }
        if include_traces:
            doc["ll_traces"] = [list(t) for t in self.ll_traces]
        return doc


@dataclass(frozen=True)
class _ComponentPrep:
    index: int
    exo_names: tuple[str, ...]
    exo_cards: tuple[int, ...]
    joint: int
    counts: np.ndarray
    indicator: np.ndarray
    feasible: np.ndarray  # per observed context: does any joint state realise it


@dataclass(frozen=True)
class EmPrep:
    """Shared, immutable preprocessing for repeated runs on one (model, data) pair."""

    model: Scm
    data: Dataset
    decomposition: ComponentDecomposition
    components: tuple[_ComponentPrep, ...]
    n: int


def prepare(model: Scm, data: Dataset, size_cap: int | None = None) -> EmPrep:
    data.check_against(model)
    decomposition = c_components(model)
    comps = []
    for comp in decomposition:
        if not comp.endogenous:
            comps.append(
                _ComponentPrep(
                    index=comp.index,
                    exo_names=comp.exogenous,
                    exo_cards=tuple(model.cardinality(u) for u in comp.exogenous),
                    joint=int(np.prod([model.cardinality(u) for u in comp.exogenous], dtype=np.int64))
                    if comp.exogenous
                    else 1,
                    counts=np.zeros(0),
                    indicator=np.zeros((0, 1)),
                    feasible=np.zeros(0, dtype=bool),
                )
            )
            continue
        proj = data.project(comp.context)
        contexts = sorted(proj.counts)
        counts = np.array([proj.counts[c] for c in contexts], dtype=np.float64)
        ctx_array = np.array(contexts, dtype=np.int64).reshape(len(contexts), -1)
        indicator = component_indicator(model, comp, ctx_array, size_cap=size_cap)
        exo_cards = tuple(model.cardinality(u) for u in comp.exogenous)
        comps.append(
            _ComponentPrep(
                index=comp.index,
                exo_names=comp.exogenous,
                exo_cards=exo_cards,
                joint=int(np.prod(exo_cards, dtype=np.int64)) if exo_cards else 1,
                counts=counts,
                indicator=indicator,
                feasible=indicator.max(axis=1) > 0,
            )
        )
    return EmPrep(model, data, decomposition, tuple(comps), data.n)


def _joint_rows(pmf_rows: Sequence[np.ndarray]) -> np.ndarray:
    """Row-wise outer product -> (runs, joint) in row-major exogenous order."""
    out = pmf_rows[0]
    for block in pmf_rows[1:]:
        out = (out[:, :, None] * block[:, None, :]).reshape(out.shape[0], -1)
    return out


def _draw_pmf(rng, card: int, alpha: float) -> np.ndarray:
    # Sparse concentrations can underflow every gamma draw; retry until sane.
    for _ in range(100):
        draw = rng.dirichlet(np.full(card, alpha))
        if np.isfinite(draw).all() and abs(draw.sum() - 1.0) <= 1e-9:
            return draw
    raise EstimationError(f"could not draw a valid Dirichlet({alpha}) start")


def _kl_rows(new: np.ndarray, old: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(new > 0, new * (np.log(new) - np.log(old)), 0.0)
    return terms.sum(axis=1)


def _run_component_batch(
    prep: _ComponentPrep,
    rngs: Sequence,
    n_total: int,
    epsilon: float,
    max_iter: int,
    alphas: Sequence[float],
):
    """Vectorised EM over one component for a batch of runs.

    Returns per-run PMFs, iteration counts, log-likelihood traces, a
    converged mask and reinitialisation counts.  All runs share the
    indicator table; only the PMF rows differ.
    """
    runs = len(rngs)
    cards = prep.exo_cards
    if not cards:
        # Deterministic component: nothing to estimate.  The data must still
        # be realisable by the fixed mechanisms.
        ok = bool(prep.feasible.all()) if prep.counts.size else True
        ll = float(prep.counts @ np.log(prep.indicator[:, 0])) if ok and prep.counts.size else 0.0
        value = ll if ok else -math.inf
        return (
            [{} for _ in range(runs)],
            np.zeros(runs, dtype=int),
            [[value] for _ in range(runs)],
            np.full(runs, ok),
            np.zeros(runs, dtype=int),
            np.zeros(runs),
        )

    pmfs = [
        np.concatenate(
            [_draw_pmf(rng, card, a)[None, :] for rng, a in zip(rngs, alphas)], axis=0
        )
        for card in cards
    ]
    joint = _joint_rows(pmfs)

    if prep.counts.size == 0 or not prep.counts.any():
        # No data touches this component; the initial draw is already a fixed point.
        return (
            [
                {name: p[r] for name, p in zip(prep.exo_names, pmfs)}
                for r in range(runs)
            ],
            np.zeros(runs, dtype=int),
            [[0.0] for _ in range(runs)],
            np.full(runs, True),
            np.zeros(runs, dtype=int),
            np.zeros(runs),
        )

    if not prep.feasible.all():
        # Some observed context is realisable by no exogenous state at all:
        # no quantification can help.
        return (
            [{} for _ in range(runs)],
            np.zeros(runs, dtype=int),
            [[-math.inf] for _ in range(runs)],
            np.full(runs, False),
            np.zeros(runs, dtype=int),
            np.zeros(runs),
        )

    A = prep.indicator
    counts = prep.counts
    weights = counts / n_total
    shape = (runs,) + cards

    active = np.full(runs, True)
    dead = np.full(runs, False)
    iterations = np.zeros(runs, dtype=int)
    reinits = np.zeros(runs, dtype=int)
    last_delta = np.zeros(runs)
    traces: list[list[float]] = [[] for _ in range(runs)]

    t = 0
    while active.any() and t < max_iter:
        z = joint @ A.T
        bad = active & ((z <= 0.0) & (counts > 0.0)[None, :]).any(axis=1)
        for r in np.nonzero(bad)[0]:
            if reinits[r] >= MAX_REINITS:
                active[r] = False
                dead[r] = True
                continue
            reinits[r] += 1
            for k, card in enumerate(cards):
                pmfs[k][r] = _draw_pmf(rngs[r], card, alphas[r])
            joint[r] = _joint_rows([p[r : r + 1] for p in pmfs])[0]
            z[r] = joint[r] @ A.T
            traces[r].clear()
        with np.errstate(divide="ignore"):
            ll = (counts[None, :] * np.log(np.maximum(z, 1e-300))).sum(axis=1)
        for r in np.nonzero(active)[0]:
            traces[r].append(float(ll[r]))

        scale = np.where(z > 0.0, weights[None, :] / np.maximum(z, 1e-300), 0.0)
        q = joint * (scale @ A)
        q_shaped = q.reshape(shape)
        delta = np.zeros(runs)
        new_pmfs = []
        for k in range(len(cards)):
            axes = tuple(i + 1 for i in range(len(cards)) if i != k)
            marg = q_shaped.sum(axis=axes) if axes else q_shaped
            delta += _kl_rows(marg, pmfs[k])
            new_pmfs.append(marg)
        upd = active
        for k in range(len(cards)):
            pmfs[k][upd] = new_pmfs[k][upd]
        joint[upd] = _joint_rows([p[upd] for p in pmfs])
        last_delta[upd] = delta[upd]
        finished = upd & (delta <= epsilon)
        iterations[upd] = t + 1
        active = active & ~finished
        t += 1

    z = joint @ A.T
    bad_final = ((z <= 0.0) & (counts > 0.0)[None, :]).any(axis=1)
    with np.errstate(divide="ignore"):
        final_ll = np.where(
            bad_final,
            -math.inf,
            (counts[None, :] * np.log(np.maximum(z, 1e-300))).sum(axis=1),
        )
    converged = ~dead & ~active
    for r in range(runs):
        traces[r].append(float(final_ll[r]))
    out_pmfs = [
        {name: p[r].copy() for name, p in zip(prep.exo_names, pmfs)} for r in range(runs)
    ]
    return out_pmfs, iterations, traces, converged, reinits, last_delta


def _resolve_concentrations(
    init_concentration: float | Sequence[float] | None, n_runs: int
) -> list[float]:
    if init_concentration is None:
        init_concentration = 1.0
    if isinstance(init_concentration, (int, float)):
        ladder = (float(init_concentration),)
    else:
        ladder = tuple(float(a) for a in init_concentration)
    if not ladder or any(a <= 0 for a in ladder):
        raise ValueError("initialisation concentrations must be positive")
    return [ladder[i % len(ladder)] for i in range(n_runs)]


def run_many(
    model: Scm,
    data: Dataset,
    n_runs: int,
    seed: int | Sequence[int] | None = None,
    epsilon: float | None = None,
    max_iter: int | None = None,
    jobs: int = 1,
    prep: EmPrep | None = None,
    initial: Mapping[str, Sequence[float]] | None = None,
    init_concentration: float | Sequence[float] | None = 1.0,
) -> list[EmRun]:
    """Run the causal EM ``n_runs`` times with distinct seeds.

    ``seed`` may be a master seed (per-run seeds are derived from it), an
    explicit sequence of per-run seeds, or ``None`` for fresh entropy.  With
    ``jobs > 1`` the runs are split across worker processes; results are
    merged in seed order either way.  ``initial`` forces the starting PMFs of
    every run (mainly for fixed-point tests).  ``init_concentration`` sets
    the Dirichlet parameter of the random starts: a constant (default 1,
    the uniform simplex draw) or a sequence cycled by run index, e.g.
    :data:`INIT_CONCENTRATIONS` for interval estimation.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    epsilon = DEFAULT_EPSILON if epsilon is None else float(epsilon)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    max_iter = DEFAULT_MAX_ITER if max_iter is None else int(max_iter)
    alphas = _resolve_concentrations(init_concentration, n_runs)
    if isinstance(seed, (int, np.integer)) or seed is None:
        master = np.random.default_rng(seed)
        seeds = [int(s) for s in master.integers(0, 2**63 - 1, size=n_runs)]
    else:
        seeds = [int(s) for s in seed]
        if len(seeds) != n_runs:
            raise ValueError(f"got {len(seeds)} seeds for {n_runs} runs")

    if jobs > 1 and n_runs > 1:
        order = list(range(n_runs))
        chunks = [order[i::jobs] for i in range(jobs)]
        chunks = [c for c in chunks if c]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(
                pool.map(
                    _run_chunk,
                    [
                        (
                            model,
                            data,
                            [seeds[i] for i in chunk],
                            epsilon,
                            max_iter,
                            initial,
                            [alphas[i] for i in chunk],
                        )
                        for chunk in chunks
                    ],
                )
            )
        by_index = {}
        for chunk, part in zip(chunks, parts):
            for i, run in zip(chunk, part):
                by_index[i] = run
        return [by_index[i] for i in range(n_runs)]

    prep = prep or prepare(model, data)
    return _run_batch(prep, seeds, epsilon, max_iter, initial, alphas)


def _run_chunk(args) -> list[EmRun]:
    model, data, seeds, epsilon, max_iter, initial, alphas = args
    prep = prepare(model, data)
    return _run_batch(prep, seeds, epsilon, max_iter, initial, alphas)


def _run_batch(
    prep: EmPrep,
    seeds: Sequence[int],
    epsilon: float,
    max_iter: int,
    initial: Mapping[str, Sequence[float]] | None = None,
    alphas: Sequence[float] | None = None,
) -> list[EmRun]:
    runs = len(seeds)
    if alphas is None:
        alphas = [1.0] * runs
    rngs = [np.random.default_rng(s) for s in seeds]
    if initial is not None:
        rngs = [_ForcedInit(initial, prep, np.random.default_rng(s)) for s in seeds]

    all_pmfs: list[dict[str, np.ndarray]] = [{} for _ in range(runs)]
    iterations = np.zeros((runs, len(prep.components)), dtype=int)
    traces: list[list[tuple[float, ...]]] = [[] for _ in range(runs)]
    converged = np.full(runs, True)
    reinits = np.zeros(runs, dtype=int)
    lls = np.zeros(runs)

    deltas = np.zeros((runs, len(prep.components)))
    for ci, comp in enumerate(prep.components):
        pmfs, iters, comp_traces, ok, re, comp_delta = _run_component_batch(
            comp, rngs, prep.n, epsilon, max_iter, alphas
        )
        for r in range(runs):
            all_pmfs[r].update(pmfs[r])
            iterations[r, ci] = iters[r]
            traces[r].append(tuple(comp_traces[r]))
            lls[r] += comp_traces[r][-1]
        deltas[:, ci] = comp_delta
        converged &= ok
        reinits += re

    out = []
    for r in range(runs):
        out.append(
            EmRun(
                seed=seeds[r],
                pmfs={k: tuple(float(x) for x in v) for k, v in all_pmfs[r].items()},
                iterations=tuple(int(i) for i in iterations[r]),
                log_likelihood=float(lls[r]),
                converged=bool(converged[r]),
                ll_traces=tuple(traces[r]),
                final_deltas=tuple(float(d) for d in deltas[r]),
                reinitialisations=int(reinits[r]),
                note="" if converged[r] else "did not converge",
            )
        )
    return out


class _ForcedInit:
    """Substitute generator whose first Dirichlet draw per variable is fixed.

    Lets tests start EM exactly at a chosen point; reinitialisations fall
    back to the real generator.
    """

    def __init__(self, initial, prep: EmPrep, rng: np.random.Generator):
        self._rng = rng
        self._queues: dict[int, list[np.ndarray]] = {}
        for comp in prep.components:
            vals = [
                np.asarray(initial[name], dtype=np.float64) for name in comp.exo_names
            ]
            self._queues[comp.index] = vals
        self._flat: list[np.ndarray] = [v for comp in prep.components for v in self._queues[comp.index]]
        self._cursor = 0

    def dirichlet(self, alpha: np.ndarray) -> np.ndarray:
        if self._cursor < len(self._flat):
            vals = self._flat[self._cursor]
            self._cursor += 1
            if len(vals) != len(alpha):
                raise ValueError("forced initial PMF has the wrong cardinality")
            return vals
        return self._rng.dirichlet(alpha)


def em_run(
    model: Scm,
    data: Dataset,
    seed: int = 0,
    epsilon: float | None = None,
    max_iter: int | None = None,
    initial: Mapping[str, Sequence[float]] | None = None,
    prep: EmPrep | None = None,
    init_concentration: float = 1.0,
) -> EmRun:
    """A single causal EM run with a uniform-simplex start (see :func:`run_many`)."""
    return run_many(
        model,
        data,
        n_runs=1,
        seed=[seed],
        epsilon=epsilon,
        max_iter=max_iter,
        prep=prep,
        initial=initial,
        init_concentration=init_concentration,
    )[0]


@dataclass(frozen=True)
class BoundsResult:
    """Query values across EM runs and the interval they induce."""

    query: QueryDescriptor
    values: tuple[float, ...]
    lower: float
    upper: float
    runs: tuple[EmRun, ...]
    excluded: tuple[tuple[int, str], ...]

    @property
    def interval(self) -> tuple[float, float]:
        return (self.lower, self.upper)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def credibility(
        self, epsilon_rel: float = 0.17, identifiable_width: float = 1e-12
    ) -> dict:
        """Credible-interval report for this interval at a relative slack.

        For a degenerate (candidate identifiable) interval the observed width
        is replaced by ``identifiable_width``, the documented machine-zero
        surrogate.
        """
        width = self.width
        surrogate = width <= 0.0
        if surrogate:
            width = identifiable_width
        report = {
            "runs": len(self.values),
            "epsilon_rel": epsilon_rel,
            "width": self.width,
            "surrogate_width": identifiable_width if surrogate else None,
            "delta": 2.0 * epsilon_rel * width,
            "assumptions": CREDIBILITY_ASSUMPTIONS,
        }
        if len(self.values) < 3:
            report.update(
                probability=None, raw=None, clamped=False,
                note="credibility needs at least 3 usable runs",
            )
            return report
        ci = credible_interval(len(self.values), width, 2.0 * epsilon_rel * width)
        report.update(probability=ci.probability, raw=ci.raw, clamped=ci.clamped)
        return report

    def to_dict(self, include_traces: bool = False) -> dict:
        return {
            "query": self.query.to_dict(),
            "values": list(self.values),
            "interval": [self.lower, self.upper],
            "runs": [r.to_dict(include_traces=include_traces) for r in self.runs],
            "excluded": [[i, reason] for i, reason in self.excluded],
        }


CREDIBILITY_ASSUMPTIONS = (
    "run values i.i.d. uniform on the exact interval; uniform prior on the "
    "two end-point gaps"
)


def bounds(
    model: Scm,
    data: Dataset,
    query: QueryDescriptor | str,
    n_runs: int,
    seed: int | Sequence[int] | None = None,
    epsilon: float | None = None,
    max_iter: int | None = None,
    jobs: int = 1,
    prep: EmPrep | None = None,
    init_concentration: float | Sequence[float] | None = 1.0,
    plateau_tol: float | None = 1e-3,
) -> BoundsResult:
    """Approximate bounds of a counterfactual query from ``n_runs`` EM runs.

    Each usable run is plugged into the model and the query evaluated on the
    resulting fully specified model; the interval is [min, max] of the run
    values.  Flagged runs are excluded and reported: non-convergence,
    unsupported query evidence, or a log-likelihood more than
    ``plateau_tol`` nats below the best run (not a plateau point).
    """
    descriptor = parse_query(query, model) if isinstance(query, str) else query
    runs = run_many(
        model,
        data,
        n_runs=n_runs,
        seed=seed,
        epsilon=epsilon,
        max_iter=max_iter,
        jobs=jobs,
        prep=prep,
        init_concentration=init_concentration,
    )
    # Only points on the likelihood plateau sample the compatible set; a run
    # whose step size fell under the threshold away from the plateau (rare
    # with uniform starts, likelier with sparse ones) must not pollute the
    # interval.
    best_ll = max((r.log_likelihood for r in runs if r.converged), default=-math.inf)
    values = []
    excluded = []
    for i, run in enumerate(runs):
        if not run.converged:
            excluded.append((i, run.note or "did not converge"))
            continue
        if plateau_tol is not None and run.log_likelihood < best_ll - plateau_tol:
            excluded.append(
                (i, f"converged {best_ll - run.log_likelihood:.3g} nats below the plateau")
            )
            continue
        fscm = model.with_exogenous_pmfs(run.pmfs)
        outcome = evaluate(fscm, descriptor)
        if not outcome.supported:
            excluded.append((i, "unsupported evidence under this run"))
            continue
        values.append(outcome.value)
    if not values:
        raise EstimationError(
            "no usable EM run: " + "; ".join(reason for _, reason in excluded)
        )
    return BoundsResult(
        query=descriptor,
        values=tuple(values),
        lower=min(values),
        upper=max(values),
        runs=tuple(runs),
        excluded=tuple(excluded),
    )


class CredibleInterval(NamedTuple):
    """Result of the credible-interval closed form."""

    probability: float
    raw: float
    clamped: bool


def credible_interval(n: int, width: float, delta: float) -> CredibleInterval:
    """Posterior probability that the exact bounds lie within ``delta/2`` of each
    observed extreme, after ``n`` runs produced an interval of the given width.

    Closed form (ratio of the box and triangle integrals of the posterior
    over the two end-point gaps), with ``eps = delta / (2 * width)``:

        [1 + (1+2*eps)^(2-n) - 2*(1+eps)^(2-n)]
        / [(1 - width^(n-2)) - (n-2)*(1-width)*width^(n-2)]

    Requires ``n >= 3`` and accepts any slack ``delta`` in (0, 1).  The
    nominal statement uses ``delta < width``; the derivation stays exact up
    to ``delta <= 1 - width`` (the error box inside the prior's support),
    which the identifiable-limit configuration relies on.  Beyond that the
    closed form overcounts and usually exceeds 1; values outside [0, 1] are
    clamped and flagged, signalling strained modelling assumptions for that
    geometry.
    """
    if not isinstance(n, (int, np.integer)) or n < 3:
        raise ValueError("n must be an integer >= 3")
    if not (0.0 < width <= 1.0):
        raise ValueError("width must be in (0, 1]")
    if width == 1.0:
        return CredibleInterval(1.0, 1.0, False)
    if not (0.0 < delta < 1.0):
        raise ValueError("delta must be in (0, 1)")
    eps = delta / (2.0 * width)
    numerator = 1.0 + (1.0 + 2.0 * eps) ** (2 - n) - 2.0 * (1.0 + eps) ** (2 - n)
    denominator = (1.0 - width ** (n - 2)) - (n - 2) * (1.0 - width) * width ** (n - 2)
    raw = numerator / denominator
    clamped = raw > 1.0 or raw < 0.0
    return CredibleInterval(min(max(raw, 0.0), 1.0), raw, clamped)


IDENTIFIABLE_WIDTH = 1e-12
IDENTIFIABLE_EPSILON_REL = 1.5


def required_runs(
    target: float,
    epsilon_rel: float = IDENTIFIABLE_EPSILON_REL,
    width: float = IDENTIFIABLE_WIDTH,
    max_runs: int = 10_000,
) -> int:
    """Smallest number of runs whose credible interval reaches ``target``.

    Scans ``n = 3, 4, ...`` using ``delta = 2 * epsilon_rel * width``.  The
    defaults are the documented identifiable-limit configuration: a
    machine-zero surrogate width (all runs returned the same value) and an
    absolute slack of three surrogate widths.
    """
    if not (0.0 < target < 1.0):
        raise ValueError("target must be in (0, 1)")
    delta = 2.0 * epsilon_rel * width
    for n in range(3, max_runs + 1):
        if credible_interval(n, width, delta).probability >= target:
            return n
    raise EstimationError(f"no n <= {max_runs} reaches credibility {target}")
