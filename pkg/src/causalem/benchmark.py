"""Random chain benchmarks: generator, forward sampler, and RMSE.

Instances are Boolean endogenous chains.  The Markovian class gives every
node its own conservative exogenous parent; the other classes confound
random node pairs at chain distance at most two, with one shared exogenous
parent per pair (quasi-Markovian) or two exogenous parents per confounded
component (non-quasi-Markovian).  A fully specified truth (Dirichlet-drawn
exogenous PMFs) is returned next to its partially specified observable.
"""

from __future__ import annotations

import math
import time
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from . import em, oracle
from .errors import DataError, ModelError
from .model import (
    Dataset,
    Scm,
    StructuralEquation,
    Variable,
    conservative_equation,
    endo,
    exo,
    iter_configurations,
)

MARKOVIAN = "markovian"
QUASI_MARKOVIAN = "quasi-markovian"
NON_QUASI_MARKOVIAN = "non-quasi-markovian"

_CLASS_ALIASES = {
    MARKOVIAN: MARKOVIAN,
    QUASI_MARKOVIAN: QUASI_MARKOVIAN,
    NON_QUASI_MARKOVIAN: NON_QUASI_MARKOVIAN,
    "general": NON_QUASI_MARKOVIAN,
}

CLASS_CHOICES = tuple(sorted(_CLASS_ALIASES))


@dataclass(frozen=True)
class BenchmarkSpec:
    """Shape of one benchmark instance.

    ``truth_concentration`` is the symmetric Dirichlet parameter for the
    truth's exogenous PMFs.  Values below 1 concentrate the mechanisms and
    keep the exact query intervals at the narrow scale the published curves
    show; 1 recovers uniform simplex draws.
    """

    m: int
    klass: str
    seed: int
    sample_size: int = 1000
    truth_concentration: float = 0.1

    def __post_init__(self) -> None:
        if self.m < 2:
            raise ModelError("chains need m >= 2 nodes")
        if self.sample_size < 1:
            raise ModelError("sample_size must be >= 1")
        if self.truth_concentration <= 0:
            raise ModelError("truth_concentration must be positive")
        if self.klass not in _CLASS_ALIASES:
            raise ModelError(
                f"unknown class {self.klass!r}; expected one of {sorted(_CLASS_ALIASES)}"
            )
        object.__setattr__(self, "klass", _CLASS_ALIASES[self.klass])


@dataclass(frozen=True)
class BenchmarkInstance:
    """Generated truth/observable pair with the realised confounding layout."""

    spec: BenchmarkSpec
    truth: Scm
    observable: Scm
    confounded_groups: tuple[tuple[str, ...], ...]

    def __iter__(self):
        return iter((self.truth, self.observable))


def _function_digit(func_index: int, config_index: int, child_card: int = 2) -> int:
    return (func_index // child_card**config_index) % child_card


def _n_functions(n_endo_parents: int, child_card: int = 2) -> int:
    return child_card ** (child_card**n_endo_parents)


def _pair_nodes(m: int, rng: np.random.Generator) -> tuple[list[tuple[int, int]], list[int]]:
    """Random disjoint pairs of chain positions at distance <= 2."""
    order = list(rng.permutation(m))
    unpaired = set(range(m))
    pairs: list[tuple[int, int]] = []
    for i in order:
        if i not in unpaired:
            continue
        candidates = [j for j in unpaired if j != i and abs(j - i) <= 2]
        if not candidates:
            continue
        j = int(candidates[rng.integers(len(candidates))])
        unpaired.discard(i)
        unpaired.discard(j)
        pairs.append((min(i, j), max(i, j)))
    if not pairs:
        # Degenerate shuffles can pair nothing; force one confounded pair.
        pairs.append((0, 1))
        unpaired.discard(0)
        unpaired.discard(1)
    return sorted(pairs), sorted(unpaired)


def generate_benchmark(spec: BenchmarkSpec) -> BenchmarkInstance:
    """Build one chain instance; identical specs give identical models."""
    rng = np.random.default_rng(spec.seed)
    m = spec.m
    node = [f"X{i + 1}" for i in range(m)]
    endo_vars = [endo(n) for n in node]
    chain_parents: list[tuple[str, ...]] = [
        () if i == 0 else (node[i - 1],) for i in range(m)
    ]

    exo_vars: list[Variable] = []
    equations: list[StructuralEquation] = []
    groups: list[tuple[str, ...]] = []

    def add_conservative(i: int) -> None:
        exo_name = f"U{i + 1}"
        card, eq = conservative_equation(
            endo_vars[i], [endo_vars[j] for j in range(i - 1, i) if j >= 0], exo_name
        )
        exo_vars.append(exo(exo_name, card))
        equations.append(eq)
        groups.append((node[i],))

    if spec.klass == MARKOVIAN:
        for i in range(m):
            add_conservative(i)
    else:
        pairs, singles = _pair_nodes(m, rng)
        for i in singles:
            add_conservative(i)
        for i, j in pairs:
            k_i = _n_functions(len(chain_parents[i]))
            k_j = _n_functions(len(chain_parents[j]))
            if spec.klass == QUASI_MARKOVIAN:
                shared = f"U{i + 1}_{j + 1}"
                exo_vars.append(exo(shared, k_i * k_j))
                equations.append(
                    _pair_equation(node[i], chain_parents[i], (shared,), k_i * k_j,
                                   lambda cfg, us, ki=k_i: us[0] % ki)
                )
                equations.append(
                    _pair_equation(node[j], chain_parents[j], (shared,), k_i * k_j,
                                   lambda cfg, us, ki=k_i: us[0] // ki)
                )
            else:
                first = f"U{i + 1}_{j + 1}a"
                second = f"U{i + 1}_{j + 1}b"
                exo_vars.append(exo(first, k_i))
                exo_vars.append(exo(second, k_j))
                equations.append(
                    _pair_equation(node[i], chain_parents[i], (first, second), (k_i, k_j),
                                   lambda cfg, us, ki=k_i: (us[0] + us[1]) % ki)
                )
                equations.append(
                    _pair_equation(node[j], chain_parents[j], (second,), (k_j,),
                                   lambda cfg, us: us[0])
                )
            groups.append((node[i], node[j]))

    observable = Scm(exo_vars + endo_vars, equations)
    pmfs = {
        v.name: _safe_dirichlet(rng, v.cardinality, spec.truth_concentration)
        for v in observable.exogenous
    }
    truth = observable.with_exogenous_pmfs(pmfs)
    return BenchmarkInstance(
        spec=spec,
        truth=truth,
        observable=observable,
        confounded_groups=tuple(groups),
    )


def _safe_dirichlet(rng: np.random.Generator, card: int, alpha: float) -> tuple[float, ...]:
    # Tiny concentrations can underflow every gamma draw; retry until sane.
    for _ in range(100):
        draw = rng.dirichlet(np.full(card, alpha))
        if np.isfinite(draw).all() and abs(draw.sum() - 1.0) <= 1e-12 and (draw >= 0).all():
            return tuple(float(x) for x in draw)
    raise ModelError(f"could not draw a valid Dirichlet({alpha}) PMF")


def _pair_equation(child, endo_parents, exo_names, exo_cards, selector):
    """Equation whose function index is ``selector(config, exo_states)``."""
    if isinstance(exo_cards, int):
        exo_cards = (exo_cards,)
    parent_names = tuple(endo_parents) + tuple(exo_names)
    endo_cards = [2] * len(endo_parents)
    table = []
    for cfg_idx, _ in enumerate(iter_configurations(endo_cards)):
        for us in iter_configurations(exo_cards):
            table.append(_function_digit(selector(cfg_idx, us), cfg_idx))
    return StructuralEquation(child, parent_names, tuple(table))


def sample_dataset(truth: Scm, n: int, seed: int | None = None) -> Dataset:
    """N i.i.d. forward samples; exogenous columns are discarded."""
    if not truth.is_fully_specified:
        raise ModelError("sampling requires a fully specified model")
    if n < 1:
        raise DataError("sample size must be >= 1")
    rng = np.random.default_rng(seed)
    columns: dict[str, np.ndarray] = {}
    for var in truth.exogenous:
        columns[var.name] = rng.choice(var.cardinality, size=n, p=truth.pmf(var.name))
    for name in truth.topological_order:
        var = truth.variable(name)
        if var.is_exogenous:
            continue
        eq = truth.equations[name]
        cards = truth.parent_cards(name)
        flat = np.zeros(n, dtype=np.int64)
        for p, card in zip(eq.parents, cards):
            flat = flat * card + columns[p]
        columns[name] = eq.table_array[flat]
    endo_names = [v.name for v in truth.endogenous]
    rows = np.stack([columns[c] for c in endo_names], axis=1)
    return Dataset.from_rows(endo_names, rows)


def rmse(approx: Sequence[float], exact: Sequence[float]) -> float:
    """Root mean square of the two end-point errors between bound intervals."""
    a, b = approx
    a_star, b_star = exact
    if a > b or a_star > b_star:
        raise ValueError("intervals must be ordered (lower, upper)")
    return math.sqrt(((a_star - a) ** 2 + (b_star - b) ** 2) / 2.0)


@dataclass(frozen=True)
class BenchmarkRow:
    instance: int
    klass: str
    m: int
    runs: int
    lower: float
    upper: float
    exact_lower: float
    exact_upper: float
    rmse: float
    baseline: str
    wall_time_s: float

    def as_csv_row(self) -> list:
        return [
            self.instance,
            self.klass,
            self.m,
            self.runs,
            self.lower,
            self.upper,
            self.exact_lower,
            self.exact_upper,
            self.rmse,
            self.baseline,
            self.wall_time_s,
        ]


CSV_HEADER = [
    "instance", "class", "m", "runs", "a", "b", "a_star", "b_star",
    "rmse", "baseline", "wall_time_s",
]


BENCH_MAX_ITER = 100_000


def benchmark_instance_rows(
    instance_id: int,
    spec: BenchmarkSpec,
    n_runs: int,
    reference_runs: int = 1000,
    epsilon: float | None = None,
    max_iter: int | None = BENCH_MAX_ITER,
    jobs: int = 1,
) -> list[BenchmarkRow]:
    """RMSE-versus-runs curve for one generated instance.

    The query is necessity-and-sufficiency of the first chain node for the
    last.  Markovian and quasi-Markovian instances are scored against exact
    vertex-enumeration bounds; the general class against a large-run EM
    reference whose runs are a superset of the evaluated ones, so the curve
    is non-increasing by construction.
    """
    started = time.perf_counter()
    instance = generate_benchmark(spec)
    data = sample_dataset(instance.truth, spec.sample_size, seed=spec.seed + 1)
    query = f"pns(X1,X{spec.m})"

    if spec.klass == NON_QUASI_MARKOVIAN:
        total = max(reference_runs, n_runs)
        result = em.bounds(
            instance.observable, data, query, n_runs=total,
            seed=spec.seed + 2, epsilon=epsilon, max_iter=max_iter, jobs=jobs,
            init_concentration=em.INIT_CONCENTRATIONS,
        )
        values = list(result.values)
        reference = (min(values), max(values))
        baseline = "em-reference"
    else:
        exact = oracle.exact_bounds(instance.observable, data, query)
        reference = exact.interval
        result = em.bounds(
            instance.observable, data, query, n_runs=n_runs,
            seed=spec.seed + 2, epsilon=epsilon, max_iter=max_iter, jobs=jobs,
            init_concentration=em.INIT_CONCENTRATIONS,
        )
        values = list(result.values)
        baseline = "exact"
    elapsed = time.perf_counter() - started

    rows = []
    for n in range(1, n_runs + 1):
        prefix = values[:n]
        if not prefix:
            continue
        interval = (min(prefix), max(prefix))
        rows.append(
            BenchmarkRow(
                instance=instance_id,
                klass=spec.klass,
                m=spec.m,
                runs=n,
                lower=interval[0],
                upper=interval[1],
                exact_lower=reference[0],
                exact_upper=reference[1],
                rmse=rmse(interval, reference),
                baseline=baseline,
                wall_time_s=elapsed,
            )
        )
    return rows
