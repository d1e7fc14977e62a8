"""scikit-learn style front end for the EM bounds machinery.

``CounterfactualBounds`` is fit on endogenous observations and then
predicts interval bounds for counterfactual queries, so the estimator
composes with the usual ecosystem tooling (``get_params``, ``clone``,
pipelines that pass DataFrames or arrays).
"""

from __future__ import annotations

from collections.abc import Mapping

import numpy as np
from sklearn.base import BaseEstimator

from . import em
from .errors import DataError, ModelError
from .model import Dataset, Scm, validate_scm
from .queries import QueryDescriptor, evaluate, parse_query


def as_dataset(X, model: Scm) -> Dataset:
    """Coerce observations into a :class:`Dataset` for the model's endogenous set."""
    if isinstance(X, Dataset):
        return X
    if isinstance(X, Mapping):
        columns = [v.name for v in model.endogenous]
        return Dataset(columns, X)
    if hasattr(X, "columns") and hasattr(X, "to_numpy"):  # pandas DataFrame
        columns = [str(c) for c in X.columns]
        return Dataset.from_rows(columns, np.asarray(X.to_numpy(), dtype=int))
    arr = np.asarray(X, dtype=int)
    if arr.ndim != 2:
        raise DataError("expected a 2-D array of observations")
    columns = [v.name for v in model.endogenous]
    if arr.shape[1] != len(columns):
        raise DataError(
            f"expected {len(columns)} columns ({columns}), got {arr.shape[1]}"
        )
    return Dataset.from_rows(columns, arr)


class CounterfactualBounds(BaseEstimator):
    """Bounds on counterfactual probabilities for a partially specified model.

    Parameters
    ----------
    model:
        The structural model (exogenous PMFs absent or ignored).
    n_runs:
        Number of EM restarts; more runs widen (never shrink) the interval.
    epsilon, max_iter:
        EM convergence threshold (summed KL divergence) and iteration cap.
    random_state:
        Master seed for the per-run seeds.
    n_jobs:
        Worker processes for the runs.
    """

    def __init__(
        self,
        model: Scm | None = None,
        n_runs: int = 20,
        epsilon: float | None = None,
        max_iter: int | None = None,
        random_state: int | None = None,
        n_jobs: int = 1,
    ):
        self.model = model
        self.n_runs = n_runs
        self.epsilon = epsilon
        self.max_iter = max_iter
        self.random_state = random_state
        self.n_jobs = n_jobs

    def fit(self, X, y=None):
        """Run the EM restarts on the observations."""
        if self.model is None:
            raise ModelError("a model is required before fitting")
        validate_scm(self.model).raise_if_invalid()
        data = as_dataset(X, self.model)
        data.check_against(self.model)
        self.data_ = data
        self.runs_ = tuple(
            em.run_many(
                self.model,
                data,
                n_runs=self.n_runs,
                seed=self.random_state,
                epsilon=self.epsilon,
                max_iter=self.max_iter,
                jobs=self.n_jobs,
            )
        )
        self.converged_runs_ = tuple(r for r in self.runs_ if r.converged)
        if not self.converged_runs_:
            raise DataError("no EM run converged; raise max_iter or check the model")
        self.log_likelihood_ = max(r.log_likelihood for r in self.converged_runs_)
        return self

    def _check_fitted(self) -> None:
        if not hasattr(self, "runs_"):
            raise ModelError("estimator is not fitted")

    def interval(self, query: str | QueryDescriptor) -> tuple[float, float]:
        """[min, max] of the query value across converged runs."""
        self._check_fitted()
        descriptor = (
            parse_query(query, self.model) if isinstance(query, str) else query
        )
        values = []
        for run in self.converged_runs_:
            outcome = evaluate(self.model.with_exogenous_pmfs(run.pmfs), descriptor)
            if outcome.supported:
                values.append(outcome.value)
        if not values:
            raise DataError("the query evidence has zero probability in every run")
        return (min(values), max(values))

    def predict(self, queries) -> np.ndarray:
        """Interval bounds, shape (2,) for one query or (k, 2) for a sequence."""
        self._check_fitted()
        if isinstance(queries, (str, QueryDescriptor)):
            return np.array(self.interval(queries))
        return np.array([self.interval(q) for q in queries])

    def score(self, X, y=None) -> float:
        """Mean per-observation marginal log-likelihood under the best run."""
        from .likelihood import marginal_ll

        self._check_fitted()
        data = as_dataset(X, self.model)
        best = max(self.converged_runs_, key=lambda r: r.log_likelihood)
        fitted = self.model.with_exogenous_pmfs(best.pmfs)
        ll = marginal_ll(fitted, data)
        if not ll.is_finite:
            return -np.inf
        return ll.value / data.n
