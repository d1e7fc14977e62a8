"""Exception hierarchy for causalem."""

from __future__ import annotations


class CausalemError(Exception):
    """Base class for all library errors."""


class ModelError(CausalemError, ValueError):
    """A model (or one of its pieces) is structurally unusable."""


class RestrictionError(ModelError):
    """A domain restriction produced a model violating surjectivity."""


class SizeCapError(CausalemError, RuntimeError):
    """An enumeration or factor table would exceed the configured size cap."""


class NotFullySpecifiedError(CausalemError, ValueError):
    """An operation requiring exogenous PMFs was given a partial model."""


class DataError(CausalemError, ValueError):
    """A dataset is empty, malformed, or inconsistent with the model."""


class QueryParseError(CausalemError, ValueError):
    """A query string does not match the query grammar."""


class IncompatibleDataError(CausalemError, RuntimeError):
    """The constraint system admits no exogenous quantification."""


class UnsupportedEvidenceError(CausalemError, RuntimeError):
    """A query conditioned on evidence the model gives zero probability."""


class EstimationError(CausalemError, RuntimeError):
    """All EM runs failed; no usable point was produced."""
