"""Size caps guarding enumerations and factor tables.

Every exhaustive loop over a joint state space (joint-surjectivity checks,
indicator tables, variable-elimination intermediates, vertex enumeration)
is bounded by a cap so that an oversized model fails fast instead of
exhausting memory.  The default can be overridden per call or globally
through the ``EMCC_SIZE_CAP`` environment variable.
"""

from __future__ import annotations

import os

DEFAULT_SIZE_CAP = 2**24

_ENV_VAR = "EMCC_SIZE_CAP"


def resolve_size_cap(explicit: int | None = None) -> int:
    """Return the effective size cap: explicit value, else env var, else default."""
    if explicit is not None:
        if explicit < 1:
            raise ValueError("size cap must be a positive integer")
        return int(explicit)
    raw = os.environ.get(_ENV_VAR)
    if raw is not None:
        try:
            value = int(raw)
        except ValueError as exc:
            raise ValueError(f"{_ENV_VAR} must be an integer, got {raw!r}") from exc
        if value < 1:
            raise ValueError(f"{_ENV_VAR} must be positive, got {value}")
        return value
    return DEFAULT_SIZE_CAP
