"""Input validation helpers used across the estimators and functional API."""

from __future__ import annotations

import numbers

import numpy as np

from .exceptions import DomainError


def check_random_state(seed) -> np.random.Generator:
    """Turn ``seed`` into a counter-based :class:`numpy.random.Generator`.

    ``None`` gives fresh OS entropy, an integer or ``SeedSequence`` seeds a
    Philox stream, and an existing Generator is returned unchanged.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None or isinstance(seed, (numbers.Integral, np.random.SeedSequence)):
        return np.random.Generator(np.random.Philox(seed))
    raise TypeError(f"cannot build a random generator from {seed!r}")


def check_positive_int(value, name: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise DomainError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise DomainError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_real(value, name: str, *, low=None, high=None, low_open=False, high_open=False) -> float:
    """Validate a finite real scalar against optional interval bounds."""
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise DomainError(f"{name} must be a real number, got {value!r}") from None
    if not np.isfinite(v):
        raise DomainError(f"{name} must be finite, got {v}")
    if low is not None and (v < low or (low_open and v == low)):
        raise DomainError(f"{name}={v} violates lower bound {'>' if low_open else '>='} {low}")
    if high is not None and (v > high or (high_open and v == high)):
        raise DomainError(f"{name}={v} violates upper bound {'<' if high_open else '<='} {high}")
    return v


def check_point(x, dim: int, box: np.ndarray | None = None) -> np.ndarray:
    """Return ``x`` as a float vector of length ``dim``, optionally inside ``box``.

    Points outside the box raise :class:`DomainError`; they are never clamped.
    """
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0 and dim == 1:
        arr = arr.reshape(1)
    if arr.shape != (dim,):
        raise DomainError(f"expected a point of shape ({dim},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("point has non-finite coordinates")
    if box is not None and np.any((arr < box[:, 0]) | (arr > box[:, 1])):
        raise DomainError(f"point {arr.tolist()} lies outside the target box")
    return arr


def check_states(X, dim: int, box: np.ndarray | None = None) -> np.ndarray:
    """Validate a batch of states, shape ``(n, dim)``; a single vector is promoted."""
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise DomainError(f"expected states of shape (n, {dim}), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("states contain non-finite coordinates")
    if box is not None and np.any((arr < box[:, 0]) | (arr > box[:, 1])):
        raise DomainError("some states lie outside the target box")
    return arr


def check_coordinate(k, dim: int) -> int:
    if isinstance(k, bool) or not isinstance(k, numbers.Integral) or not 0 <= k < dim:
        raise DomainError(f"coordinate index must be an integer in [0, {dim}), got {k!r}")
    return int(k)
