"""One-dimensional conditional laws on a grid.

A conditional ``pi(. | x_{-k})`` is carried by a :class:`DiscretePMF`: node
``t_i`` owns the cell between the midpoints to its neighbours, its mass is
the trapezoid weight ``exp(-U(t_i)) * width_i`` and the law is uniform inside
each cell, so the CDF is piecewise linear over the cell edges.  Sampling,
total variation and maximal coupling all act on these cell masses, which makes
the coupling exactly maximal for the discretised laws.

The ``*_batch`` helpers operate on stacks of weight rows and are what the
chain runners use; the single-draw functions are thin wrappers.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exceptions import DegenerateSliceError, DomainError, GridMismatchError
from .validation import check_coordinate, check_point, check_positive_int, check_random_state

DEFAULT_GRID_SIZE = 2049


@dataclass(frozen=True, eq=False)
class Grid1D:
    """Strictly increasing grid ``t_0 < ... < t_{n-1}`` with node-centred cells."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).ravel()
        if pts.size < 2:
            raise DomainError("a grid needs at least 2 points")
        if not np.all(np.isfinite(pts)) or np.any(np.diff(pts) <= 0):
            raise DomainError("grid points must be finite and strictly increasing")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, low: float, high: float, n: int = DEFAULT_GRID_SIZE) -> "Grid1D":
        n = check_positive_int(n, "grid size", minimum=2)
        return cls(np.linspace(low, high, n))

    @classmethod
    def for_box(cls, box: np.ndarray, k: int, n: int = DEFAULT_GRID_SIZE) -> "Grid1D":
        return cls.uniform(box[k, 0], box[k, 1], n)

    @property
    def n(self) -> int:
        return self.points.size

    @property
    def low(self) -> float:
        return float(self.points[0])

    @property
    def high(self) -> float:
        return float(self.points[-1])

    @cached_property
    def edges(self) -> np.ndarray:
        t = self.points
        e = np.concatenate(([t[0]], 0.5 * (t[:-1] + t[1:]), [t[-1]]))
        e.setflags(write=False)
        return e

    @cached_property
    def widths(self) -> np.ndarray:
        w = np.diff(self.edges)
        w.setflags(write=False)
        return w

    @cached_property
    def log_widths(self) -> np.ndarray:
        lw = np.log(self.widths)
        lw.setflags(write=False)
        return lw

    @cached_property
    def spacing(self) -> float:
        """Largest distance between neighbouring nodes."""
        return float(np.max(np.diff(self.points)))

    def same_as(self, other: "Grid1D") -> bool:
        return self is other or np.array_equal(self.points, other.points)

    def __eq__(self, other):
        return isinstance(other, Grid1D) and self.same_as(other)

    def __hash__(self):
        return hash(self.points.tobytes())


@dataclass(frozen=True, eq=False)
class DiscretePMF:
    """Normalised cell masses on a :class:`Grid1D`."""

    grid: Grid1D
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).ravel()
        if w.size != self.grid.n:
            raise DomainError(f"{w.size} weights for a grid of {self.grid.n} points")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise DomainError("pmf weights must be finite and nonnegative")
        if abs(math.fsum(w) - 1.0) > 1e-12:
            raise DomainError(f"pmf weights sum to {math.fsum(w)!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_unnormalized(cls, grid: Grid1D, weights) -> "DiscretePMF":
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if not np.isfinite(total) or total <= 0:
            raise DegenerateSliceError("weights carry no finite positive mass")
        return cls(grid, w / total)

    @classmethod
    def uniform_cells(cls, grid: Grid1D) -> "DiscretePMF":
        return cls(grid, grid.widths / grid.widths.sum())

    def cdf_at_edges(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.weights)))

    def mean(self) -> float:
        e = self.grid.edges
        return float(np.sum(self.weights * 0.5 * (e[:-1] + e[1:])))

    def to_csv(self, path=None) -> str:
        """Write ``point,weight`` rows; returns the text when ``path`` is None."""
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["point", "weight"])
        for t, w in zip(self.grid.points, self.weights):
            writer.writerow([repr(float(t)), repr(float(w))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        return text


# ---------------------------------------------------------------- slices


def slice_log_weights(target, k: int, X: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Unnormalised log cell masses of the coordinate-``k`` conditional, one row per state."""
    U = target.slice_values(k, X, grid.points)
    return grid.log_widths[None, :] - U


def normalize_log_weights(logw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise log-sum-exp normalisation; returns ``(weights, log_normalizer)``.

    Raises :class:`DegenerateSliceError` for rows containing NaN or lacking
    any finite mass.
    """
    logw = np.atleast_2d(logw)
    if np.isnan(logw).any():
        raise DegenerateSliceError("conditional slice contains NaN log-weights")
    top = np.max(logw, axis=1)
    if not np.all(np.isfinite(top)):
        raise DegenerateSliceError("conditional slice has no finite positive mass")
    W = np.exp(logw - top[:, None])
    total = W.sum(axis=1)
    W /= total[:, None]
    return W, top + np.log(total)


def _row_keys(X: np.ndarray) -> np.ndarray:
    X = np.ascontiguousarray(X)
    return X.view(np.dtype((np.void, X.dtype.itemsize * X.shape[1]))).ravel()


def conditional_weights(target, k: int, X: np.ndarray, grid: Grid1D) -> np.ndarray:
    """Normalised conditional weights for every row of ``X``.

    Rows that agree bitwise off coordinate ``k`` share one evaluation, so
    equal conditioning values always give bitwise equal pmfs.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[0] == 1:
        return normalize_log_weights(slice_log_weights(target, k, X, grid))[0]
    base = X.copy()
    base[:, k] = 0.0
    _, first, inverse = np.unique(_row_keys(base), return_index=True, return_inverse=True)
    W, _ = normalize_log_weights(slice_log_weights(target, k, base[first], grid))
    return W[inverse.ravel()]


def slice_conditional(target, k: int, x, grid: Grid1D) -> tuple[DiscretePMF, float]:
    """Conditional law of coordinate ``k`` (0-based) given the rest of ``x``.

    Returns the pmf and ``log Σ_i exp(-U_i) width_i``, the trapezoid estimate
    of ``log ∫ exp(-U) dt`` along the line.
    """
    k = check_coordinate(k, target.dim)
    point = check_point(x, target.dim, target.box)
    _check_grid_in_box(grid, target.box, k)
    W, log_norm = normalize_log_weights(slice_log_weights(target, k, point[None, :], grid))
    return DiscretePMF(grid, W[0]), float(log_norm[0])


def _check_grid_in_box(grid: Grid1D, box: np.ndarray, k: int):
    if grid.low < box[k, 0] or grid.high > box[k, 1]:
        raise DomainError(
            f"grid [{grid.low}, {grid.high}] leaves the box interval {box[k].tolist()} of coordinate {k}"
        )


# ---------------------------------------------------------------- sampling


def inverse_cdf_batch(W: np.ndarray, grid: Grid1D, u: np.ndarray, on_grid: bool = False) -> np.ndarray:
    """Invert the piecewise-linear CDF of each (possibly unnormalised) row of ``W``.

    Row ``r`` is evaluated at ``u[r]``.  The result is the smallest point at
    which the CDF reaches ``u``; ``u = 0`` maps to the left edge of the first
    cell with positive mass.  With ``on_grid`` the node owning the selected
    cell is returned instead of the within-cell position.
    """
    W = np.atleast_2d(W)
    u = np.asarray(u, dtype=float).ravel()
    n, m = W.shape
    C = np.cumsum(W, axis=1)
    level = u * C[:, -1]
    idx = np.minimum(np.count_nonzero(C < level[:, None], axis=1), m - 1)
    rows = np.arange(n)
    w_i = W[rows, idx]
    empty = w_i <= 0
    if empty.any():
        idx[empty] = np.argmax(W[empty] > 0, axis=1)
        w_i = W[rows, idx]
    if on_grid:
        return grid.points[idx].copy()
    below = C[rows, idx] - w_i
    frac = np.clip((level - below) / w_i, 0.0, 1.0)
    return grid.edges[idx] + frac * grid.widths[idx]


def sample_inverse_cdf(pmf: DiscretePMF, u: float, on_grid: bool = False) -> float:
    u = float(u)
    if not 0.0 <= u <= 1.0:
        raise DomainError(f"u must lie in [0, 1], got {u}")
    return float(inverse_cdf_batch(pmf.weights[None, :], pmf.grid, np.array([u]), on_grid)[0])


def tv_distance_pmf(p: DiscretePMF, q: DiscretePMF) -> float:
    """``½ Σ |p_i - q_i|`` for two pmfs on the same grid."""
    if not p.grid.same_as(q.grid):
        raise GridMismatchError("total variation needs pmfs on an identical grid")
    return float(min(1.0, 0.5 * math.fsum(np.abs(p.weights - q.weights))))


def maximal_coupling_batch(
    P: np.ndarray, Q: np.ndarray, grid: Grid1D, u: np.ndarray, on_grid: bool = False
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise maximal coupling of the laws ``P[r]`` and ``Q[r]``.

    ``u`` has shape ``(n, 3)``.  Row ``r`` meets when ``u[r, 0]`` falls below
    the overlap mass ``Σ min(P, Q)``; a meeting draws one point from the
    normalised overlap using ``u[r, 1]``.  Otherwise ``w`` comes from
    ``(P - Q)+`` with ``u[r, 1]`` and ``w'`` from ``(Q - P)+`` with ``u[r, 2]``.
    Bitwise-identical rows always meet.
    """
    P = np.atleast_2d(P)
    Q = np.atleast_2d(Q)
    u = np.atleast_2d(u)
    n = P.shape[0]
    identical = np.all(P == Q, axis=1)
    overlap = np.minimum(P, Q)
    mass = overlap.sum(axis=1)
    mass[identical] = 1.0
    met = u[:, 0] < mass
    w = np.empty(n)
    w2 = np.empty(n)

    if met.any():
        w[met] = inverse_cdf_batch(overlap[met], grid, u[met, 1], on_grid)
        w2[met] = w[met]
    apart = ~met
    if apart.any():
        diff = P[apart] - Q[apart]
        rp = np.maximum(diff, 0.0)
        rq = np.maximum(-diff, 0.0)
        # Rounding can leave one residual empty for numerically equal rows;
        # those rows are treated as met.
        bad = (rp.sum(axis=1) <= 0) | (rq.sum(axis=1) <= 0)
        idx = np.flatnonzero(apart)
        if bad.any():
            fix = idx[bad]
            met[fix] = True
            w[fix] = inverse_cdf_batch(P[fix], grid, u[fix, 1], on_grid)
            w2[fix] = w[fix]
            idx, rp, rq = idx[~bad], rp[~bad], rq[~bad]
        if idx.size:
            w[idx] = inverse_cdf_batch(rp, grid, u[idx, 1], on_grid)
            w2[idx] = inverse_cdf_batch(rq, grid, u[idx, 2], on_grid)
    return w, w2, met


def maximal_coupling_sample(p: DiscretePMF, q: DiscretePMF, rng=None, on_grid: bool = False):
    """One draw ``(w, w', met)`` from the maximal coupling of ``p`` and ``q``."""
    if not p.grid.same_as(q.grid):
        raise GridMismatchError("maximal coupling needs pmfs on an identical grid")
    rng = check_random_state(rng)
    u = rng.random((1, 3))
    w, w2, met = maximal_coupling_batch(p.weights[None, :], q.weights[None, :], p.grid, u, on_grid)
    return float(w[0]), float(w2[0]), bool(met[0])
