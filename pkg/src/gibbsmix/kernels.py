"""Gibbs kernels, their sequential maximal couplings and chain runners.

Coordinates are 0-based.  A kernel is realised as an *update order*: the
systematic scan updates ``0, 1, ..., d-1`` (the rightmost factor of
``P_d ... P_1`` acts first), the reversibilised sweep ``0 .. d-1 .. 0`` and
the random scans draw indices uniformly.  Batched internals process many
independent replicas at once; each replica follows its own order row.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .conditional import DEFAULT_GRID_SIZE, Grid1D, conditional_weights, inverse_cdf_batch, maximal_coupling_batch
from .exceptions import DomainError
from .validation import check_coordinate, check_point, check_positive_int, check_random_state, check_states

SYSTEMATIC = "systematic"
RANDOM_SCAN = "random_scan"
RANDOM_SCAN_ITERATED = "random_scan_iterated"
REVERSIBILIZED = "reversibilized_systematic"

_ALIASES = {
    "systematic": SYSTEMATIC,
    "ss": SYSTEMATIC,
    "random_scan": RANDOM_SCAN,
    "random": RANDOM_SCAN,
    "rs": RANDOM_SCAN,
    "random_scan_iterated": RANDOM_SCAN_ITERATED,
    "iterated_random_scan": RANDOM_SCAN_ITERATED,
    "rs_iterated": RANDOM_SCAN_ITERATED,
    "reversibilized_systematic": REVERSIBILIZED,
    "reversibilized": REVERSIBILIZED,
    "rev": REVERSIBILIZED,
}

# Replicas are processed in blocks of this many rows to bound memory.
CHUNK_ROWS = 2048


def coupon_block_length(d: int) -> int:
    """``N_d = ceil(4 d ln d)``, the random-scan block length (0 at ``d = 1``)."""
    d = check_positive_int(d, "d")
    return math.ceil(4 * d * math.log(d))


@dataclass(frozen=True)
class KernelKind:
    """Which Gibbs kernel to run; ``N`` is the block length of the iterated random scan."""

    variant: str
    N: int | None = None

    def __post_init__(self):
        if self.variant not in _ALIASES.values():
            raise DomainError(f"unknown kernel variant {self.variant!r}")
        if self.variant == RANDOM_SCAN_ITERATED:
            if self.N is not None:
                check_positive_int(self.N, "N")
        elif self.N is not None:
            raise DomainError(f"N only applies to {RANDOM_SCAN_ITERATED}")

    @classmethod
    def parse(cls, value, N: int | None = None) -> "KernelKind":
        if isinstance(value, KernelKind):
            return value
        if isinstance(value, dict):
            return cls.parse(value.get("variant"), value.get("N"))
        key = str(value).lower().replace("-", "_").replace(" ", "_")
        if key not in _ALIASES:
            raise DomainError(f"unknown kernel variant {value!r}; choose from {sorted(set(_ALIASES.values()))}")
        return cls(_ALIASES[key], N)

    @classmethod
    def systematic(cls):
        return cls(SYSTEMATIC)

    @classmethod
    def random_scan(cls):
        return cls(RANDOM_SCAN)

    @classmethod
    def random_scan_iterated(cls, N: int | None = None):
        return cls(RANDOM_SCAN_ITERATED, N)

    @classmethod
    def reversibilized(cls):
        return cls(REVERSIBILIZED)

    @property
    def is_random(self) -> bool:
        return self.variant in (RANDOM_SCAN, RANDOM_SCAN_ITERATED)

    def block_length(self, d: int) -> int:
        """Number of single-coordinate updates in one application."""
        if self.variant == SYSTEMATIC:
            return d
        if self.variant == REVERSIBILIZED:
            return 2 * d - 1
        if self.variant == RANDOM_SCAN:
            return 1
        n = self.N if self.N is not None else coupon_block_length(d)
        if n < 1:
            raise DomainError(f"iterated random scan needs N >= 1; N_d = {n} at d = {d}")
        return n

    def orders(self, d: int, n_rows: int, index_rng: np.random.Generator | None) -> np.ndarray:
        """Update orders, shape ``(n_rows, block_length)``."""
        L = self.block_length(d)
        if self.variant == SYSTEMATIC:
            return np.broadcast_to(np.arange(d), (n_rows, L))
        if self.variant == REVERSIBILIZED:
            seq = np.concatenate((np.arange(d), np.arange(d - 2, -1, -1)))
            return np.broadcast_to(seq, (n_rows, L))
        return index_rng.integers(0, d, size=(n_rows, L))

    def to_dict(self) -> dict:
        out = {"variant": self.variant}
        if self.variant == RANDOM_SCAN_ITERATED:
            out["N"] = self.N
        return out


def make_grids(target, grid_size: int = DEFAULT_GRID_SIZE) -> tuple[Grid1D, ...]:
    """One conditional grid per coordinate spanning the box; equal intervals share a grid."""
    grid_size = check_positive_int(grid_size, "grid_size", minimum=2)
    cache: dict[tuple[float, float], Grid1D] = {}
    grids = []
    for k in range(target.dim):
        key = (float(target.box[k, 0]), float(target.box[k, 1]))
        if key not in cache:
            cache[key] = Grid1D.uniform(key[0], key[1], grid_size)
        grids.append(cache[key])
    return tuple(grids)


def _resolve_grids(target, grids, grid_size):
    if grids is None:
        return make_grids(target, grid_size)
    if isinstance(grids, Grid1D):
        grids = (grids,) * target.dim
    grids = tuple(grids)
    if len(grids) != target.dim:
        raise DomainError(f"need {target.dim} grids, got {len(grids)}")
    for k, g in enumerate(grids):
        if g.low < target.box[k, 0] or g.high > target.box[k, 1]:
            raise DomainError(f"grid for coordinate {k} leaves the target box")
    return grids


def _split_streams(rng: np.random.Generator):
    """Independent streams for update indices and for the conditional draws."""
    index_rng, draw_rng = rng.spawn(2)
    return index_rng, draw_rng


# ------------------------------------------------------------ batched cores


def sweep_batch(target, X, orders, draw_rng, grids, on_grid=False) -> np.ndarray:
    """Apply the update orders to each row of ``X`` in place and return it."""
    n, L = orders.shape
    for j in range(L):
        col = orders[:, j]
        u = draw_rng.random(n)
        for k in np.unique(col):
            rows = np.flatnonzero(col == k) if n > 1 else np.array([0])
            W = conditional_weights(target, k, X[rows], grids[k])
            X[rows, k] = inverse_cdf_batch(W, grids[k], u[rows], on_grid)
    return X


def coupled_sweep_batch(target, X, Y, orders, draw_rng, grids, on_grid=False, skip_coalesced=False):
    """Sequential maximal coupling of two batches of chains along shared orders.

    With ``skip_coalesced`` rows whose chains already agree are left untouched;
    the random numbers consumed do not depend on it, and such rows would stay
    coalesced anyway, so the coalescence flags are unaffected.
    """
    n, L = orders.shape
    active = np.ones(n, dtype=bool)
    for j in range(L):
        col = orders[:, j]
        u = draw_rng.random((n, 3))
        if skip_coalesced:
            active = ~np.all(X == Y, axis=1)
        for k in np.unique(col):
            rows = np.flatnonzero((col == k) & active)
            if rows.size == 0:
                continue
            W = conditional_weights(target, k, np.concatenate((X[rows], Y[rows])), grids[k])
            w, w2, _ = maximal_coupling_batch(W[: rows.size], W[rows.size:], grids[k], u[rows], on_grid)
            X[rows, k] = w
            Y[rows, k] = w2
    return X, Y


def covers_all(orders: np.ndarray, d: int) -> np.ndarray:
    """Per row, whether every coordinate ``0..d-1`` occurs in the order."""
    hit = np.zeros((orders.shape[0], d), dtype=bool)
    np.put_along_axis(hit, orders, True, axis=1)
    return hit.all(axis=1)


# ---------------------------------------------------------- single chains


class CoupledPair(NamedTuple):
    x: np.ndarray
    y: np.ndarray
    coalesced: bool

    @classmethod
    def of(cls, x, y) -> "CoupledPair":
        x = np.array(x, dtype=float)
        y = np.array(y, dtype=float)
        return cls(x, y, bool(np.array_equal(x, y)))


def step_coordinate(target, k: int, state, rng=None, *, grids=None, grid_size=DEFAULT_GRID_SIZE, on_grid=False):
    """Resample coordinate ``k`` from its conditional; other coordinates are copied."""
    k = check_coordinate(k, target.dim)
    x = check_point(state, target.dim, target.box).copy()
    grids = _resolve_grids(target, grids, grid_size)
    rng = check_random_state(rng)
    W = conditional_weights(target, k, x[None, :], grids[k])
    x[k] = inverse_cdf_batch(W, grids[k], rng.random(1), on_grid)[0]
    return x


def step_kernel(target, kind, state, rng=None, *, grids=None, grid_size=DEFAULT_GRID_SIZE, on_grid=False, trace=None):
    """One application of the kernel ``kind``.

    If ``trace`` is a list, the coordinates updated are appended to it.
    """
    kind = KernelKind.parse(kind)
    x = check_point(state, target.dim, target.box).copy()
    grids = _resolve_grids(target, grids, grid_size)
    index_rng, draw_rng = _split_streams(check_random_state(rng))
    orders = kind.orders(target.dim, 1, index_rng)
    if trace is not None:
        trace.extend(int(k) for k in orders[0])
    return sweep_batch(target, x[None, :], np.ascontiguousarray(orders), draw_rng, grids, on_grid)[0]


def _coupled(target, pair, orders, rng, grids, on_grid):
    X = check_point(pair.x, target.dim, target.box).copy()[None, :]
    Y = check_point(pair.y, target.dim, target.box).copy()[None, :]
    coupled_sweep_batch(target, X, Y, np.ascontiguousarray(orders), rng, grids, on_grid)
    return CoupledPair.of(X[0], Y[0])


def coupled_step_systematic(target, pair: CoupledPair, rng=None, *, grids=None, grid_size=DEFAULT_GRID_SIZE, on_grid=False):
    """Coordinates ``0..d-1`` in turn, each through a maximal coupling of the two conditionals."""
    grids = _resolve_grids(target, grids, grid_size)
    orders = KernelKind.systematic().orders(target.dim, 1, None)
    return _coupled(target, pair, orders, check_random_state(rng), grids, on_grid)


def coupled_step_random_scan(target, pair: CoupledPair, n_steps: int, rng=None, *, grids=None, grid_size=DEFAULT_GRID_SIZE, on_grid=False):
    """``n_steps`` coupled random-scan updates sharing one index sequence.

    Returns ``(pair, covered)`` where ``covered`` says whether every
    coordinate was selected at least once.
    """
    n_steps = check_positive_int(n_steps, "n_steps")
    grids = _resolve_grids(target, grids, grid_size)
    index_rng, draw_rng = _split_streams(check_random_state(rng))
    orders = KernelKind.random_scan_iterated(n_steps).orders(target.dim, 1, index_rng)
    out = _coupled(target, pair, orders, draw_rng, grids, on_grid)
    return out, bool(covers_all(orders, target.dim)[0])


class MeetingEstimate(NamedTuple):
    estimate: float
    stderr: float


def coupled_block_batch(target, kind, x, y, n_reps, rng=None, *, grids=None, grid_size=DEFAULT_GRID_SIZE, on_grid=False):
    """Run ``n_reps`` independent coupled applications of ``kind`` from ``(x, y)``.

    Returns boolean arrays ``(coalesced, covered)``.
    """
    kind = KernelKind.parse(kind)
    n_reps = check_positive_int(n_reps, "n_reps")
    d = target.dim
    x = check_point(x, d, target.box)
    y = check_point(y, d, target.box)
    grids = _resolve_grids(target, grids, grid_size)
    index_rng, draw_rng = _split_streams(check_random_state(rng))
    coalesced = np.empty(n_reps, dtype=bool)
    covered = np.empty(n_reps, dtype=bool)
    for start in range(0, n_reps, CHUNK_ROWS):
        n = min(CHUNK_ROWS, n_reps - start)
        orders = np.ascontiguousarray(kind.orders(d, n, index_rng))
        X = np.tile(x, (n, 1))
        Y = np.tile(y, (n, 1))
        coupled_sweep_batch(target, X, Y, orders, draw_rng, grids, on_grid, skip_coalesced=True)
        coalesced[start:start + n] = np.all(X == Y, axis=1)
        covered[start:start + n] = covers_all(orders, d)
    return coalesced, covered


def estimate_meeting_probability(target, kind, x, y, n_reps, rng=None, **kwargs) -> MeetingEstimate:
    """Monte Carlo frequency with which one coupled application of ``kind`` coalesces.

    By the coupling inequality ``1 - estimate`` estimates an upper bound on
    ``||P(x, .) - P(y, .)||_tv``.
    """
    coalesced, _ = coupled_block_batch(target, kind, x, y, n_reps, rng, **kwargs)
    p = float(coalesced.mean())
    return MeetingEstimate(p, math.sqrt(p * (1.0 - p) / coalesced.size))


# ------------------------------------------------------------ trajectories


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Recorded states of a chain; ``y``/``coalesced`` are set for coupled runs."""

    steps: np.ndarray
    x: np.ndarray
    y: np.ndarray | None = None
    coalesced: np.ndarray | None = None

    @property
    def states(self) -> np.ndarray:
        return self.x

    def __len__(self):
        return self.steps.size

    def header(self) -> list[str]:
        d = self.x.shape[1]
        cols = ["step"] + [f"x_{i + 1}" for i in range(d)]
        if self.y is not None:
            cols += [f"y_{i + 1}" for i in range(d)] + ["coalesced"]
        return cols

    def rows(self):
        for i, step in enumerate(self.steps):
            row = [str(int(step))] + [_fmt(v) for v in self.x[i]]
            if self.y is not None:
                row += [_fmt(v) for v in self.y[i]] + [str(bool(self.coalesced[i])).lower()]
            yield row

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.header())
            writer.writerows(self.rows())


def run_chain(target, kind, x0, n_steps: int, thin: int = 1, rng=None, *, grids=None, grid_size=DEFAULT_GRID_SIZE, on_grid=False) -> TrajectoryRecord:
    """Run one chain for ``n_steps`` kernel applications, keeping every ``thin``-th state."""
    kind = KernelKind.parse(kind)
    n_steps = check_positive_int(n_steps, "n_steps", minimum=0)
    thin = check_positive_int(thin, "thin")
    x = check_point(x0, target.dim, target.box).copy()
    grids = _resolve_grids(target, grids, grid_size)
    index_rng, draw_rng = _split_streams(check_random_state(rng))
    keep = np.arange(0, n_steps + 1, thin)
    out = np.empty((keep.size, target.dim))
    out[0] = x
    X = x[None, :]
    slot = 1
    for step in range(1, n_steps + 1):
        orders = kind.orders(target.dim, 1, index_rng)
        sweep_batch(target, X, orders, draw_rng, grids, on_grid)
        if step % thin == 0:
            out[slot] = X[0]
            slot += 1
    return TrajectoryRecord(keep, out)


def run_coupled_chain(target, kind, x0, y0, n_steps: int, thin: int = 1, rng=None, *, grids=None, grid_size=DEFAULT_GRID_SIZE, on_grid=False) -> TrajectoryRecord:
    """Run a coupled pair, sharing update orders and maximally coupling each update."""
    kind = KernelKind.parse(kind)
    n_steps = check_positive_int(n_steps, "n_steps", minimum=0)
    thin = check_positive_int(thin, "thin")
    X = check_point(x0, target.dim, target.box).copy()[None, :]
    Y = check_point(y0, target.dim, target.box).copy()[None, :]
    grids = _resolve_grids(target, grids, grid_size)
    index_rng, draw_rng = _split_streams(check_random_state(rng))
    keep = np.arange(0, n_steps + 1, thin)
    xs = np.empty((keep.size, target.dim))
    ys = np.empty_like(xs)
    xs[0], ys[0] = X[0], Y[0]
    slot = 1
    for step in range(1, n_steps + 1):
        orders = np.ascontiguousarray(kind.orders(target.dim, 1, index_rng))
        coupled_sweep_batch(target, X, Y, orders, draw_rng, grids, on_grid)
        if step % thin == 0:
            xs[slot], ys[slot] = X[0], Y[0]
            slot += 1
    return TrajectoryRecord(keep, xs, ys, np.all(xs == ys, axis=1))


def sample_batch(target, kind, X0, n_steps: int, rng=None, *, grids=None, grid_size=DEFAULT_GRID_SIZE, on_grid=False) -> np.ndarray:
    """Advance many independent chains ``n_steps`` kernel applications; returns final states."""
    kind = KernelKind.parse(kind)
    X = check_states(X0, target.dim, target.box).copy()
    grids = _resolve_grids(target, grids, grid_size)
    index_rng, draw_rng = _split_streams(check_random_state(rng))
    for _ in range(check_positive_int(n_steps, "n_steps", minimum=0)):
        orders = np.ascontiguousarray(kind.orders(target.dim, X.shape[0], index_rng))
        sweep_batch(target, X, orders, draw_rng, grids, on_grid)
    return X
