"""Exact finite-state oracles for gridded targets in one or two dimensions.

A gridded target places mass ``exp(-U(node)) * cell area`` on each node of a
product grid; its Gibbs kernels are then explicit stochastic matrices whose
conductance, spectral gap and total-variation decay can be computed exactly
and compared with the closed-form bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.spatial import cKDTree

from .bounds import IsoperimetricProfile
from .conditional import Grid1D, normalize_log_weights, slice_log_weights
from .exceptions import CapExceededError, DegenerateSliceError, DomainError
from .kernels import coupon_block_length
from .validation import check_positive_int, check_random_state

DEFAULT_STATE_CAP = 4096
EXHAUSTIVE_CAP = 22
PI_FLOOR = 1e-300


@dataclass(frozen=True, eq=False)
class DiscreteTarget:
    """Normalised weights ``pi`` over a product grid, flattened in C order."""

    grids: tuple
    pi: np.ndarray
    floored: bool = False
    name: str = "discrete"

    def __post_init__(self):
        if len(self.grids) not in (1, 2):
            raise DomainError("discrete targets support dimension 1 or 2")
        pi = np.array(self.pi, dtype=float).ravel()
        if pi.size != int(np.prod(self.shape)):
            raise DomainError("pi does not match the grid shape")
        if np.any(pi <= 0) or abs(math.fsum(pi) - 1.0) > 1e-12:
            raise DomainError("pi must be strictly positive and sum to 1")
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)

    @property
    def dim(self) -> int:
        return len(self.grids)

    @property
    def shape(self) -> tuple:
        return tuple(g.n for g in self.grids)

    @property
    def n_states(self) -> int:
        return self.pi.size

    @property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(n_states, dim)``."""
        mesh = np.meshgrid(*[g.points for g in self.grids], indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    @property
    def cell_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper cell corners, each ``(n_states, dim)``."""
        lo = np.meshgrid(*[g.edges[:-1] for g in self.grids], indexing="ij")
        hi = np.meshgrid(*[g.edges[1:] for g in self.grids], indexing="ij")
        return (np.stack([m.ravel() for m in lo], axis=1), np.stack([m.ravel() for m in hi], axis=1))

    def pi_grid(self) -> np.ndarray:
        return self.pi.reshape(self.shape)


def discretize_target(target, resolution, box=None, name=None) -> DiscreteTarget:
    """Grid a target of dimension 1 or 2; ``box`` overrides the target's box."""
    d = target.dim
    if d > 2:
        raise DomainError(f"discretisation supports d <= 2, got d = {d}")
    res = (resolution,) * d if np.isscalar(resolution) else tuple(resolution)
    if len(res) != d:
        raise DomainError(f"need {d} resolutions, got {len(res)}")
    box = target.box if box is None else np.asarray(box, dtype=float).reshape(d, 2)
    grids = tuple(Grid1D.uniform(box[k, 0], box[k, 1], check_positive_int(res[k], "resolution", 2)) for k in range(d))
    mesh = np.meshgrid(*[g.points for g in grids], indexing="ij")
    X = np.stack([m.ravel() for m in mesh], axis=1)
    log_area = np.zeros(X.shape[0])
    for k, g in enumerate(grids):
        shape = [1] * d
        shape[k] = g.n
        log_area = log_area + np.broadcast_to(g.log_widths.reshape(shape), tuple(gg.n for gg in grids)).ravel()
    logw = log_area - np.asarray(target.potential(X), dtype=float)
    W, _ = normalize_log_weights(logw[None, :])
    pi = W[0]
    floored = bool(np.any(pi < PI_FLOOR))
    if floored:
        pi = np.maximum(pi, PI_FLOOR)
        pi /= pi.sum()
    return DiscreteTarget(grids, pi, floored, name or target.name)


def discrete_from_weights(weights, grids=None, name="discrete") -> DiscreteTarget:
    """Discrete target from explicit (unnormalised) weights on a 1- or 2-D array."""
    w = np.asarray(weights, dtype=float)
    if grids is None:
        grids = tuple(Grid1D(np.arange(n, dtype=float)) for n in w.shape)
    return DiscreteTarget(tuple(grids), w.ravel() / w.sum(), False, name)


# ---------------------------------------------------------------- matrices


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    """Row-stochastic matrix with its stationary law and a reversibility flag."""

    rows: np.ndarray
    pi: np.ndarray
    reversible_wrt_pi: bool = False
    name: str = "P"

    def __post_init__(self):
        P = np.asarray(self.rows, dtype=float)
        pi = np.asarray(self.pi, dtype=float).ravel()
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] != pi.size:
            raise DomainError("transition matrix must be square and match pi")
        if np.any(P < -1e-15) or np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-10:
            raise DomainError(f"{self.name} is not row-stochastic")
        if self.reversible_wrt_pi and detailed_balance_defect(pi, P) > 1e-10:
            raise DomainError(f"{self.name} is flagged reversible but violates detailed balance")

    @property
    def n(self) -> int:
        return self.rows.shape[0]


def detailed_balance_defect(pi, P) -> float:
    """``max |pi_i P_ij - pi_j P_ji|`` relative to ``max pi_i P_ij``."""
    P = P.rows if isinstance(P, TransitionMatrix) else np.asarray(P)
    Q = np.asarray(pi)[:, None] * P
    return float(np.max(np.abs(Q - Q.T)) / max(np.max(np.abs(Q)), 1e-300))


def coordinate_matrix(disc: DiscreteTarget, k: int) -> np.ndarray:
    """Exact matrix of the coordinate-``k`` update: resample axis ``k`` from its line."""
    shape = disc.shape
    grid_pi = disc.pi_grid()
    n = disc.n_states
    idx = np.arange(n).reshape(shape)
    cond = grid_pi / grid_pi.sum(axis=k, keepdims=True)
    P = np.zeros((n, n))
    lines = np.moveaxis(idx, k, -1).reshape(-1, shape[k])
    weights = np.moveaxis(cond, k, -1).reshape(-1, shape[k])
    for line, w in zip(lines, weights):
        P[np.ix_(line, line)] = w[None, :]
    return P


def build_gibbs_matrices(disc: DiscreteTarget, N: int | None = None, cap: int = DEFAULT_STATE_CAP) -> dict:
    """All Gibbs kernels of a gridded target as :class:`TransitionMatrix` objects.

    Keys: ``P_k`` (list), ``P_SS`` (coordinate 0 first), ``P_RS``, ``P_RS_N``
    (``N`` defaults to ``max(1, N_d)``) and ``P_rev`` (forward then backward sweep).
    """
    n = disc.n_states
    if n > cap:
        raise CapExceededError(f"{n} states exceed the cap of {cap}")
    d = disc.dim
    if N is None:
        N = max(1, coupon_block_length(d))
    N = check_positive_int(N, "N")
    pi = disc.pi
    Pk = [coordinate_matrix(disc, k) for k in range(d)]
    P_ss = Pk[0]
    for M in Pk[1:]:
        P_ss = P_ss @ M
    P_rev = P_ss
    for M in reversed(Pk[:-1]):
        P_rev = P_rev @ M
    P_rs = sum(Pk) / d
    P_rs_N = np.linalg.matrix_power(P_rs, N)
    return {
        "P_k": [TransitionMatrix(M, pi, True, f"P_{k + 1}") for k, M in enumerate(Pk)],
        "P_SS": TransitionMatrix(P_ss, pi, d == 1, "P_SS"),
        "P_RS": TransitionMatrix(P_rs, pi, True, "P_RS"),
        "P_RS_N": TransitionMatrix(P_rs_N, pi, True, f"P_RS^{N}"),
        "P_rev": TransitionMatrix(P_rev, pi, True, "P_rev"),
        "N": N,
    }


# ---------------------------------------------------------------- conductance


@dataclass(frozen=True)
class ConductanceResult:
    phi: float
    argmin_set: np.ndarray
    mode: str
    upper_bound: bool


def _pi_and_rows(disc, P):
    pi = disc.pi if isinstance(disc, DiscreteTarget) else np.asarray(disc, dtype=float).ravel()
    rows = P.rows if isinstance(P, TransitionMatrix) else np.asarray(P, dtype=float)
    return pi, rows


def _set_flows(pi, Q, order):
    """Flow out of and mass of every prefix of ``order``."""
    Qp = Q[np.ix_(order, order)]
    inner = np.diagonal(np.cumsum(np.cumsum(Qp, axis=0), axis=1)).copy()
    mass = np.cumsum(pi[order])
    return np.maximum(mass - inner, 0.0), mass


def exact_conductance(disc, P, mode: str = "exhaustive") -> ConductanceResult:
    """Conductance ``min_{pi(S) <= 1/2} sum_{i in S} pi_i P(i, S^c) / pi(S)``.

    ``exhaustive`` enumerates all subsets (at most 22 states).  ``sweep``
    scans level sets of the second eigenvector of the additive
    reversibilisation and, when coordinates are known, axis half-spaces; it
    returns an upper bound on the conductance.
    """
    pi, rows = _pi_and_rows(disc, P)
    n = pi.size
    Q = pi[:, None] * rows
    if mode == "exhaustive":
        if n > EXHAUSTIVE_CAP:
            raise CapExceededError(f"exhaustive conductance supports at most {EXHAUSTIVE_CAP} states, got {n}")
        return _exhaustive_conductance(pi, Q)
    if mode == "sweep":
        return _sweep_conductance(disc, pi, rows, Q)
    raise DomainError(f"mode must be 'exhaustive' or 'sweep', got {mode!r}")


def _exhaustive_conductance(pi, Q) -> ConductanceResult:
    n = pi.size
    size = 1 << n
    inner = np.zeros(size)
    mass = np.zeros(size)
    for h in range(n):
        lo = 1 << h
        v = Q[h, :h] + Q[:h, h]
        sums = np.zeros(lo)
        for j in range(h):
            sums[1 << j: 2 << j] = sums[: 1 << j] + v[j]
        inner[lo: 2 * lo] = inner[:lo] + Q[h, h] + sums
        mass[lo: 2 * lo] = mass[:lo] + pi[h]
    flow = np.maximum(mass - inner, 0.0)
    ok = (mass <= 0.5 + 1e-12) & (mass > 0)
    ok[0] = False
    ratio = np.full(size, np.inf)
    ratio[ok] = flow[ok] / mass[ok]
    best = int(np.argmin(ratio))
    members = np.flatnonzero((best >> np.arange(n)) & 1)
    return ConductanceResult(float(ratio[best]), members, "exhaustive", False)


def _sweep_conductance(disc, pi, rows, Q) -> ConductanceResult:
    n = pi.size
    sq = np.sqrt(pi)
    A = 0.5 * (Q + Q.T)
    S = A / sq[:, None] / sq[None, :]
    _, vecs = np.linalg.eigh(S)
    orders = []
    if n > 1:
        f = vecs[:, -2] / sq
        orders += [np.argsort(f, kind="stable"), np.argsort(-f, kind="stable")]
    if isinstance(disc, DiscreteTarget):
        pts = disc.points
        for k in range(disc.dim):
            orders += [np.argsort(pts[:, k], kind="stable"), np.argsort(-pts[:, k], kind="stable")]
    best_phi, best_set = np.inf, np.arange(0)
    for order in orders:
        flow, mass = _set_flows(pi, Q, order)
        ok = mass <= 0.5 + 1e-12
        if not ok.any():
            continue
        ratio = np.where(ok, flow / np.where(mass > 0, mass, 1.0), np.inf)
        m = int(np.argmin(ratio))
        if ratio[m] < best_phi:
            best_phi, best_set = float(ratio[m]), np.sort(order[: m + 1])
    return ConductanceResult(best_phi, best_set, "sweep", True)


def set_conductance(pi, P, members) -> float:
    pi, rows = _pi_and_rows(pi, P)
    mask = np.zeros(pi.size, dtype=bool)
    mask[np.asarray(members, dtype=int)] = True
    flow = float(np.sum(pi[mask, None] * rows[np.ix_(mask, ~mask)]))
    return flow / float(pi[mask].sum())


def spectrum(pi, P) -> np.ndarray:
    """Eigenvalues (descending) of a reversible kernel via ``D^1/2 P D^-1/2``."""
    pi, rows = _pi_and_rows(pi, P)
    sq = np.sqrt(pi)
    S = sq[:, None] * rows / sq[None, :]
    return np.linalg.eigvalsh(0.5 * (S + S.T))[::-1]


def exact_spectral_gap(disc, P) -> float:
    """``1 -`` the largest eigenvalue on mean-zero functions of a reversible kernel."""
    pi, rows = _pi_and_rows(disc, P)
    reversible = P.reversible_wrt_pi if isinstance(P, TransitionMatrix) else detailed_balance_defect(pi, rows) <= 1e-10
    if not reversible:
        raise DomainError("spectral gap requires a pi-reversible kernel")
    sq = np.sqrt(pi)
    S = sq[:, None] * rows / sq[None, :]
    S = 0.5 * (S + S.T)
    vals, vecs = np.linalg.eigh(S - np.outer(sq, sq))
    top = int(np.argmax(np.abs(vecs.T @ sq)))
    rest = np.delete(vals, top)
    if rest.size == 0:
        return 1.0
    return float(1.0 - rest.max())


# ---------------------------------------------------------------- mixing


def warm_starts(disc) -> dict:
    """Point mass at the heaviest state and the uniform law, with their warmness."""
    pi = disc.pi if isinstance(disc, DiscreteTarget) else np.asarray(disc, dtype=float)
    point = np.zeros_like(pi)
    point[int(np.argmax(pi))] = 1.0
    uniform = np.full_like(pi, 1.0 / pi.size)
    return {"point_mass": point, "uniform": uniform}


def tv_decay_curve(disc, P, mu0, k_max: int) -> tuple[np.ndarray, float]:
    """Exact ``||mu0 P^k - pi||_tv`` for ``k = 0..k_max`` and the warmness of ``mu0``."""
    pi, rows = _pi_and_rows(disc, P)
    mu = np.asarray(mu0, dtype=float).ravel()
    if mu.size != pi.size or np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-12:
        raise DomainError("mu0 must be a probability vector on the states")
    omega = float(np.max(mu / pi))
    out = np.empty(check_positive_int(k_max, "k_max", 0) + 1)
    for k in range(out.size):
        out[k] = 0.5 * np.abs(mu - pi).sum()
        mu = mu @ rows
    return out, omega


# ---------------------------------------------------------------- three sets


@dataclass(frozen=True, eq=False)
class PartitionTriple:
    """Labels 1, 2, 3 per state; ``gap`` is the distance between the S1 and S2 cell regions."""

    labels: np.ndarray
    gap: float
    source: str = ""

    def masses(self, pi) -> tuple[float, float, float]:
        return tuple(float(pi[self.labels == j].sum()) for j in (1, 2, 3))


@dataclass
class ThreeSetResult:
    min_slack: float
    worst: PartitionTriple | None
    n_tested: int
    n_resampled: int
    slacks: np.ndarray = field(repr=False, default=None)
    worst_terms: dict = field(default_factory=dict)
    gaps: np.ndarray = field(repr=False, default=None)

    @property
    def min_separated_slack(self) -> float:
        """Minimum slack over partitions whose S1 and S2 do not touch."""
        sep = self.gaps > 0
        return float(self.slacks[sep].min()) if sep.any() else math.inf

    @property
    def passed(self) -> bool:
        return self.min_slack >= 0


def region_gap(disc: DiscreteTarget, labels: np.ndarray) -> float:
    """Euclidean distance between the unions of S1 cells and S2 cells."""
    lo, hi = disc.cell_bounds
    a = np.flatnonzero(labels == 1)
    b = np.flatnonzero(labels == 2)
    if disc.dim == 1:
        keep = np.flatnonzero(labels != 3)
        lab = labels[keep]
        switch = np.flatnonzero(lab[1:] != lab[:-1])
        if switch.size == 0:
            return math.inf
        left, right = keep[switch], keep[switch + 1]
        return float(max(0.0, np.min(lo[right, 0] - hi[left, 0])))
    best = math.inf
    step = max(1, 2_000_000 // max(1, b.size))
    for s in range(0, a.size, step):
        ia = a[s:s + step]
        gap = np.maximum(0.0, np.maximum(lo[b][None, :, :] - hi[ia][:, None, :], lo[ia][:, None, :] - hi[b][None, :, :]))
        best = min(best, float(np.sqrt((gap**2).sum(axis=2)).min()))
    return best


def three_set_slack(pi, labels, gap, profile: IsoperimetricProfile):
    m1 = pi[labels == 1].sum()
    m2 = pi[labels == 2].sum()
    m3 = pi[labels == 3].sum()
    rhs = float(profile.upsilon(gap)) * float(profile.psi(min(m1, m2))) if gap > 0 else 0.0
    return m3 - rhs, {"pi_S1": m1, "pi_S2": m2, "pi_S3": m3, "gap": gap, "rhs": rhs}


def _random_partition(disc, rng):
    """Nearest-centre labelling of random centres, with a buffer of random width."""
    pts = disc.points
    n = pts.shape[0]
    lo = np.array([g.low for g in disc.grids])
    hi = np.array([g.high for g in disc.grids])
    n_centres = int(rng.integers(2, 9))
    centres = lo + rng.random((n_centres, disc.dim)) * (hi - lo)
    cl = rng.integers(1, 3, n_centres)
    if np.all(cl == cl[0]):
        cl[rng.integers(1, n_centres)] = 3 - cl[0]
    nearest = np.argmin(((pts[:, None, :] - centres[None, :, :]) ** 2).sum(axis=2), axis=1)
    labels = cl[nearest].astype(np.int8)
    spacing = min(g.spacing for g in disc.grids)
    width = float(np.max(hi - lo))
    buffer = 0.0 if rng.random() < 0.1 else float(np.exp(rng.uniform(math.log(spacing / 2), math.log(width / 4))))
    if buffer > 0:
        for a, b in ((1, 2), (2, 1)):
            own = np.flatnonzero(labels == a)
            other = pts[labels == b]
            if own.size and other.shape[0]:
                dist = _nearest_distance(pts[own], other, disc.dim)
                labels[own[dist < buffer]] = 3
    return labels


def _nearest_distance(query, ref, dim):
    if dim == 1:
        r = np.sort(ref[:, 0])
        q = query[:, 0]
        i = np.searchsorted(r, q)
        left = np.abs(q - r[np.clip(i - 1, 0, r.size - 1)])
        right = np.abs(r[np.clip(i, 0, r.size - 1)] - q)
        return np.minimum(left, right)
    return cKDTree(ref).query(query)[0]


def _tail_family_1d(disc, profile):
    """All cuts ``S1 = {i <= a}``, ``S2 = {i >= b}``, ``a < b``, and the mirror; vectorised."""
    g = disc.grids[0]
    pi = disc.pi
    n = pi.size
    # left and right cumulative sums so that tail masses keep full precision
    F = np.concatenate(([0.0], np.cumsum(pi)))
    G = np.concatenate((np.cumsum(pi[::-1])[::-1], [0.0]))
    a, b = np.triu_indices(n, k=1)
    m1 = F[a + 1]
    m2 = G[b]
    m3 = np.where(F[b] <= G[a + 1], F[b] - F[a + 1], G[a + 1] - G[b])
    gap = g.edges[b] - g.edges[a + 1]
    rhs = np.where(gap > 0, profile.upsilon(np.maximum(gap, 1e-300)) * profile.psi(np.minimum(m1, m2)), 0.0)
    slack = m3 - rhs
    j = int(np.argmin(slack))
    labels = np.full(n, 3, dtype=np.int8)
    labels[: a[j] + 1] = 1
    labels[b[j]:] = 2
    return slack, gap, PartitionTriple(labels, float(gap[j]), "tail-cut")


def _interval_family_1d(disc, n_widths=12):
    """Inner interval against both tails with buffers of several widths."""
    n = disc.n_states
    stride = max(1, n // 96)
    starts = np.arange(0, n, stride)
    buffers = np.unique(np.round(np.geomspace(1, max(2, n // 4), n_widths)).astype(int))
    for lo in starts:
        for hi in starts[starts >= lo]:
            for w in buffers:
                if lo - w <= 0 and hi + w >= n - 1:
                    continue
                labels = np.full(n, 2, dtype=np.int8)
                labels[max(0, lo - w): min(n, hi + w + 1)] = 3
                labels[lo: hi + 1] = 1
                yield labels, "interval"


def _plane_families_2d(disc, n_angles=16, n_offsets=15, n_widths=6):
    pts = disc.points
    spacing = min(g.spacing for g in disc.grids)
    radius = float(np.max(np.abs(pts)))
    widths = np.geomspace(spacing / 2, radius / 2, n_widths)
    for theta in np.linspace(0, math.pi, n_angles, endpoint=False):
        proj = pts @ np.array([math.cos(theta), math.sin(theta)])
        for c in np.linspace(proj.min(), proj.max(), n_offsets + 2)[1:-1]:
            for w in widths:
                labels = np.full(pts.shape[0], 3, dtype=np.int8)
                labels[proj <= c] = 1
                labels[proj > c + w] = 2
                yield labels, "half-plane"
    r = np.sqrt((pts**2).sum(axis=1))
    for r1 in np.linspace(r.min(), r.max(), n_offsets + 2)[1:-1]:
        for w in widths:
            labels = np.full(pts.shape[0], 3, dtype=np.int8)
            labels[r <= r1] = 1
            labels[r > r1 + w] = 2
            yield labels, "annulus"


def check_three_set(disc: DiscreteTarget, profile: IsoperimetricProfile, n_partitions: int = 1000, rng=None, families: bool = True) -> ThreeSetResult:
    """Minimum over partitions of ``pi(S3) - Upsilon(gap) Psi(min{pi(S1), pi(S2)})``.

    Random nearest-centre partitions with random buffers are combined with
    deterministic families (all tail cuts and buffered intervals in 1-D,
    half-planes and annuli in 2-D).  Partitions with an empty S1 or S2 are
    redrawn and counted.
    """
    rng = check_random_state(rng)
    pi = disc.pi
    slacks, gaps = [], []
    worst, worst_slack, worst_terms = None, math.inf, {}
    resampled = 0

    def consider(labels, source):
        nonlocal worst, worst_slack, worst_terms
        gap = region_gap(disc, labels)
        s, terms = three_set_slack(pi, labels, gap, profile)
        slacks.append(s)
        gaps.append(gap)
        if s < worst_slack:
            worst, worst_slack, worst_terms = PartitionTriple(labels.copy(), gap, source), s, terms

    for _ in range(check_positive_int(n_partitions, "n_partitions", 0)):
        while True:
            labels = _random_partition(disc, rng)
            if (labels == 1).any() and (labels == 2).any():
                break
            resampled += 1
        consider(labels, "random")

    if families:
        if disc.dim == 1:
            tail, tail_gap, triple = _tail_family_1d(disc, profile)
            slacks.extend(tail.tolist())
            gaps.extend(tail_gap.tolist())
            if tail.min() < worst_slack:
                worst, worst_slack = triple, float(tail.min())
                worst_terms = three_set_slack(pi, triple.labels, triple.gap, profile)[1]
            family = _interval_family_1d(disc)
        else:
            family = _plane_families_2d(disc)
        for labels, source in family:
            if (labels == 1).any() and (labels == 2).any():
                consider(labels, source)

    arr = np.asarray(slacks)
    return ThreeSetResult(float(arr.min()), worst, arr.size, resampled, arr, worst_terms, np.asarray(gaps))


# ---------------------------------------------------------------- coupling


def empirical_close_coupling(disc: DiscreteTarget, P, deltas) -> list[tuple[float, float]]:
    """Exact ``eps(delta) = 1 - max_{|x-y| <= delta} ||P(x,.) - P(y,.)||_tv`` on the nodes."""
    _, rows = _pi_and_rows(disc, P)
    pts = disc.points
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    tv = 0.5 * np.abs(rows[:, None, :] - rows[None, :, :]).sum(axis=2)
    out = []
    for delta in np.atleast_1d(deltas):
        mask = dist <= delta
        out.append((float(delta), float(1.0 - tv[mask].max())))
    return out


def check_close_coupling(
    target,
    cert,
    kind,
    n_pairs: int = 50,
    n_reps: int = 10_000,
    rng=None,
    *,
    grids=None,
    grid_size: int = 513,
    burn_in: int = 100,
    thin: int = 10,
    x0=None,
) -> dict:
    """Estimate ``||P(x,.) - P(y,.)||_tv`` from above at pairs with ``|x - y| <= delta``.

    ``x`` runs along a systematic-scan chain and ``y`` is ``x`` moved by a
    random direction times ``delta * r`` with ``r`` uniform on ``(0, 1]``.
    Each pair gets ``1 - meeting + 3 stderr`` from ``n_reps`` coupled
    applications of ``kind``; the check passes when every such value is at
    most ``1 - eps_exact + 3 sigma``, with ``sigma`` the binomial standard
    error of a meeting frequency equal to ``eps_exact``.
    """
    from .kernels import KernelKind, estimate_meeting_probability, make_grids, run_chain
    from .targets import derive_tv_continuity

    rng = check_random_state(rng)
    chain_rng, pair_rng, couple_rng = rng.spawn(3)
    kind = KernelKind.parse(kind)
    d = target.dim
    grids = make_grids(target, grid_size) if grids is None else grids
    start = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    traj = run_chain(target, "systematic", start, burn_in + n_pairs * thin, thin, chain_rng, grids=grids)
    xs = traj.states[-n_pairs:]
    eps = cert.eps_exact
    sigma = math.sqrt(eps * (1 - eps) / n_reps)
    threshold = 1.0 - eps + 3.0 * sigma
    try:
        tv_mod = derive_tv_continuity(target.regularity)
    except Exception:
        tv_mod = None
    rows = []
    for i, x in enumerate(xs):
        while True:
            v = pair_rng.normal(size=d)
            y = x + v / np.linalg.norm(v) * cert.delta * (1.0 - pair_rng.random())
            if np.all((y >= target.box[:, 0]) & (y <= target.box[:, 1])):
                break
        dist = float(np.linalg.norm(x - y))
        est = estimate_meeting_probability(target, kind, x, y, n_reps, couple_rng, grids=grids)
        tv_ub = 1.0 - est.estimate + 3.0 * est.stderr
        displayed = None
        if tv_mod is not None and kind.variant == "systematic":
            displayed = 1.0 - max(0.0, 1.0 - tv_mod.M * dist**tv_mod.beta) ** d
        rows.append({"pair": i, "distance": dist, "meeting": est.estimate, "stderr": est.stderr, "tv_upper": tv_ub, "displayed_bound": displayed})
    max_ub = max(r["tv_upper"] for r in rows)
    return {
        "max_tv_ub": max_ub,
        "threshold": threshold,
        "sigma": sigma,
        "eps_exact": eps,
        "delta": cert.delta,
        "passed": bool(max_ub <= threshold),
        "pairs": rows,
    }


def monte_carlo_coverage(d: int, N: int, n_trials: int, rng=None) -> tuple[float, float]:
    """Frequency with which ``N`` uniform indices from ``[d]`` hit every index, with stderr."""
    rng = check_random_state(rng)
    draws = rng.integers(0, d, size=(n_trials, N))
    hit = np.zeros((n_trials, d), dtype=bool)
    np.put_along_axis(hit, draws, True, axis=1)
    p = float(hit.all(axis=1).mean())
    return p, math.sqrt(p * (1 - p) / n_trials)


def coupon_probability_exact(d: int, N: int) -> float:
    """Probability that ``N`` uniform draws from ``[d]`` cover all ``d`` values.

    Inclusion-exclusion with compensated summation; binomials move to the log
    domain for ``d > 60``.
    """
    d = check_positive_int(d, "d")
    N = check_positive_int(N, "N", 0)
    if N == 0:
        return 0.0
    k = np.arange(d)
    if d > 60:
        log_c = special.gammaln(d + 1) - special.gammaln(k + 1) - special.gammaln(d - k + 1)
        mag = np.exp(log_c + N * np.log1p(-k / d))
    else:
        mag = np.array([math.comb(d, int(j)) * ((d - j) / d) ** N for j in k])
    terms = np.where(k % 2 == 1, -mag, mag)
    return min(1.0, max(0.0, math.fsum(terms)))


def coupon_union_certificate(d: int, N: int) -> bool:
    """Exact-integer check of ``1 - d (1 - 1/d)^N >= 1/2``, a lower bound on full coverage."""
    return 2 * d * (d - 1) ** N <= d**N


def rho(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, -x * np.log(np.where(x > 0, x, 1.0)), 0.0)


def check_rho_lemma(grid_size: int = 2001, tol: float = 1e-12) -> dict:
    """Grid check of ``rho(x) = x ln(1/x)``: positivity, argmax at ``1/e`` and ``rho(x+h) >= rho(x) - h``."""
    n = check_positive_int(grid_size, "grid_size", 2)
    x = np.linspace(0.0, 1.0, n)
    r = rho(x)
    interior = r[1:-1]
    argmax = x[int(np.argmax(r))]
    cell = 1.0 / (n - 1)
    X, H = np.meshgrid(x, x, indexing="ij")
    ok = X + H <= 1.0 + 1e-15
    margin = rho(np.minimum(X + H, 1.0)) - (r[:, None] - H)
    worst = float(margin[ok].min())
    report = {
        "positive_interior": bool(np.all(interior > 0)),
        "argmax": float(argmax),
        "argmax_within_cell": bool(abs(argmax - math.exp(-1)) <= cell),
        "max_value": float(r.max()),
        "min_margin": worst,
        "inequality_holds": bool(worst >= -tol),
        "n_pairs": int(ok.sum()),
    }
    report["passed"] = report["positive_interior"] and report["argmax_within_cell"] and report["inequality_holds"]
    return report


# ---------------------------------------------------------------- regularity


def marginal_potential(target, axis: int, grid_s: Grid1D, grid_int: Grid1D | None = None) -> np.ndarray:
    """``V(s) = -log ∫ exp(-U) dpsi`` over the other coordinate of a 2-D target."""
    if target.dim != 2:
        raise DomainError("marginal potentials are implemented for d = 2")
    other = 1 - axis
    if grid_int is None:
        grid_int = Grid1D.for_box(target.box, other)
    X = np.zeros((grid_s.n, 2))
    X[:, axis] = grid_s.points
    _, log_norm = normalize_log_weights(slice_log_weights(target, other, X, grid_int))
    return -log_norm


def check_marginal_regularity(target, axis: int = 0, grid: Grid1D | None = None, grid_int: Grid1D | None = None, rel_tol: float = 1e-3) -> dict:
    """Finite-difference Lipschitz and curvature estimates of the marginal potential."""
    if grid is None:
        lo, hi = target.box[axis]
        grid = Grid1D.uniform(lo / 2.5, hi / 2.5, 801)
    V = marginal_potential(target, axis, grid, grid_int)
    h = np.diff(grid.points)
    slope = np.diff(V) / h
    curv = np.diff(slope) / (0.5 * (h[1:] + h[:-1]))
    lip = float(np.max(np.abs(slope)))
    smooth = float(np.max(np.abs(curv)))
    reg = target.regularity
    out = {"L_emp_lip": lip, "L_emp_smooth": smooth}
    if reg.lipschitz_L is not None:
        out["lip_ok"] = bool(lip <= reg.lipschitz_L * (1 + rel_tol))
    if reg.smooth_L is not None:
        out["smooth_ok"] = bool(smooth <= reg.smooth_L * (1 + rel_tol))
    out["passed"] = all(v for k, v in out.items() if k.endswith("_ok"))
    return out


def conditional_tv_pairs(target, grids, n_pairs: int, rng=None) -> dict:
    """Measured conditional TV against ``M |x_{-k} - y_{-k}|^beta`` at random pairs.

    Pairs are drawn in the central half of the box, half of them at
    log-uniform small separations.
    """
    from .conditional import conditional_weights
    from .targets import derive_tv_continuity

    rng = check_random_state(rng)
    tv_mod = derive_tv_continuity(target.regularity)
    d = target.dim
    half = 0.5 * (target.box[:, 1] - target.box[:, 0]) / 2
    centre = 0.5 * (target.box[:, 1] + target.box[:, 0])
    X = centre + rng.uniform(-1, 1, (n_pairs, d)) * half
    step = rng.normal(size=(n_pairs, d))
    step /= np.linalg.norm(step, axis=1, keepdims=True)
    scale = np.where(rng.random(n_pairs) < 0.5, np.exp(rng.uniform(math.log(1e-4), math.log(1.0), n_pairs)), rng.uniform(0, 4, n_pairs))
    Y = np.clip(X + step * scale[:, None], target.box[:, 0], target.box[:, 1])
    ks = rng.integers(0, d, n_pairs)
    tv = np.empty(n_pairs)
    dist = np.empty(n_pairs)
    for k in range(d):
        rows = np.flatnonzero(ks == k)
        if rows.size == 0:
            continue
        W = conditional_weights(target, k, np.concatenate((X[rows], Y[rows])), grids[k])
        tv[rows] = np.minimum(1.0, 0.5 * np.abs(W[: rows.size] - W[rows.size:]).sum(axis=1))
        diff = np.delete(X[rows] - Y[rows], k, axis=1)
        dist[rows] = np.sqrt((diff**2).sum(axis=1))
    bound = tv_mod.bound(dist)
    ratio = np.where(bound > 0, tv / np.where(bound > 0, bound, 1.0), np.where(tv > 0, np.inf, 0.0))
    return {"tv": tv, "distance": dist, "bound": bound, "max_ratio": float(ratio.max()), "M": tv_mod.M, "beta": tv_mod.beta}


# ---------------------------------------------------------------- diagnostics


def rayleigh_diagnostic(disc: DiscreteTarget, kind: str, q: float = 2.0) -> dict:
    """Smallest ratio ``E|f'|^q / functional(f)`` over smooth test functions on a 1-D grid.

    Any valid constant must not exceed this ratio; the value is a
    diagnostic upper estimate, never a certified constant.
    """
    from .targets import POINCARE, normalize_fi_kind

    if disc.dim != 1:
        raise DomainError("the Rayleigh diagnostic is implemented for 1-D targets")
    kind = normalize_fi_kind(kind)
    x = disc.grids[0].points
    pi = disc.pi
    sd = math.sqrt(float(np.sum(pi * x**2) - np.sum(pi * x) ** 2))
    tests = [("linear", x, np.ones_like(x))]
    for a in np.linspace(-2.0, 2.0, 41):
        if a != 0:
            tests.append((f"exp({a:.2f}x)", np.exp(a * x), a * np.exp(a * x)))
    for s in np.geomspace(0.1, 10.0, 21):
        tests.append((f"tanh(x/{s:.3g})", np.tanh(x / (s * sd)), 1 / (s * sd) / np.cosh(x / (s * sd)) ** 2))
    best, best_name = math.inf, ""
    for name, f, df in tests:
        num = float(np.sum(pi * np.abs(df) ** q))
        if kind == POINCARE:
            den = float(np.sum(pi * np.abs(f - np.sum(pi * f)) ** q))
        else:
            fq = np.abs(f) ** q
            mean = float(np.sum(pi * fq))
            with np.errstate(divide="ignore", invalid="ignore"):
                ent = np.where(fq > 0, fq * np.log(np.where(fq > 0, fq, 1.0)), 0.0)
            den = float(np.sum(pi * ent)) - mean * math.log(mean)
        if den > 1e-14 and num / den < best:
            best, best_name = num / den, name
    return {"estimate": best, "witness": best_name}
