"""Target distributions ``pi(dx) ∝ exp(-U(x)) dx`` with regularity metadata.

A :class:`TargetSpec` bundles a vectorised potential, a truncation box and a
:class:`RegularityProfile`.  Potentials act on arrays of shape ``(..., d)``.
Targets may also carry a fast *slice* evaluator computing ``U`` along one
coordinate line for a batch of base points; every builtin provides one
because the samplers spend nearly all of their time there.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np
from scipy import integrate, interpolate, special

from . import expr
from .exceptions import DomainError, EvaluationError, UnavailableError
from .validation import check_point, check_positive_int, check_real

POINCARE = "poincare"
LOG_SOBOLEV = "log_sobolev"
_FI_ALIASES = {
    "poincare": POINCARE,
    "pi": POINCARE,
    "log_sobolev": LOG_SOBOLEV,
    "logsobolev": LOG_SOBOLEV,
    "log-sobolev": LOG_SOBOLEV,
    "lsi": LOG_SOBOLEV,
    "ls": LOG_SOBOLEV,
}

DEFAULT_HALF_WIDTH = 20.0

SliceFn = Callable[[int, np.ndarray, np.ndarray], np.ndarray]


def normalize_fi_kind(kind: str) -> str:
    try:
        return _FI_ALIASES[str(kind).lower().replace(" ", "_")]
    except KeyError:
        raise DomainError(f"unknown functional inequality kind {kind!r}") from None


@dataclass(frozen=True)
class FunctionalInequality:
    """A Poincaré or log-Sobolev inequality of order ``q`` with its constant."""

    kind: str
    q: float
    constant: float

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_fi_kind(self.kind))
        object.__setattr__(self, "q", check_real(self.q, "q", low=1.0))
        object.__setattr__(self, "constant", check_real(self.constant, "functional inequality constant", low=0.0, low_open=True))

    @property
    def constant_name(self) -> str:
        return "poincare constant" if self.kind == POINCARE else "log-sobolev constant"


@dataclass(frozen=True)
class TvContinuity:
    """Hölder modulus ``M |x_{-k} - y_{-k}|^beta`` of the conditionals in TV.

    ``M = 0`` is accepted for the degenerate case of conditionals that do
    not depend on the other coordinates.
    """

    M: float
    beta: float

    def __post_init__(self):
        check_real(self.M, "M", low=0.0)
        check_real(self.beta, "beta", low=0.0, high=1.0, low_open=True)

    def bound(self, distance):
        return self.M * np.asarray(distance, dtype=float) ** self.beta


@dataclass(frozen=True)
class RegularityProfile:
    lipschitz_L: float | None = None
    smooth_L: float | None = None
    fi: FunctionalInequality | None = None
    tv: TvContinuity | None = None

    def __post_init__(self):
        for name in ("lipschitz_L", "smooth_L"):
            value = getattr(self, name)
            if value is not None:
                check_real(value, name, low=0.0)
        if self.tv is not None and self.lipschitz_L is not None:
            ref_M = math.sqrt(self.lipschitz_L)
            weaker = self.tv.beta <= 0.5 and self.tv.M >= ref_M
            if weaker and (self.tv.beta, self.tv.M) != (0.5, ref_M):
                raise DomainError(
                    f"tv continuity ({self.tv.M}, {self.tv.beta}) is weaker than the "
                    f"({ref_M}, 0.5) implied by lipschitz_L={self.lipschitz_L}"
                )

    @classmethod
    def from_mapping(cls, data: Mapping | None) -> "RegularityProfile":
        data = dict(data or {})
        unknown = set(data) - {"lipschitz_L", "smooth_L", "fi", "tv"}
        if unknown:
            raise DomainError(f"unknown regularity keys: {sorted(unknown)}")
        fi = data.get("fi")
        if isinstance(fi, Mapping):
            fi = FunctionalInequality(**fi)
        tv = data.get("tv")
        if isinstance(tv, Mapping):
            tv = TvContinuity(**tv)
        return cls(data.get("lipschitz_L"), data.get("smooth_L"), fi, tv)

    def merged(self, other: "RegularityProfile") -> "RegularityProfile":
        """Fields set on ``other`` override those on ``self``."""
        return RegularityProfile(
            other.lipschitz_L if other.lipschitz_L is not None else self.lipschitz_L,
            other.smooth_L if other.smooth_L is not None else self.smooth_L,
            other.fi if other.fi is not None else self.fi,
            other.tv if other.tv is not None else self.tv,
        )


@dataclass(frozen=True, eq=False)
class TargetSpec:
    """Immutable description of a target on a truncation box.

    Attributes:
        dim: dimension ``d >= 1``.
        potential: vectorised ``U``, shape ``(..., d) -> (...)``.
        box: ``(d, 2)`` array of per-coordinate intervals.
        regularity: known regularity constants.
        name: label used in reports.
        slice_potential: optional ``f(k, X, t)`` returning ``U`` at ``X`` with
            coordinate ``k`` replaced by each ``t``, shape ``(len(X), len(t))``.
    """

    dim: int
    potential: Callable[[np.ndarray], np.ndarray]
    box: np.ndarray
    regularity: RegularityProfile = field(default_factory=RegularityProfile)
    name: str = "custom"
    slice_potential: SliceFn | None = None

    def __post_init__(self):
        check_positive_int(self.dim, "dim")
        box = np.array(self.box, dtype=float)
        if box.ndim == 1 and box.shape == (2,):
            box = np.tile(box, (self.dim, 1))
        if box.shape != (self.dim, 2):
            raise DomainError(f"box must have shape ({self.dim}, 2), got {box.shape}")
        if not np.all(np.isfinite(box)) or np.any(box[:, 1] <= box[:, 0]):
            raise DomainError("box needs finite bounds with strictly positive width")
        box.setflags(write=False)
        object.__setattr__(self, "box", box)

    def with_regularity(self, regularity: RegularityProfile) -> "TargetSpec":
        return replace(self, regularity=self.regularity.merged(regularity))

    def with_box(self, box) -> "TargetSpec":
        return replace(self, box=box)

    def slice_values(self, k: int, X: np.ndarray, t: np.ndarray) -> np.ndarray:
        """``U`` on the line through each row of ``X`` along coordinate ``k``."""
        X = np.asarray(X, dtype=float)
        t = np.asarray(t, dtype=float)
        if self.slice_potential is not None:
            return self.slice_potential(k, X, t)
        return _generic_slice(self.potential, k, X, t)


def _generic_slice(potential, k, X, t, max_elems=2_000_000):
    n, d = X.shape
    out = np.empty((n, t.size))
    step = max(1, max_elems // max(1, t.size * d))
    for start in range(0, n, step):
        block = np.repeat(X[start:start + step, None, :], t.size, axis=1)
        block[:, :, k] = t
        out[start:start + step] = potential(block)
    return out


def _others_sq(X, k):
    """Squared norm of every row of ``X`` with column ``k`` removed."""
    if X.shape[1] == 1:
        return np.zeros(X.shape[0])
    others = np.delete(X, k, axis=1)
    return np.einsum("ij,ij->i", others, others)


def _radial_slice(profile: Callable[[np.ndarray], np.ndarray]) -> SliceFn:
    """Slice evaluator for potentials of the form ``U(x) = f(|x|)``.

    For a grid symmetric about zero only the non-negative half is evaluated.
    """

    def slicer(k, X, t):
        r2 = _others_sq(X, k)
        n_t = t.size
        half = n_t // 2
        if n_t > 2 and np.array_equal(t, -t[::-1]):
            tt = t[half:]
            vals = profile(np.sqrt(r2[:, None] + tt[None, :] ** 2))
            out = np.empty((X.shape[0], n_t))
            out[:, half:] = vals
            out[:, :half] = vals[:, n_t - half - 1:0:-1] if n_t % 2 else vals[:, ::-1][:, :half]
            return out
        return profile(np.sqrt(r2[:, None] + t[None, :] ** 2))

    return slicer


def potential_eval(target: TargetSpec, x) -> float:
    """Evaluate ``U`` at a single point inside the target box."""
    point = check_point(x, target.dim, target.box)
    value = float(np.asarray(target.potential(point[None, :]))[0])
    if not math.isfinite(value):
        raise EvaluationError(f"potential is not finite at {point.tolist()}")
    return value


def derive_tv_continuity(reg: RegularityProfile) -> TvContinuity:
    """Strongest available TV-continuity modulus for the conditionals.

    An explicit ``tv`` wins; otherwise L-log-smoothness gives ``(sqrt(L), 1)``
    and L-log-Lipschitz continuity gives ``(sqrt(L), 1/2)``.
    """
    if reg.tv is not None:
        return reg.tv
    if reg.smooth_L is not None:
        return TvContinuity(math.sqrt(reg.smooth_L), 1.0)
    if reg.lipschitz_L is not None:
        return TvContinuity(math.sqrt(reg.lipschitz_L), 0.5)
    raise UnavailableError(
        "tv continuity", "unavailable: no tv, smooth_L or lipschitz_L regularity supplied"
    )


# ---------------------------------------------------------------- builtins


def _gaussian_product(dim):
    def potential(X):
        X = np.asarray(X, dtype=float)
        return 0.5 * np.sum(X * X, axis=-1)

    def slicer(k, X, t):
        return 0.5 * _others_sq(X, k)[:, None] + 0.5 * t[None, :] ** 2

    return potential, slicer, RegularityProfile(smooth_L=1.0)


def _perturbed_laplace(dim):
    def profile(r):
        return r - 2.0 * np.cos(r)

    def potential(X):
        X = np.asarray(X, dtype=float)
        return profile(np.sqrt(np.sum(X * X, axis=-1)))

    return potential, _radial_slice(profile), RegularityProfile(lipschitz_L=3.0)


def _laplace_mixture(dim, shift=1.0):
    m = np.full(dim, float(shift))

    def potential(X):
        X = np.asarray(X, dtype=float)
        a = np.sqrt(np.sum((X - m) ** 2, axis=-1))
        b = np.sqrt(np.sum((X + m) ** 2, axis=-1))
        return -np.logaddexp(-a, -b) + math.log(2.0)

    def slicer(k, X, t):
        ra = _others_sq(X - m, k)
        rb = _others_sq(X + m, k)
        a = np.sqrt(ra[:, None] + (t[None, :] - m[k]) ** 2)
        b = np.sqrt(rb[:, None] + (t[None, :] + m[k]) ** 2)
        return -np.logaddexp(-a, -b) + math.log(2.0)

    return potential, slicer, RegularityProfile(lipschitz_L=1.0)


def _log_sphere_average(z, dim):
    """``log(A_d(z)) - z`` where ``A_d`` averages ``exp(z cos θ)`` over the sphere."""
    z = np.asarray(z, dtype=float)
    if dim == 1:
        return np.log1p(np.exp(-2.0 * z)) - math.log(2.0)
    nu = dim / 2.0 - 1.0
    small = z < 1e-6
    zs = np.where(small, 1.0, z)
    big = special.gammaln(nu + 1.0) + nu * (math.log(2.0) - np.log(zs)) + np.log(special.ive(nu, zs))
    series = -z + z * z / (4.0 * (nu + 1.0))
    return np.where(small, series, big)


def _mixture_log_density(r, dim: int) -> np.ndarray:
    """``log ∫ φ_t(x) ν(dt)`` at radii ``|x| = r`` (unnormalised), by quadrature.

    The mixing law is spherically symmetric, so the integral reduces to one
    over the radius ``s`` of ``t``; all radii share one adaptive subdivision.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))

    def log_integrand(s):
        s = np.asarray(s, dtype=float)[..., None]
        with np.errstate(divide="ignore"):
            lead = (dim - 1) * np.log(s) if dim > 1 else 0.0
        return lead - np.abs(s * s - 4.0) - 0.5 * (r - s) ** 2 + _log_sphere_average(r * s, dim)

    s_max = float(max(r.max(), 2.0) + 14.0)
    probe = np.linspace(0.0, s_max, 4001)[1:]
    shift = np.max(log_integrand(probe), axis=0)
    value, _ = integrate.quad_vec(
        lambda s: np.exp(log_integrand(s) - shift),
        0.0,
        s_max,
        epsabs=1e-8,
        epsrel=1e-10,
        norm="max",
        points=[2.0],
        limit=2000,
    )
    return shift + np.log(value)


@functools.lru_cache(maxsize=16)
def _mixture_radial_table(dim: int, r_max: float, n: int = 1201):
    r = np.linspace(0.0, r_max, n)
    u = -_mixture_log_density(r, dim)
    u -= u[0]
    return interpolate.CubicSpline(r, u, bc_type=((1, 0.0), "not-a-knot"))


def _gaussian_mixture(dim, half_width, smooth_L=None):
    spline = _mixture_radial_table(dim, float(half_width * math.sqrt(dim) * 1.05))

    def profile(r):
        return spline(r)

    def potential(X):
        X = np.asarray(X, dtype=float)
        return profile(np.sqrt(np.sum(X * X, axis=-1)))

    return potential, _radial_slice(profile), RegularityProfile(smooth_L=smooth_L)


BUILTIN_NAMES = ("gaussian_product", "gaussian_mixture_continuous", "laplace_mixture", "perturbed_laplace")


def builtin_target(name: str, dim: int, params: Mapping | None = None) -> TargetSpec:
    """Construct one of the shipped example targets.

    ``params`` may contain ``R`` (box half-width, default 20), ``fi`` and
    ``tv`` (regularity overrides), ``smooth_L`` for the continuous Gaussian
    mixture and ``shift`` for the Laplace mixture component means.
    """
    params = dict(params or {})
    dim = check_positive_int(dim, "dim")
    allowed = {"R", "fi", "tv", "smooth_L", "lipschitz_L"}
    if name == "laplace_mixture":
        allowed.add("shift")
    unknown = set(params) - allowed
    if unknown:
        raise DomainError(f"invalid params for {name}: {sorted(unknown)}")
    half_width = check_real(params.pop("R", DEFAULT_HALF_WIDTH), "R", low=0.0, low_open=True)

    if name == "gaussian_product":
        potential, slicer, reg = _gaussian_product(dim)
    elif name == "perturbed_laplace":
        potential, slicer, reg = _perturbed_laplace(dim)
    elif name == "laplace_mixture":
        potential, slicer, reg = _laplace_mixture(dim, check_real(params.pop("shift", 1.0), "shift"))
    elif name == "gaussian_mixture_continuous":
        smooth = params.pop("smooth_L", None)
        if smooth is not None:
            smooth = check_real(smooth, "smooth_L", low=0.0)
        potential, slicer, reg = _gaussian_mixture(dim, half_width, smooth)
    else:
        raise DomainError(f"unknown builtin target {name!r}; choose from {BUILTIN_NAMES}")

    override = RegularityProfile.from_mapping(params)
    box = np.tile([-half_width, half_width], (dim, 1))
    return TargetSpec(dim, potential, box, reg.merged(override), name, slicer)


def expression_target(source: str, dim: int, box, regularity: RegularityProfile | None = None) -> TargetSpec:
    potential = expr.compile_potential(source, dim)
    return TargetSpec(dim, potential, box, regularity or RegularityProfile(), f"expr:{source}")


def target_from_config(cfg: Mapping) -> TargetSpec:
    """Build a target from the ``"target"`` block of a run configuration.

    Either ``{"name", "dim", "params"}`` for a builtin or
    ``{"potential", "dim", "box", "regularity"}`` for an expression.  A
    ``"regularity"`` entry is merged over the builtin's own metadata.
    """
    cfg = dict(cfg)
    if "dim" not in cfg:
        raise DomainError("target.dim is required")
    dim = check_positive_int(cfg["dim"], "target.dim")
    reg = RegularityProfile.from_mapping(cfg.get("regularity"))
    if "name" in cfg:
        target = builtin_target(cfg["name"], dim, cfg.get("params"))
        target = target.with_regularity(reg)
        if "box" in cfg:
            target = target.with_box(cfg["box"])
        return target
    if "potential" in cfg:
        box = cfg.get("box", [-DEFAULT_HALF_WIDTH, DEFAULT_HALF_WIDTH])
        return expression_target(cfg["potential"], dim, box, reg)
    raise DomainError("target needs either 'name' or 'potential'")
