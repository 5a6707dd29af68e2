"""Closed-form conductance, spectral-gap and mixing-time bounds for Gibbs kernels.

The chain of estimates is: a close-coupling certificate ``(delta, eps)`` for
the kernel, a three-set isoperimetric profile ``(Upsilon, Psi)`` obtained from
a Poincaré or log-Sobolev inequality, a conductance lower bound combining
both, then Cheeger and warm-start mixing-time bounds.  Logarithms are natural.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import DomainError, UnavailableError
from .kernels import RANDOM_SCAN, RANDOM_SCAN_ITERATED, REVERSIBILIZED, SYSTEMATIC, KernelKind, coupon_block_length
from .targets import LOG_SOBOLEV, POINCARE, FunctionalInequality, RegularityProfile, derive_tv_continuity, normalize_fi_kind
from .validation import check_positive_int, check_real

EPS_EXACT = "exact"
EPS_ASYMPTOTIC = "asymptotic"
_LSI_FACTOR = 1.0 + math.exp(-1.0)


@dataclass(frozen=True)
class IsoperimetricProfile:
    """Three-set profile ``(Upsilon, Psi)`` implied by PI(q) or LS(q) with ``constant``."""

    kind: str
    q: float
    constant: float

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_fi_kind(self.kind))
        check_real(self.q, "q", low=1.0)
        check_real(self.constant, "profile constant", low=0.0, low_open=True)

    @classmethod
    def from_inequality(cls, fi: FunctionalInequality) -> "IsoperimetricProfile":
        return cls(fi.kind, fi.q, fi.constant)

    def upsilon(self, t):
        """Vectorised ``Upsilon``; no domain checks."""
        t = np.asarray(t, dtype=float)
        # written as 1 / (a + 1/ct) so rounding keeps it monotone for huge t
        with np.errstate(divide="ignore"):
            inv = 1.0 / (self.constant * t**self.q)
        if self.kind == POINCARE:
            return 1.0 / (2.0 ** (2 * self.q) * (inv + 2.0**self.q))
        return 1.0 / (inv + _LSI_FACTOR)

    def psi(self, t):
        """Vectorised ``Psi``, extended by continuity to ``Psi(0) = 0``."""
        t = np.asarray(t, dtype=float)
        if self.kind == POINCARE:
            return t.copy() if t.ndim else t
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(t > 0, 0.5 * t * np.log(2.0 / np.where(t > 0, t, 1.0)), 0.0)
        return out

    def upsilon_limit(self) -> float:
        """``lim_{t -> inf} Upsilon(t)``."""
        if self.kind == POINCARE:
            return 2.0 ** (-3 * self.q)
        return 1.0 / _LSI_FACTOR

    def small_t_coefficient(self) -> float:
        """``c`` with ``Upsilon(t) ~ c t^q`` as ``t -> 0``."""
        if self.kind == POINCARE:
            return self.constant / 2.0 ** (2 * self.q)
        return self.constant


def upsilon_eval(profile: IsoperimetricProfile, t: float) -> float:
    t = check_real(t, "t", low=0.0, low_open=True)
    return float(profile.upsilon(t))


def psi_eval(profile: IsoperimetricProfile, t: float) -> float:
    t = check_real(t, "t", low=0.0, high=0.5, low_open=True, high_open=True)
    return float(profile.psi(t))


def check_profile_admissibility(profile: IsoperimetricProfile, n_points: int = 1000) -> dict:
    """Numerically check that ``Upsilon`` is nondecreasing and ``Psi/id`` nonincreasing.

    Also checks that ``Psi`` itself is nondecreasing on ``(0, 1/2)``.
    """
    t_up = np.logspace(-12, 12, n_points)
    t_psi = np.logspace(-12, math.log10(0.5), n_points, endpoint=False)
    up = profile.upsilon(t_up)
    ps = profile.psi(t_psi)
    return {
        "upsilon_nondecreasing": bool(np.all(np.diff(up) >= 0)),
        "psi_nondecreasing": bool(np.all(np.diff(ps) >= 0)),
        "psi_ratio_nonincreasing": bool(np.all(np.diff(ps / t_psi) <= 0)),
    }


# ------------------------------------------------------------ certificates


@dataclass(frozen=True)
class CloseCouplingCert:
    """``|x - y| <= delta`` implies ``||P(x,.) - P(y,.)||_tv <= 1 - eps``.

    ``eps_exact`` is the finite-dimension guarantee and ``eps_asymptotic`` its
    large-dimension limit.  ``applicable`` is false when ``M delta^beta >= 1``,
    where the coupling argument gives nothing.
    """

    delta: float
    eps_exact: float
    eps_asymptotic: float
    N: int = 1
    scheme: str = SYSTEMATIC
    applicable: bool = True

    def __post_init__(self):
        check_real(self.delta, "delta", low=0.0, low_open=True)
        check_real(self.eps_exact, "eps_exact", low=0.0, high=1.0)
        check_real(self.eps_asymptotic, "eps_asymptotic", low=0.0, high=1.0)
        check_positive_int(self.N, "N")

    def eps(self, mode: str = EPS_EXACT) -> float:
        mode = _check_eps_mode(mode)
        return self.eps_exact if mode == EPS_EXACT else self.eps_asymptotic


def _check_eps_mode(mode: str) -> str:
    if mode not in (EPS_EXACT, EPS_ASYMPTOTIC):
        raise DomainError(f"eps mode must be {EPS_EXACT!r} or {EPS_ASYMPTOTIC!r}, got {mode!r}")
    return mode


def _check_tv_params(M, beta):
    M = check_real(M, "M", low=0.0, low_open=True)
    beta = check_real(beta, "beta", low=0.0, high=1.0, low_open=True)
    return M, beta


def close_coupling_ss(M: float, beta: float, d: int) -> CloseCouplingCert:
    """Certificate for the systematic scan: ``delta = (M d)^(-1/beta)``."""
    M, beta = _check_tv_params(M, beta)
    d = check_positive_int(d, "d")
    delta = (M * d) ** (-1.0 / beta)
    return CloseCouplingCert(
        delta=delta,
        eps_exact=(1.0 - 1.0 / d) ** d,
        eps_asymptotic=math.exp(-1.0),
        N=1,
        scheme=SYSTEMATIC,
        applicable=M * delta**beta < 1.0,
    )


def close_coupling_rs(M: float, beta: float, d: int) -> CloseCouplingCert:
    """Certificate for ``N_d`` random-scan steps, ``N_d = ceil(4 d ln d)``."""
    M, beta = _check_tv_params(M, beta)
    d = check_positive_int(d, "d", minimum=2)
    N = coupon_block_length(d)
    delta = (M * N) ** (-1.0 / beta)
    return CloseCouplingCert(
        delta=delta,
        eps_exact=0.5 * (1.0 - 1.0 / N) ** N,
        eps_asymptotic=1.0 / (2.0 * math.e),
        N=N,
        scheme=RANDOM_SCAN_ITERATED,
        applicable=M * delta**beta < 1.0,
    )


# ------------------------------------------------------------ conductance


def conductance_lower(profile: IsoperimetricProfile, cert, eps_mode: str = EPS_EXACT) -> float:
    """``eps Psi(1/4) / 2 * min{1 / (2 Psi(1/4)), Upsilon(delta)}``.

    ``cert`` is a :class:`CloseCouplingCert` or a ``(delta, eps)`` pair.
    """
    if isinstance(cert, CloseCouplingCert):
        delta, eps = cert.delta, cert.eps(eps_mode)
    else:
        delta, eps = cert
    delta = check_real(delta, "delta", low=0.0, low_open=True)
    eps = check_real(eps, "eps", low=0.0, high=1.0)
    psi_q = float(profile.psi(0.25))
    return eps * psi_q / 2.0 * min(1.0 / (2.0 * psi_q), float(profile.upsilon(delta)))


def set_conductance_lower(profile: IsoperimetricProfile, delta: float, eps: float, mass) -> np.ndarray:
    """Per-set bound ``eps/4 * min{pi(S), Upsilon(delta) Psi(pi(S)/2)}`` for sets of mass ``pi(S) <= 1/2``."""
    mass = np.asarray(mass, dtype=float)
    return eps / 4.0 * np.minimum(mass, profile.upsilon(delta) * profile.psi(mass / 2.0))


def mixing_time_upper(phi: float, omega: float, zeta: float) -> float:
    """``2 / phi^2 * ln(sqrt(omega) / zeta)``, or 0 when the start is already ``zeta``-close."""
    phi = check_real(phi, "phi", low=0.0, high=1.0, low_open=True)
    omega = check_real(omega, "omega", low=1.0)
    zeta = check_real(zeta, "zeta", low=0.0, high=1.0, low_open=True, high_open=True)
    ratio = math.sqrt(omega) / zeta
    if ratio <= 1.0:
        return 0.0
    return 2.0 / phi**2 * math.log(ratio)


def tv_envelope(phi: float, omega: float, k):
    """``min(1, sqrt(omega) exp(-k phi^2 / 2))``; vectorised over ``k``."""
    phi = check_real(phi, "phi", low=0.0, high=1.0)
    omega = check_real(omega, "omega", low=1.0)
    k = np.asarray(k)
    if np.any(k < 0):
        raise DomainError("k must be nonnegative")
    out = np.minimum(1.0, math.sqrt(omega) * np.exp(-k * phi**2 / 2.0))
    return float(out) if out.ndim == 0 else out


def cheeger_interval(phi: float) -> tuple[float, float]:
    phi = check_real(phi, "phi", low=0.0, high=1.0)
    return phi**2 / 2.0, phi


def single_step_from_iterated(value: float, N: int, which: str) -> float:
    """Transfer a bound for ``P^N`` to ``P``: rates divide by ``N``, mixing times multiply."""
    N = check_positive_int(N, "N")
    value = check_real(value, "value", low=0.0)
    if which in ("conductance", "spectral_gap"):
        return value / N
    if which == "mixing_time":
        return value * N
    raise DomainError(f"which must be conductance, spectral_gap or mixing_time, got {which!r}")


def lsi_hierarchy_constant(q: float, r: float, c_q: float) -> float:
    """Lower bound on the LS(r) constant from an LS(q) constant, ``q <= r``."""
    q = check_real(q, "q", low=1.0)
    r = check_real(r, "r", low=q)
    c_q = check_real(c_q, "c_q", low=0.0, low_open=True)
    return (5.0 / 128.0) * (4.0 / 105.0) ** (r / q) * (q / r) ** r * c_q ** (r / q)


def pi_from_lsi(c_lsi: float) -> float:
    """Poincaré constant implied by a log-Sobolev constant, ``4 c / ln 2``."""
    c_lsi = check_real(c_lsi, "c_lsi", low=0.0)
    return 4.0 * c_lsi / math.log(2.0)


# ------------------------------------------------------------ composition


@dataclass(frozen=True)
class BoundReport:
    """All inputs and intermediate values of one bound computation."""

    d: int
    kernel: str
    fi_kind: str
    q: float
    C: float
    M: float
    beta: float
    omega: float
    zeta: float
    eps_mode: str
    N: int
    delta: float
    eps: float
    eps_exact: float
    eps_asymptotic: float
    applicable: bool
    upsilon_delta: float
    psi_quarter: float
    phi_block: float
    phi_lower: float
    lambda2_lower: float | None
    tau_block: float
    tau_upper: float
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


def compose_bound_report(
    regularity: RegularityProfile,
    d: int,
    kind,
    omega: float = 1.0,
    zeta: float = 0.25,
    eps_mode: str = EPS_EXACT,
) -> BoundReport:
    """Chain certificate, profile, conductance, Cheeger and mixing bounds for one kernel.

    For the random scan the bound is obtained on ``P^{N_d}`` and transferred
    to a single step.  The spectral-gap bound is only reported for
    reversible kernels.  Missing or degenerate inputs raise
    :class:`UnavailableError` naming the quantity.
    """
    if hasattr(regularity, "regularity"):
        d = regularity.dim if d is None else d
        regularity = regularity.regularity
    d = check_positive_int(d, "d")
    kind = KernelKind.parse(kind)
    eps_mode = _check_eps_mode(eps_mode)
    omega = check_real(omega, "omega", low=1.0)
    zeta = check_real(zeta, "zeta", low=0.0, high=1.0, low_open=True, high_open=True)
    if regularity.fi is None:
        raise UnavailableError(
            "poincare constant", "unavailable: missing poincare constant (or log-sobolev constant)"
        )
    fi = regularity.fi
    tv = derive_tv_continuity(regularity)
    if tv.M <= 0:
        raise UnavailableError("M", "unavailable: TV-continuity modulus M = 0 gives no coupling certificate")
    profile = IsoperimetricProfile.from_inequality(fi)
    notes = []

    if kind.variant == SYSTEMATIC:
        cert = close_coupling_ss(tv.M, tv.beta, d)
    elif kind.variant in (RANDOM_SCAN, RANDOM_SCAN_ITERATED):
        if d < 2:
            raise UnavailableError("N_d", "unavailable: the random-scan certificate needs d >= 2")
        if kind.N is not None and kind.N != coupon_block_length(d):
            raise UnavailableError("N_d", f"unavailable: certificates exist only for N = N_d = {coupon_block_length(d)}")
        cert = close_coupling_rs(tv.M, tv.beta, d)
    elif kind.variant == REVERSIBILIZED:
        raise UnavailableError(
            "close coupling certificate",
            "unavailable: no close-coupling certificate is known for the reversibilized systematic scan",
        )
    else:  # pragma: no cover - KernelKind validates variants
        raise DomainError(kind.variant)

    eps = cert.eps(eps_mode)
    if eps <= 0:
        raise UnavailableError("epsilon", f"unavailable: degenerate epsilon = {eps} at d = {d}")
    if not cert.applicable:
        notes.append("certificate inapplicable: M delta^beta >= 1")

    phi_block = conductance_lower(profile, cert, eps_mode)
    tau_block = mixing_time_upper(phi_block, omega, zeta)
    lam_block = cheeger_interval(phi_block)[0]

    if kind.variant == SYSTEMATIC:
        phi, tau, lam = phi_block, tau_block, None
        notes.append("systematic scan is not reversible: no spectral-gap bound")
    elif kind.variant == RANDOM_SCAN_ITERATED:
        phi, tau, lam = phi_block, tau_block, lam_block
    else:
        N = cert.N
        phi = single_step_from_iterated(phi_block, N, "conductance")
        lam = single_step_from_iterated(lam_block, N, "spectral_gap")
        tau = single_step_from_iterated(tau_block, N, "mixing_time")

    return BoundReport(
        d=d,
        kernel=kind.variant,
        fi_kind=fi.kind,
        q=fi.q,
        C=fi.constant,
        M=tv.M,
        beta=tv.beta,
        omega=omega,
        zeta=zeta,
        eps_mode=eps_mode,
        N=cert.N,
        delta=cert.delta,
        eps=eps,
        eps_exact=cert.eps_exact,
        eps_asymptotic=cert.eps_asymptotic,
        applicable=cert.applicable,
        upsilon_delta=float(profile.upsilon(cert.delta)),
        psi_quarter=float(profile.psi(0.25)),
        phi_block=phi_block,
        phi_lower=phi,
        lambda2_lower=lam,
        tau_block=tau_block,
        tau_upper=tau,
        notes=notes,
    )
