"""Gibbs samplers on grid-discretised conditionals, maximal couplings,
conductance/mixing-time bound calculators and an exact finite-state lab."""

__version__ = "0.1.0"

from .bounds import (  # noqa: E402
    BoundReport,
    CloseCouplingCert,
    IsoperimetricProfile,
    cheeger_interval,
    close_coupling_rs,
    close_coupling_ss,
    compose_bound_report,
    conductance_lower,
    lsi_hierarchy_constant,
    mixing_time_upper,
    pi_from_lsi,
    psi_eval,
    single_step_from_iterated,
    tv_envelope,
    upsilon_eval,
)
from .conditional import (  # noqa: E402
    DiscretePMF,
    Grid1D,
    maximal_coupling_sample,
    sample_inverse_cdf,
    slice_conditional,
    tv_distance_pmf,
)
from .estimators import CouplingEstimator, GibbsSampler  # noqa: E402
from .exceptions import (  # noqa: E402
    CapExceededError,
    DegenerateSliceError,
    DomainError,
    EvaluationError,
    GibbsMixError,
    GridMismatchError,
    UnavailableError,
)
from .kernels import (  # noqa: E402
    CoupledPair,
    KernelKind,
    coupled_step_random_scan,
    coupled_step_systematic,
    coupon_block_length,
    estimate_meeting_probability,
    run_chain,
    run_coupled_chain,
    step_coordinate,
    step_kernel,
)
from .targets import (  # noqa: E402
    BUILTIN_NAMES,
    FunctionalInequality,
    RegularityProfile,
    TargetSpec,
    TvContinuity,
    builtin_target,
    expression_target,
    potential_eval,
    target_from_config,
)
