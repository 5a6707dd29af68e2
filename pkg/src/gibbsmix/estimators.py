"""scikit-learn style wrappers over the samplers and the coupling estimator.

These are a thin convenience layer; every computation is delegated to
:mod:`gibbsmix.kernels`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .conditional import DEFAULT_GRID_SIZE
from .exceptions import DomainError
from .kernels import KernelKind, estimate_meeting_probability, make_grids, run_chain, sample_batch
from .validation import check_positive_int, check_random_state, check_states


def _check_target(target):
    if target is None or not hasattr(target, "slice_values"):
        raise DomainError("target must be a TargetSpec")
    return target


class GibbsSampler(TransformerMixin, BaseEstimator):
    """Gibbs kernel as a transformer: ``transform`` advances each row ``n_steps`` times.

    Parameters
    ----------
    target : TargetSpec
    kernel : str or dict
        Update order, e.g. ``"systematic"`` or ``{"variant": "random_scan_iterated", "N": 23}``.
    n_steps : int
        Kernel applications per ``transform`` call.
    grid_size : int
        Nodes of each coordinate grid.
    on_grid : bool
        Draw grid nodes instead of points uniform within cells.
    random_state : int, Generator or None
    """

    def __init__(self, target=None, kernel="systematic", n_steps=1, grid_size=DEFAULT_GRID_SIZE, on_grid=False, random_state=None):
        self.target = target
        self.kernel = kernel
        self.n_steps = n_steps
        self.grid_size = grid_size
        self.on_grid = on_grid
        self.random_state = random_state

    def fit(self, X=None, y=None):
        target = _check_target(self.target)
        self.kind_ = KernelKind.parse(self.kernel)
        self.grids_ = make_grids(target, self.grid_size)
        self.n_features_in_ = target.dim
        self.n_steps_ = check_positive_int(self.n_steps, "n_steps", minimum=0)
        self._rng = check_random_state(self.random_state)
        if X is not None:
            check_states(X, target.dim, target.box)
        return self

    def transform(self, X):
        check_is_fitted(self, "kind_")
        return sample_batch(self.target, self.kind_, X, self.n_steps_, self._rng, grids=self.grids_, on_grid=self.on_grid)

    def sample(self, n_samples, x0=None, burn_in=0, thin=1):
        """Draw ``n_samples`` states from one chain after ``burn_in`` steps."""
        check_is_fitted(self, "kind_")
        n_samples = check_positive_int(n_samples, "n_samples")
        burn_in = check_positive_int(burn_in, "burn_in", minimum=0)
        thin = check_positive_int(thin, "thin")
        x0 = np.zeros(self.target.dim) if x0 is None else x0
        rec = run_chain(self.target, self.kind_, x0, burn_in + (n_samples - 1) * thin, 1, self._rng, grids=self.grids_, on_grid=self.on_grid)
        return rec.x[burn_in::thin][:n_samples]


class CouplingEstimator(BaseEstimator):
    """Estimate the one-application meeting probability for pairs of start points.

    ``fit(X, Y)`` pairs row ``i`` of ``X`` with row ``i`` of ``Y``.  After
    fitting, ``tv_upper_ = 1 - meeting_prob_ + 3 * stderr_`` is a
    high-confidence upper bound on the TV distance between the kernel laws.
    """

    def __init__(self, target=None, kernel="systematic", n_reps=10_000, grid_size=DEFAULT_GRID_SIZE, on_grid=False, random_state=None):
        self.target = target
        self.kernel = kernel
        self.n_reps = n_reps
        self.grid_size = grid_size
        self.on_grid = on_grid
        self.random_state = random_state

    def fit(self, X, Y):
        target = _check_target(self.target)
        X = check_states(X, target.dim, target.box)
        Y = check_states(Y, target.dim, target.box)
        if X.shape != Y.shape:
            raise DomainError("X and Y must have the same shape")
        kind = KernelKind.parse(self.kernel)
        grids = make_grids(target, self.grid_size)
        rng = check_random_state(self.random_state)
        children = rng.spawn(X.shape[0])
        est = [
            estimate_meeting_probability(target, kind, x, y, self.n_reps, child, grids=grids, on_grid=self.on_grid)
            for x, y, child in zip(X, Y, children)
        ]
        self.distance_ = np.linalg.norm(X - Y, axis=1)
        self.meeting_prob_ = np.array([e.estimate for e in est])
        self.stderr_ = np.array([e.stderr for e in est])
        self.tv_upper_ = np.minimum(1.0, 1.0 - self.meeting_prob_ + 3.0 * self.stderr_)
        self.n_features_in_ = target.dim
        return self
