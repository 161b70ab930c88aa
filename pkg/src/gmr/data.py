"""Core containers for grouped regression data.

A dataset is an ordered collection of groups.  Every observation in a group is
known to come from a single latent regression cluster, so posteriors live at
the group level while responses and features live at the observation level.
Per-group second moments are computed once (`compute_group_stats`) and reused
by the EM engine, which then only needs the raw observations for residual
passes.

All containers are frozen dataclasses holding read-only arrays; they are safe
to share across threads and between operations without copying.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.typing import NDArray

from .errors import (
    DimensionMismatchError,
    DuplicateGroupIdError,
    EmptyGroupError,
    NonFiniteError,
)

__all__ = [
    "Group",
    "GroupedDataset",
    "GroupStats",
    "ModelParams",
    "Responsibilities",
    "compute_group_stats",
    "validate_dataset",
]


def _readonly(x, dtype=float) -> np.ndarray:
    # Copy, then freeze: callers keep ownership of what they passed in, and
    # nothing downstream can mutate shared state.
    arr = np.array(x, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Group:
    """One group: a response vector and a row-per-observation feature matrix.

    Parameters
    ----------
    id : str
        Opaque external identifier.  Coerced to ``str`` so it can serve as a
        JSON key and a CSV cell unchanged.
    responses : array_like, shape (n_r,)
    features : array_like, shape (n_r, p)
        Row i is the feature vector of observation i.
    """

    id: str
    responses: NDArray[np.float64]
    features: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "id", str(self.id))
        object.__setattr__(self, "responses", _readonly(self.responses))
        object.__setattr__(self, "features", _readonly(self.features))
        if self.responses.ndim != 1:
            raise DimensionMismatchError("responses must be a 1-d vector")
        if self.features.ndim != 2:
            raise DimensionMismatchError("features must be a 2-d matrix")
        if self.features.shape[0] != self.responses.shape[0]:
            raise DimensionMismatchError(
                f"group {self.id!r}: {self.responses.shape[0]} responses but "
                f"{self.features.shape[0]} feature rows"
            )

    @property
    def n(self) -> int:
        """Number of observations in the group."""
        return self.responses.shape[0]


@dataclass(frozen=True)
class GroupedDataset:
    """Ordered collection of groups sharing one feature dimension.

    Group order is meaningful: responsibilities, labels and serialized output
    all follow it.  Construction is cheap and permissive; call
    `validate_dataset` (or any operation that requires a valid dataset) to
    enforce the full invariants.
    """

    groups: tuple[Group, ...]

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))

    @property
    def R(self) -> int:
        """Number of groups."""
        return len(self.groups)

    @property
    def p(self) -> int:
        """Feature dimension (taken from the first group)."""
        if not self.groups:
            raise EmptyGroupError("dataset has no groups")
        return self.groups[0].features.shape[1]

    @cached_property
    def group_ids(self) -> tuple[str, ...]:
        return tuple(g.id for g in self.groups)

    @cached_property
    def n_r(self) -> NDArray[np.int64]:
        """Per-group observation counts, shape (R,)."""
        return _readonly([g.n for g in self.groups], dtype=np.int64)

    @property
    def n(self) -> int:
        """Total number of observations."""
        return int(self.n_r.sum())

    @cached_property
    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Observations stacked group-contiguously.

        Returns
        -------
        y : ndarray, shape (n,)
        X : ndarray, shape (n, p)
        offsets : ndarray, shape (R,)
            Start index of each group's block; suitable for
            ``np.add.reduceat`` along axis 0.
        """
        y = _readonly(np.concatenate([g.responses for g in self.groups]))
        X = _readonly(np.concatenate([g.features for g in self.groups], axis=0))
        offsets = np.zeros(self.R, dtype=np.intp)
        np.cumsum(self.n_r[:-1], out=offsets[1:])
        offsets.setflags(write=False)
        return y, X, offsets


def validate_dataset(d: GroupedDataset) -> None:
    """Check all dataset invariants, raising on the first violation.

    Raises
    ------
    EmptyGroupError
        If the dataset has no groups, or some group has no observations.
    DimensionMismatchError
        If feature width varies across groups or p == 0.
    NonFiniteError
        If any response or feature is NaN or infinite.
    DuplicateGroupIdError
        If two groups share an id.
    """
    if d.R == 0:
        raise EmptyGroupError("dataset has no groups")
    p = d.p
    if p == 0:
        raise DimensionMismatchError("feature dimension must be at least 1")
    seen: set[str] = set()
    for g in d.groups:
        if g.id in seen:
            raise DuplicateGroupIdError(f"duplicate group id {g.id!r}")
        seen.add(g.id)
        if g.n == 0:
            raise EmptyGroupError(f"group {g.id!r} has no observations")
        if g.features.shape[1] != p:
            raise DimensionMismatchError(
                f"group {g.id!r} has {g.features.shape[1]} features, expected {p}"
            )
        if not np.isfinite(g.responses).all() or not np.isfinite(g.features).all():
            raise NonFiniteError(f"group {g.id!r} contains NaN or infinite values")


@dataclass(frozen=True)
class ModelParams:
    """Mixture parameters: weights pi, coefficients beta, noise variances sigma2.

    Parameters
    ----------
    pi : array_like, shape (K,)
        Mixture weights; nonnegative, summing to 1 within 1e-12.
    beta : array_like, shape (p, K)
        Column k holds the regression coefficients of cluster k.
    sigma2 : array_like, shape (K,)
        Per-cluster noise variances, strictly positive.
    """

    pi: NDArray[np.float64]
    beta: NDArray[np.float64]
    sigma2: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "pi", _readonly(self.pi))
        object.__setattr__(self, "beta", _readonly(self.beta))
        object.__setattr__(self, "sigma2", _readonly(self.sigma2))
        if self.pi.ndim != 1 or self.sigma2.ndim != 1 or self.beta.ndim != 2:
            raise DimensionMismatchError("pi and sigma2 must be vectors, beta a p x K matrix")
        K = self.pi.shape[0]
        if self.beta.shape[1] != K or self.sigma2.shape[0] != K:
            raise DimensionMismatchError(
                f"inconsistent cluster counts: pi has {K}, beta has "
                f"{self.beta.shape[1]}, sigma2 has {self.sigma2.shape[0]}"
            )
        for name in ("pi", "beta", "sigma2"):
            if not np.isfinite(getattr(self, name)).all():
                raise NonFiniteError(f"{name} contains NaN or infinite values")
        if (self.pi < 0).any() or abs(self.pi.sum() - 1.0) > 1e-12:
            raise ValueError("pi must be nonnegative and sum to 1 within 1e-12")
        if (self.sigma2 <= 0).any():
            raise ValueError("sigma2 entries must be strictly positive")

    @property
    def K(self) -> int:
        return self.pi.shape[0]

    @property
    def p(self) -> int:
        return self.beta.shape[0]


@dataclass(frozen=True)
class Responsibilities:
    """Posterior cluster memberships, one probability row per group.

    ``tau[r, k]`` is the posterior probability that group r belongs to
    cluster k.  Rows must sum to 1 within 1e-10.
    """

    tau: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "tau", _readonly(self.tau))
        if self.tau.ndim != 2:
            raise DimensionMismatchError("tau must be an R x K matrix")
        if not np.isfinite(self.tau).all():
            raise NonFiniteError("tau contains NaN or infinite values")
        if (self.tau < 0).any() or (self.tau > 1).any():
            raise ValueError("tau entries must lie in [0, 1]")
        if np.abs(self.tau.sum(axis=1) - 1.0).max() > 1e-10:
            raise ValueError("tau rows must sum to 1 within 1e-10")

    @property
    def R(self) -> int:
        return self.tau.shape[0]

    @property
    def K(self) -> int:
        return self.tau.shape[1]

    def hard_labels(self) -> NDArray[np.int64]:
        """Row argmax; ties break toward the lowest cluster index."""
        return np.argmax(self.tau, axis=1)


@dataclass(frozen=True)
class GroupStats:
    """Per-group second moments, computed once and reused across EM iterations.

    Attributes
    ----------
    sigma_hat : ndarray, shape (R, p, p)
        ``sigma_hat[r]`` is the mean outer product of the feature rows of
        group r (symmetric, positive semidefinite).
    rho_hat : ndarray, shape (R, p)
        ``rho_hat[r]`` is the mean of ``y_ri * x_ri`` over group r.
    n_r : ndarray, shape (R,)
        Group sizes.
    y_sq_mean : ndarray, shape (R,)
        Mean squared response per group.  Together with the moments above it
        lets the per-group mean squared residual of any coefficient vector be
        assembled without another pass over the observations.
    """

    sigma_hat: NDArray[np.float64]
    rho_hat: NDArray[np.float64]
    n_r: NDArray[np.int64]
    y_sq_mean: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "sigma_hat", _readonly(self.sigma_hat))
        object.__setattr__(self, "rho_hat", _readonly(self.rho_hat))
        object.__setattr__(self, "n_r", _readonly(self.n_r, dtype=np.int64))
        object.__setattr__(self, "y_sq_mean", _readonly(self.y_sq_mean))

    @property
    def R(self) -> int:
        return self.rho_hat.shape[0]

    @property
    def p(self) -> int:
        return self.rho_hat.shape[1]


def compute_group_stats(d: GroupedDataset) -> GroupStats:
    """Compute per-group moments once, before any EM iteration.

    For each group r with observations ``(y_ri, x_ri)``:

    - ``sigma_hat[r] = mean_i(x_ri x_ri^T)``
    - ``rho_hat[r]   = mean_i(y_ri x_ri)``
    - ``y_sq_mean[r] = mean_i(y_ri^2)``

    The dataset is validated first; see `validate_dataset` for the errors.
    """
    validate_dataset(d)
    R, p = d.R, d.p
    sigma_hat = np.empty((R, p, p))
    rho_hat = np.empty((R, p))
    y_sq = np.empty(R)
    for r, g in enumerate(d.groups):
        X, y = g.features, g.responses
        S = X.T @ X / g.n
        sigma_hat[r] = (S + S.T) / 2.0  # exact symmetry despite float addition order
        rho_hat[r] = y @ X / g.n
        y_sq[r] = np.mean(y * y)
    return GroupStats(sigma_hat=sigma_hat, rho_hat=rho_hat, n_r=d.n_r, y_sq_mean=y_sq)
