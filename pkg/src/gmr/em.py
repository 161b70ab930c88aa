"""EM estimation of a mixture of Gaussian linear regressions over grouped data.

Model: K clusters, cluster k has coefficients beta_k and noise variance
sigma2_k.  Every observation of group r shares one latent cluster z_r, so a
group's likelihood under cluster k is the product of its n_r per-observation
Gaussian densities.  That product underflows already for moderate group sizes,
so the E-step works on log densities throughout and normalizes with
log-sum-exp.

The M-steps are closed forms in the cached group moments: pi is the mean
responsibility, beta_k solves a weighted normal-equation system pooled over
groups, and sigma2_k is a weighted average of per-group mean squared
residuals.  Group weights enter only through w_rk = n_r * tau_rk and its
column normalization, so all heavy lifting is O(R) per cluster regardless of
the raw observation count, except for the residual pass in the sigma2 update.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from .data import (
    GroupedDataset,
    GroupStats,
    ModelParams,
    Responsibilities,
    compute_group_stats,
)
from .errors import (
    AllRestartsFailedError,
    DimensionMismatchError,
    EmptyClusterError,
    NonFiniteError,
    SingularSystemError,
    TooFewGroupsError,
)

__all__ = [
    "EmConfig",
    "FitResult",
    "e_step",
    "fit",
    "init_responsibilities",
    "log_joint",
    "log_marginal_likelihood",
    "m_step_beta",
    "m_step_pi",
    "m_step_sigma2",
]

logger = logging.getLogger(__name__)

# A cluster whose pooled weight falls below this fraction of the total
# observation count is declared empty and the restart abandoned.
EMPTY_CLUSTER_REL_TOL = 1e-12

# Ridge escalation ceiling for the normal-equation solves (relative to the
# mean diagonal of the system matrix).
RIDGE_MAX_REL = 1e-4

# Relative variance floor applied when EmConfig.sigma2_floor is not given.
VAR_FLOOR_REL = 1e-8

# Per-group ridge used when extracting coefficient vectors for the k-means
# initialization (groups can be smaller than p, so their moment matrices are
# routinely rank deficient).
GROUP_COEF_RIDGE_REL = 1e-6

KMEANS_ITERS = 50

InitStrategy = Literal["random_soft", "random_hard", "kmeans_on_group_coefs"]
_HARD_STRATEGIES = ("random_hard", "kmeans_on_group_coefs")


@dataclass(frozen=True)
class EmConfig:
    """Settings for `fit`.

    Parameters
    ----------
    K : int
        Number of clusters, at least 1.
    epsilon : float
        Convergence threshold on the absolute sup-norm change of the
        responsibility matrix between consecutive iterations.
    max_iter : int
        Iteration cap per restart.
    n_restarts : int
        Independent initializations; the restart with the highest final
        observed-data log-likelihood wins.
    init : str
        Initialization strategy, see `init_responsibilities`.
    sigma2_floor : float or None
        Minimum noise variance.  ``None`` means ``1e-8 * var(y)`` computed
        from the dataset at fit time.
    ridge : float
        Regularizer for the beta solve, relative to ``trace(system)/p``.
        Escalated by factors of 10 up to 1e-4 before a system is declared
        singular.
    seed : int or None
        Master seed; per-restart seeds are derived from it deterministically.
    """

    K: int
    epsilon: float = 1e-6
    max_iter: int = 200
    n_restarts: int = 10
    init: InitStrategy = "random_hard"
    sigma2_floor: float | None = None
    ridge: float = 1e-10
    seed: int | None = None

    def __post_init__(self):
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.n_restarts < 1:
            raise ValueError("n_restarts must be at least 1")
        if self.init not in ("random_soft",) + _HARD_STRATEGIES:
            raise ValueError(f"unknown init strategy {self.init!r}")
        if self.sigma2_floor is not None and not self.sigma2_floor > 0:
            raise ValueError("sigma2_floor must be positive when given")
        if self.ridge < 0:
            raise ValueError("ridge must be nonnegative")


@dataclass(frozen=True)
class FitResult:
    """Outcome of `fit`: the winning restart.

    ``ll_trace`` holds the observed-data log-likelihood after each iteration's
    M-step and is non-decreasing within a slack of ``1e-8 * (1 + |ll|)`` per
    step.  ``group_ids`` records the training group order so that rows of
    ``tau`` can be linked to new data later (models loaded from disk carry
    ``ll_trace=None``).
    """

    params: ModelParams
    tau: Responsibilities
    group_ids: tuple[str, ...]
    log_likelihood: float
    n_iter: int
    converged: bool
    ll_trace: NDArray[np.float64] | None


def log_joint(stats: GroupStats, params: ModelParams) -> NDArray[np.float64]:
    """Log joint density of (group r, cluster k) up to the fixed features.

    Entry (r, k) is ``log pi_k + sum_i log phi_{sigma_k}(y_ri - beta_k' x_ri)``
    where phi_s is the normal density with standard deviation s.  The residual
    sum is assembled from the cached group moments: with E_rk the mean squared
    residual of group r under beta_k,

        entry(r, k) = log pi_k - (n_r / 2) log(2 pi sigma2_k)
                      - n_r E_rk / (2 sigma2_k).

    Raises
    ------
    NonFiniteError
        If any sigma2 entry is not strictly positive.
    DimensionMismatchError
        If the feature dimensions of stats and params disagree.
    """
    if (params.sigma2 <= 0).any():
        raise NonFiniteError("sigma2 entries must be strictly positive")
    if stats.p != params.p:
        raise DimensionMismatchError(
            f"stats have p={stats.p} but params have p={params.p}"
        )
    B = params.beta  # (p, K)
    quad = np.einsum("rij,ik,jk->rk", stats.sigma_hat, B, B, optimize=True)
    cross = stats.rho_hat @ B  # (R, K)
    E = stats.y_sq_mean[:, None] - 2.0 * cross + quad  # mean squared residuals
    n_r = stats.n_r[:, None].astype(float)
    with np.errstate(divide="ignore"):  # pi_k == 0 legitimately maps to -inf
        log_pi = np.log(params.pi)
    norm_const = -0.5 * np.log(2.0 * np.pi * params.sigma2)
    return log_pi[None, :] + n_r * norm_const[None, :] - n_r * E / (2.0 * params.sigma2[None, :])


def e_step(log_joint_matrix: NDArray[np.float64]) -> Responsibilities:
    """Normalize log joint scores into per-group posterior rows.

    ``tau[r, k] = exp(lj[r, k] - logsumexp_k lj[r, :])``; each row sums to 1.
    Entries of ``-inf`` (impossible clusters) are handled exactly; rows must
    contain at least one finite entry.
    """
    lj = np.asarray(log_joint_matrix, dtype=float)
    norm = logsumexp(lj, axis=1, keepdims=True)
    return Responsibilities(np.exp(lj - norm))


def log_marginal_likelihood(log_joint_matrix: NDArray[np.float64]) -> float:
    """Observed-data log-likelihood: sum over groups of logsumexp over clusters."""
    lj = np.asarray(log_joint_matrix, dtype=float)
    return float(logsumexp(lj, axis=1).sum())


def m_step_pi(tau: Responsibilities) -> NDArray[np.float64]:
    """Update mixture weights: column means of the responsibility matrix."""
    return tau.tau.mean(axis=0)


def _solve_spd(A: np.ndarray, b: np.ndarray, rel_ridge: float) -> np.ndarray:
    """Solve ``(A + lambda I) x = b`` with A symmetric PSD.

    ``lambda = rel_ridge * trace(A)/p``.  If the Cholesky factorization fails,
    the relative ridge escalates by factors of 10 up to ``RIDGE_MAX_REL``
    before `SingularSystemError` is raised.  ``rel_ridge=0`` attempts a plain
    solve first and then enters the escalation ladder at 1e-10.
    """
    p = A.shape[0]
    scale = np.trace(A) / p
    lam = rel_ridge
    while True:
        try:
            c_and_low = cho_factor(A + lam * scale * np.eye(p), lower=True)
            return cho_solve(c_and_low, b)
        except np.linalg.LinAlgError:
            lam = 1e-10 if lam == 0 else lam * 10.0
            if lam > RIDGE_MAX_REL * 1.5:
                raise SingularSystemError(
                    f"normal equations singular even at relative ridge {RIDGE_MAX_REL}"
                ) from None


def m_step_beta(
    stats: GroupStats, tau: Responsibilities, ridge: float = 1e-10
) -> NDArray[np.float64]:
    """Update coefficients: per-cluster weighted normal equations.

    With weights ``w_rk = n_r tau_rk`` normalized over groups to ``w_check``,
    cluster k solves

        (sum_r w_check[r, k] sigma_hat[r] + lambda I) beta_k
            = sum_r w_check[r, k] rho_hat[r]

    via a symmetric positive-definite factorization.  This equals the normal
    equations of a per-observation least squares problem where every
    observation of group r carries weight ``tau_rk``.

    Raises
    ------
    EmptyClusterError
        If some cluster's pooled weight ``sum_r w_rk`` falls below
        ``1e-12 * sum_r n_r``; the caller should abandon the restart.
    SingularSystemError
        If a system stays unfactorizable through the ridge escalation.
    """
    n_r = stats.n_r[:, None].astype(float)
    w = n_r * tau.tau  # (R, K)
    w_plus = w.sum(axis=0)
    n_total = float(stats.n_r.sum())
    if (w_plus < EMPTY_CLUSTER_REL_TOL * n_total).any():
        k_bad = int(np.argmin(w_plus))
        raise EmptyClusterError(
            f"cluster {k_bad} holds weight {w_plus[k_bad]:.3e} of {n_total:.0f} observations"
        )
    w_check = w / w_plus
    pooled_sigma = np.einsum("rk,rij->kij", w_check, stats.sigma_hat, optimize=True)
    pooled_rho = w_check.T @ stats.rho_hat  # (K, p)
    K, p = pooled_rho.shape
    beta = np.empty((p, K))
    for k in range(K):
        beta[:, k] = _solve_spd(pooled_sigma[k], pooled_rho[k], ridge)
    return beta


def _mean_sq_residuals(d: GroupedDataset, beta: np.ndarray) -> NDArray[np.float64]:
    """Per-group mean squared residual under each cluster's coefficients, (R, K)."""
    y, X, offsets = d.stacked
    resid_sq = (y[:, None] - X @ beta) ** 2  # (n, K)
    sums = np.add.reduceat(resid_sq, offsets, axis=0)
    return sums / d.n_r[:, None]


def m_step_sigma2(
    d: GroupedDataset,
    tau: Responsibilities,
    beta: NDArray[np.float64],
    floor: float,
) -> NDArray[np.float64]:
    """Update noise variances: weighted average of mean squared residuals.

    ``sigma2_k = max(floor, sum_r w_check[r, k] * E_rk)`` where E_rk is
    computed by a direct residual pass over group r with the freshly updated
    beta.  The floor keeps every variance strictly positive even when a
    cluster interpolates its groups exactly.
    """
    E = _mean_sq_residuals(d, beta)
    w = d.n_r[:, None].astype(float) * tau.tau
    w_plus = w.sum(axis=0)
    safe = np.where(w_plus > 0, w_plus, 1.0)  # empty column -> weighted sum 0 -> floor
    sigma2 = np.einsum("rk,rk->k", w / safe, E)
    return np.maximum(floor, sigma2)


def _repair_hard_labels(labels: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    """Reassign random donor groups until every cluster owns at least one."""
    labels = labels.copy()
    counts = np.bincount(labels, minlength=K)
    for k in range(K):
        if counts[k] > 0:
            continue
        donors = np.flatnonzero(counts[labels] >= 2)
        i = donors[rng.integers(donors.size)]
        counts[labels[i]] -= 1
        labels[i] = k
        counts[k] += 1
    return labels


def _kmeans(points: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    """Plain k-means with k-means++ seeding; returns labels with no empty cluster."""
    R = points.shape[0]
    centers = np.empty((K, points.shape[1]))
    centers[0] = points[rng.integers(R)]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, K):
        total = closest.sum()
        if total > 0:
            idx = rng.choice(R, p=closest / total)
        else:  # all points coincide with a chosen center
            idx = rng.integers(R)
        centers[j] = points[idx]
        closest = np.minimum(closest, ((points - centers[j]) ** 2).sum(axis=1))

    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = d2.argmin(axis=1)
    for _ in range(KMEANS_ITERS):
        labels = _fill_empty_clusters(labels, d2, K)
        for k in range(K):
            centers[k] = points[labels == k].mean(axis=0)
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = d2.argmin(axis=1)
        if (new_labels == labels).all():
            break
        labels = new_labels
    return _fill_empty_clusters(labels, d2, K)


def _fill_empty_clusters(labels: np.ndarray, d2: np.ndarray, K: int) -> np.ndarray:
    """Give each empty cluster the point currently worst-served by its own center."""
    labels = labels.copy()
    counts = np.bincount(labels, minlength=K)
    for k in range(K):
        if counts[k] > 0:
            continue
        own = d2[np.arange(labels.size), labels]
        own = np.where(counts[labels] >= 2, own, -np.inf)  # never empty another cluster
        i = int(np.argmax(own))
        counts[labels[i]] -= 1
        labels[i] = k
        counts[k] += 1
    return labels


def init_responsibilities(
    R: int,
    K: int,
    strategy: InitStrategy = "random_hard",
    seed=None,
    stats: GroupStats | None = None,
) -> Responsibilities:
    """Draw an initial responsibility matrix.

    Strategies
    ----------
    random_soft
        Each row uniform on the probability simplex.
    random_hard
        Each group assigned one cluster uniformly at random, followed by a
        repair pass that guarantees every cluster owns at least one group.
    kmeans_on_group_coefs
        Solve a small ridge regression per group (ridge
        ``1e-6 * trace(sigma_hat_r)/p``), cluster the coefficient vectors with
        k-means (k-means++ seeding, 50 iterations), and convert the labels to
        indicator rows.  Requires ``stats``.

    Raises
    ------
    TooFewGroupsError
        If R < K under a hard strategy (indicator rows could not cover all
        clusters).
    """
    rng = np.random.default_rng(seed)
    if strategy == "random_soft":
        return Responsibilities(rng.dirichlet(np.ones(K), size=R))
    if R < K:
        raise TooFewGroupsError(f"{strategy} needs R >= K, got R={R}, K={K}")
    if strategy == "random_hard":
        labels = _repair_hard_labels(rng.integers(K, size=R), K, rng)
    elif strategy == "kmeans_on_group_coefs":
        if stats is None:
            raise ValueError("kmeans_on_group_coefs requires group stats")
        coefs = np.empty((R, stats.p))
        for r in range(R):
            coefs[r] = _solve_spd(stats.sigma_hat[r], stats.rho_hat[r], GROUP_COEF_RIDGE_REL)
        labels = _kmeans(coefs, K, rng)
    else:
        raise ValueError(f"unknown init strategy {strategy!r}")
    return Responsibilities(np.eye(K)[labels])


def _run_restart(
    d: GroupedDataset,
    stats: GroupStats,
    cfg: EmConfig,
    strategy: InitStrategy,
    floor: float,
    seed,
) -> FitResult:
    tau = init_responsibilities(d.R, cfg.K, strategy, seed, stats=stats)
    ll_trace = np.empty(cfg.max_iter)
    converged = False
    n_iter = 0
    for t in range(cfg.max_iter):
        pi = m_step_pi(tau)
        beta = m_step_beta(stats, tau, cfg.ridge)
        sigma2 = m_step_sigma2(d, tau, beta, floor)
        params = ModelParams(pi=pi, beta=beta, sigma2=sigma2)
        lj = log_joint(stats, params)
        ll_trace[t] = log_marginal_likelihood(lj)
        new_tau = e_step(lj)
        delta = np.abs(new_tau.tau - tau.tau).max()
        tau = new_tau
        n_iter = t + 1
        if delta < cfg.epsilon:
            converged = True
            break
    trace = ll_trace[:n_iter].copy()
    trace.setflags(write=False)
    return FitResult(
        params=params,
        tau=tau,
        group_ids=d.group_ids,
        log_likelihood=float(trace[-1]),
        n_iter=n_iter,
        converged=converged,
        ll_trace=trace,
    )


def fit(d: GroupedDataset, cfg: EmConfig) -> FitResult:
    """Fit the mixture by EM with restarts; the best final log-likelihood wins.

    Each restart initializes responsibilities, then iterates the update cycle
    (pi, beta, sigma2, responsibilities) until the responsibility matrix moves
    less than ``cfg.epsilon`` in sup norm or ``cfg.max_iter`` is reached.
    Restarts that lose a cluster or hit an unsolvable system are recorded and
    skipped.  ``K > R`` is allowed but cannot use a hard initialization, so
    such fits fall back to ``random_soft`` with a warning.

    Raises
    ------
    AllRestartsFailedError
        If every restart was abandoned; carries the per-restart reasons.
    """
    stats = compute_group_stats(d)
    strategy = cfg.init
    if cfg.K > d.R:
        logger.warning(
            "K=%d exceeds the number of groups R=%d; the posterior cannot "
            "populate every cluster",
            cfg.K,
            d.R,
        )
        if strategy in _HARD_STRATEGIES:
            logger.warning("falling back to random_soft initialization")
            strategy = "random_soft"
    if cfg.sigma2_floor is not None:
        floor = cfg.sigma2_floor
    else:
        y = d.stacked[0]
        var_y = float(np.var(y))
        # A constant response would zero the relative floor; keep it positive.
        floor = VAR_FLOOR_REL * var_y if var_y > 0 else VAR_FLOOR_REL

    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.n_restarts)
    best: FitResult | None = None
    failures: list[tuple[int, str]] = []
    for i, child in enumerate(seeds):
        try:
            result = _run_restart(d, stats, cfg, strategy, floor, child)
        except (EmptyClusterError, SingularSystemError) as exc:
            logger.debug("restart %d abandoned: %s", i, exc)
            failures.append((i, f"{type(exc).__name__}: {exc}"))
            continue
        logger.debug(
            "restart %d: ll=%.6f iters=%d converged=%s",
            i,
            result.log_likelihood,
            result.n_iter,
            result.converged,
        )
        if best is None or result.log_likelihood > best.log_likelihood:
            best = result
    if best is None:
        raise AllRestartsFailedError(failures)
    if failures:
        logger.info("%d of %d restarts abandoned", len(failures), cfg.n_restarts)
    return best
