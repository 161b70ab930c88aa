"""EM engine: E-step, M-steps, initialization, and the full fit loop."""

import logging
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats as scipy_stats

from gmr import (
    AllRestartsFailedError,
    EmConfig,
    EmptyClusterError,
    Group,
    GroupedDataset,
    ModelParams,
    Responsibilities,
    SingularSystemError,
    TooFewGroupsError,
    compute_group_stats,
    e_step,
    fit,
    init_responsibilities,
    log_joint,
    log_marginal_likelihood,
    m_step_beta,
    m_step_pi,
    m_step_sigma2,
)


def make_dataset(groups):
    return GroupedDataset(tuple(Group(i, y, X) for i, (y, X) in enumerate(groups)))


def random_dataset(rng, R, p, n_lo=1, n_hi=6):
    groups = []
    for _ in range(R):
        n = int(rng.integers(n_lo, n_hi + 1))
        groups.append((rng.normal(size=n), rng.normal(size=(n, p))))
    return make_dataset(groups)


def random_tau(rng, R, K):
    raw = rng.dirichlet(np.ones(K), size=R)
    return Responsibilities(raw)


def brute_log_joint(d, params):
    """Per-observation reference: log pi_k + sum_i log phi(y_i; beta_k.x_i, sigma_k)."""
    R, K = d.R, params.K
    out = np.empty((R, K))
    for r, g in enumerate(d.groups):
        for k in range(K):
            mu = g.features @ params.beta[:, k]
            lp = scipy_stats.norm.logpdf(g.responses, mu, math.sqrt(params.sigma2[k]))
            with np.errstate(divide="ignore"):
                out[r, k] = np.log(params.pi[k]) + lp.sum()
    return out


# ---------------------------------------------------------------- log_joint


def test_log_joint_single_component_is_group_log_density():
    rng = np.random.default_rng(0)
    d = random_dataset(rng, R=3, p=2)
    params = ModelParams([1.0], rng.normal(size=(2, 1)), [1.7])
    lj = log_joint(compute_group_stats(d), params)
    assert_allclose(lj, brute_log_joint(d, params), rtol=1e-10, atol=1e-10)


def test_log_joint_identical_components_give_equal_columns():
    rng = np.random.default_rng(1)
    d = random_dataset(rng, R=4, p=2)
    b = rng.normal(size=2)
    params = ModelParams([0.5, 0.5], np.column_stack([b, b]), [2.0, 2.0])
    lj = log_joint(compute_group_stats(d), params)
    assert_allclose(lj[:, 0], lj[:, 1], atol=1e-12)


def test_log_joint_standard_normal_point():
    d = make_dataset([([0.0], [[1.0]])])
    params = ModelParams([1.0], [[0.0]], [1.0])
    lj = log_joint(compute_group_stats(d), params)
    # standard normal log-density at 0, checked against a scalar Gaussian oracle
    assert_allclose(lj[0, 0], -0.9189385332046727, atol=1e-12)
    assert_allclose(lj[0, 0], scipy_stats.norm.logpdf(0.0), atol=1e-12)


def test_log_joint_matches_per_observation_reference():
    rng = np.random.default_rng(2)
    for _ in range(10):
        R, p, K = int(rng.integers(1, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        d = random_dataset(rng, R, p)
        pi = rng.dirichlet(np.ones(K))
        params = ModelParams(pi, rng.normal(size=(p, K)), rng.uniform(0.5, 3.0, size=K))
        lj = log_joint(compute_group_stats(d), params)
        assert_allclose(lj, brute_log_joint(d, params), rtol=1e-9, atol=1e-9)


# ------------------------------------------------------------------ e_step


def test_e_step_equal_evidence():
    tau = e_step(np.array([[0.0, 0.0]]))
    assert_allclose(tau.tau, [[0.5, 0.5]])


def test_e_step_dominated_component():
    tau = e_step(np.array([[0.0, -1e9]]))
    assert tau.tau[0, 0] == 1.0
    assert tau.tau[0, 1] <= 1e-300


def test_e_step_direct_normalization():
    tau = e_step(np.log(np.array([[2.0, 6.0]])))
    assert_allclose(tau.tau, [[0.25, 0.75]], atol=1e-15)


def test_e_step_rows_sum_to_one():
    rng = np.random.default_rng(3)
    lj = rng.normal(scale=50, size=(20, 4))
    tau = e_step(lj)
    assert_allclose(tau.tau.sum(axis=1), 1.0, atol=1e-12)


# ------------------------------------------------------- log marginal


def test_log_marginal_single_component():
    lj = np.array([[-1.5], [-2.5], [0.5]])
    assert_allclose(log_marginal_likelihood(lj), -3.5, atol=1e-12)


def test_log_marginal_additive_over_groups():
    rng = np.random.default_rng(4)
    lj = rng.normal(size=(3, 2))
    both = log_marginal_likelihood(np.vstack([lj, lj[1:2]]))
    assert_allclose(both, log_marginal_likelihood(lj) + log_marginal_likelihood(lj[1:2]))


def test_log_marginal_direct_sum():
    lj = np.log(np.array([[0.3, 0.2]]))
    assert_allclose(log_marginal_likelihood(lj), math.log(0.5), atol=1e-12)


# ---------------------------------------------------------------- m_step_pi


def test_m_step_pi_counting():
    tau = Responsibilities([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    assert_allclose(m_step_pi(tau), [2 / 3, 1 / 3])


def test_m_step_pi_uniform():
    tau = Responsibilities(np.full((5, 2), 0.5))
    assert_allclose(m_step_pi(tau), [0.5, 0.5])


def test_m_step_pi_column_means():
    tau = Responsibilities([[0.9, 0.1], [0.3, 0.7]])
    assert_allclose(m_step_pi(tau), [0.6, 0.4], atol=1e-15)


# -------------------------------------------------------------- m_step_beta


def brute_wls(d, tau, k):
    """Per-observation weighted least squares with weight tau[r, k] on group r."""
    y, X, _ = d.stacked
    w = np.repeat(tau.tau[:, k], d.n_r)
    A = (X * w[:, None]).T @ X
    b = (X * w[:, None]).T @ y
    return np.linalg.solve(A, b)


def test_m_step_beta_single_cluster_is_pooled_ols():
    rng = np.random.default_rng(5)
    d = random_dataset(rng, R=4, p=2, n_lo=2, n_hi=5)
    tau = Responsibilities(np.ones((4, 1)))
    beta = m_step_beta(compute_group_stats(d), tau, ridge=0.0)
    y, X, _ = d.stacked
    ols, *_ = np.linalg.lstsq(X, y, rcond=None)
    assert_allclose(beta[:, 0], ols, rtol=1e-8, atol=1e-10)


def test_m_step_beta_recovers_noiseless_coefficients():
    rng = np.random.default_rng(6)
    p, K = 2, 2
    true = rng.normal(size=(p, K))
    groups, labels = [], [0, 1, 0, 1]
    for lab in labels:
        X = rng.normal(size=(4, p))
        groups.append((X @ true[:, lab], X))
    d = make_dataset(groups)
    tau = Responsibilities(np.eye(K)[labels])
    beta = m_step_beta(compute_group_stats(d), tau)
    assert_allclose(beta, true, atol=1e-8)


def test_m_step_beta_matches_weighted_ols_oracle():
    rng = np.random.default_rng(7)
    for _ in range(25):
        R, p = 3, 2
        d = random_dataset(rng, R, p, n_lo=2, n_hi=2)
        tau = random_tau(rng, R, K=2)
        beta = m_step_beta(compute_group_stats(d), tau, ridge=0.0)
        for k in range(2):
            assert_allclose(beta[:, k], brute_wls(d, tau, k), rtol=1e-9, atol=1e-9)


def test_m_step_beta_empty_cluster():
    rng = np.random.default_rng(8)
    d = random_dataset(rng, R=3, p=1)
    tau = Responsibilities([[1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
    with pytest.raises(EmptyClusterError):
        m_step_beta(compute_group_stats(d), tau)


def test_m_step_beta_singular_system():
    # all-zero features leave nothing for the relative ridge to scale
    d = make_dataset([([1.0, 2.0], [[0.0], [0.0]])])
    tau = Responsibilities(np.ones((1, 1)))
    with pytest.raises(SingularSystemError):
        m_step_beta(compute_group_stats(d), tau)


def test_m_step_beta_ridge_rescues_duplicate_columns():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(6, 1))
    d = make_dataset([(rng.normal(size=6), np.hstack([X, X]))])
    tau = Responsibilities(np.ones((1, 1)))
    beta = m_step_beta(compute_group_stats(d), tau)
    assert np.isfinite(beta).all()


# ------------------------------------------------------------ m_step_sigma2


def test_m_step_sigma2_floor_on_exact_fit():
    rng = np.random.default_rng(10)
    true = np.array([[1.5], [-0.5]])
    groups = []
    for _ in range(3):
        X = rng.normal(size=(3, 2))
        groups.append((X @ true[:, 0], X))
    d = make_dataset(groups)
    tau = Responsibilities(np.ones((3, 1)))
    s2 = m_step_sigma2(d, tau, true, floor=1e-6)
    assert_allclose(s2, [1e-6])


def test_m_step_sigma2_mean_square():
    d = make_dataset([([1.0, -1.0], [[0.0], [0.0]])])
    tau = Responsibilities(np.ones((1, 1)))
    s2 = m_step_sigma2(d, tau, np.zeros((1, 1)), floor=1e-12)
    assert_allclose(s2, [1.0])


def test_m_step_sigma2_weighted_average():
    # groups with mean squared residuals 1 and 3 under beta = 0
    d = make_dataset(
        [
            ([1.0, -1.0], [[0.0], [0.0]]),
            ([math.sqrt(3), -math.sqrt(3)], [[0.0], [0.0]]),
        ]
    )
    tau = Responsibilities([[0.25, 0.75], [0.75, 0.25]])
    s2 = m_step_sigma2(d, tau, np.zeros((1, 2)), floor=1e-12)
    assert_allclose(s2, [2.5, 1.5], atol=1e-12)


# ----------------------------------------------------- init_responsibilities


def test_init_random_hard_one_hot_and_nonempty():
    for seed in range(10):
        tau = init_responsibilities(4, 2, strategy="random_hard", seed=seed)
        assert set(np.unique(tau.tau)) <= {0.0, 1.0}
        assert (tau.tau.sum(axis=0) > 0).all()


def test_init_random_soft_rows_sum_to_one():
    tau = init_responsibilities(6, 3, strategy="random_soft", seed=0)
    assert_allclose(tau.tau.sum(axis=1), 1.0, atol=1e-12)
    assert not np.isin(tau.tau, (0.0, 1.0)).all()


def test_init_hard_needs_enough_groups():
    with pytest.raises(TooFewGroupsError):
        init_responsibilities(2, 3, strategy="random_hard", seed=0)
    init_responsibilities(2, 3, strategy="random_soft", seed=0)


def test_init_kmeans_requires_stats():
    with pytest.raises(ValueError):
        init_responsibilities(4, 2, strategy="kmeans_on_group_coefs", seed=0)


def test_init_kmeans_recovers_separated_partition():
    rng = np.random.default_rng(12)
    true = np.array([[10.0, -10.0], [10.0, -10.0]])
    labels = [0, 0, 0, 1, 1, 1]
    groups = []
    for lab in labels:
        X = rng.normal(size=(6, 2))
        groups.append((X @ true[:, lab] + 0.01 * rng.normal(size=6), X))
    d = make_dataset(groups)
    stats = compute_group_stats(d)
    tau = init_responsibilities(6, 2, strategy="kmeans_on_group_coefs", seed=0, stats=stats)
    got = tau.hard_labels()

    # oracle: exhaustive enumeration of 2-partitions by k-means objective
    coefs = np.array([np.linalg.solve(stats.sigma_hat[r], stats.rho_hat[r]) for r in range(6)])
    best_cost, best_assign = np.inf, None
    for mask in range(1, 2**5):  # group 0 fixed to side 0
        assign = np.array([0] + [(mask >> i) & 1 for i in range(5)])
        if len(set(assign)) < 2:
            continue
        cost = sum(
            ((coefs[assign == c] - coefs[assign == c].mean(axis=0)) ** 2).sum()
            for c in (0, 1)
        )
        if cost < best_cost:
            best_cost, best_assign = cost, assign
    same = (got == best_assign).all() or (got == 1 - best_assign).all()
    assert same


# -------------------------------------------------------------------- fit


def test_fit_single_cluster_is_pooled_ols():
    rng = np.random.default_rng(13)
    d = random_dataset(rng, R=5, p=2, n_lo=3, n_hi=6)
    res = fit(d, EmConfig(K=1, seed=0))
    y, X, _ = d.stacked
    ols, *_ = np.linalg.lstsq(X, y, rcond=None)
    assert_allclose(res.params.beta[:, 0], ols, rtol=1e-6, atol=1e-8)
    assert_allclose(res.params.pi, [1.0])
    assert_allclose(res.params.sigma2[0], np.mean((y - X @ ols) ** 2), rtol=1e-6)
    assert res.n_iter <= 2
    assert res.converged


def test_fit_noiseless_separable_toy():
    # two exact lines y=x and y=2x over four groups
    xs = [np.array([1.0, 2.0]), np.array([3.0, -1.0]), np.array([0.5, 2.5]), np.array([-2.0, 1.0])]
    slopes = [1.0, 1.0, 2.0, 2.0]
    d = make_dataset([(s * x, x[:, None]) for s, x in zip(slopes, xs)])
    res = fit(d, EmConfig(K=2, seed=0))
    hard = res.tau.hard_labels()
    assert hard[0] == hard[1] and hard[2] == hard[3] and hard[0] != hard[2]
    assert_allclose(np.sort(res.params.beta[0]), [1.0, 2.0], atol=1e-6)
    assert set(np.round(res.tau.tau.ravel(), 6)) <= {0.0, 1.0}


def test_fit_k_exceeding_groups_warns_and_runs(caplog):
    rng = np.random.default_rng(14)
    d = random_dataset(rng, R=2, p=1, n_lo=3, n_hi=5)
    with caplog.at_level(logging.WARNING, logger="gmr.em"):
        res = fit(d, EmConfig(K=3, seed=1))
    assert any("exceeds the number of groups" in m for m in caplog.messages)
    assert res.params.K == 3


def test_fit_ll_trace_monotone_and_final():
    rng = np.random.default_rng(15)
    d = random_dataset(rng, R=8, p=2, n_lo=3, n_hi=6)
    res = fit(d, EmConfig(K=2, seed=2))
    trace = res.ll_trace
    slack = 1e-8 * (1.0 + np.abs(trace[:-1]))
    assert (np.diff(trace) >= -slack).all()
    assert_allclose(trace[-1], res.log_likelihood)
    assert res.n_iter == len(trace)


def test_fit_deterministic_under_seed():
    rng = np.random.default_rng(16)
    d = random_dataset(rng, R=6, p=2, n_lo=2, n_hi=5)
    a = fit(d, EmConfig(K=2, seed=7))
    b = fit(d, EmConfig(K=2, seed=7))
    assert a.log_likelihood == b.log_likelihood
    assert (a.tau.tau == b.tau.tau).all()
    assert (a.params.beta == b.params.beta).all()


def test_fit_constant_response_uses_absolute_floor():
    d = make_dataset([(np.ones(4), np.ones((4, 1))), (np.ones(3), np.ones((3, 1)))])
    res = fit(d, EmConfig(K=1, seed=0))
    assert res.params.sigma2[0] == pytest.approx(1e-8)


def test_fit_all_restarts_failed():
    d = make_dataset([([1.0, 2.0], [[0.0], [0.0]]), ([3.0], [[0.0]])])
    with pytest.raises(AllRestartsFailedError) as exc_info:
        fit(d, EmConfig(K=1, n_restarts=2, seed=0))
    assert len(exc_info.value.reasons) == 2


def test_fit_group_ids_follow_dataset_order():
    d = GroupedDataset(
        tuple(
            Group(name, [1.0, 2.0], [[1.0], [2.0]])
            for name in ("store-b", "store-a", "store-c")
        )
    )
    res = fit(d, EmConfig(K=1, seed=0))
    assert res.group_ids == ("store-b", "store-a", "store-c")


def test_em_config_validation():
    with pytest.raises(ValueError):
        EmConfig(K=0)
    with pytest.raises(ValueError):
        EmConfig(K=2, epsilon=0.0)
    with pytest.raises(ValueError):
        EmConfig(K=2, max_iter=0)
    with pytest.raises(ValueError):
        EmConfig(K=2, n_restarts=0)
    with pytest.raises(ValueError):
        EmConfig(K=2, init="nope")
    with pytest.raises(ValueError):
        EmConfig(K=2, sigma2_floor=0.0)
