import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import rosenbrock, sphere
from pidtune.cmaes import (
    CmaEs,
    CmaParams,
    CmaState,
    default_population_size,
    expected_norm,
    pd_floor,
    rank_with_elitism,
    repair_pd,
    sample_population,
    tpa_factor,
    update_covariance_active,
    update_mean,
    update_paths,
    update_step_size_csa,
    update_step_size_tpa,
)
from pidtune.errors import ConfigError


# -- constants -----------------------------------------------------------------

@pytest.mark.parametrize("d,lam", [(1, 4), (2, 6), (6, 9), (9, 10)])
def test_default_population_size(d, lam):
    assert default_population_size(d) == lam


def test_default_population_size_rejects_zero():
    with pytest.raises(ConfigError):
        default_population_size(0)


@given(st.integers(1, 40), st.booleans())
@settings(max_examples=60)
def test_default_params_invariants(d, active):
    p = CmaParams.default(d, active=active)
    w = p.positive_weights
    assert p.mu == p.lam // 2
    assert np.all(w > 0) and np.all(np.diff(w) <= 0)
    assert w.sum() == pytest.approx(1.0)
    assert np.all(p.weights[p.mu:] <= 0)
    if not active:
        assert np.all(p.weights[p.mu:] == 0)
    assert 0 < p.c1 + p.c_mu <= 1
    assert 0 < p.c_sigma < 1 and p.d_sigma > 0 and 0 < p.c_c <= 1


def test_bad_mu_lambda_rejected():
    with pytest.raises(ConfigError):
        CmaParams.default(3, lam=1)
    with pytest.raises(ConfigError):
        CmaParams.default(3, lam=4, mu=5)


def exact_chi_mean(d):
    return math.sqrt(2.0) * math.exp(math.lgamma((d + 1) / 2) - math.lgamma(d / 2))


def test_expected_norm_within_1e_3_of_chi_mean():
    # the Monte-Carlo mean converges to the exact chi mean, checked separately below
    assert abs(expected_norm(6) - exact_chi_mean(6)) < 1e-3


@pytest.mark.parametrize("d", [2, 6, 9, 20])
def test_expected_norm_close_to_exact_chi_mean(d):
    assert expected_norm(d) == pytest.approx(exact_chi_mean(d), rel=1.5e-3)


def test_monte_carlo_agrees_with_exact_chi_mean():
    z = np.random.default_rng(1).standard_normal((1_000_000, 6))
    # standard error of the mean is about 7e-4
    assert abs(np.linalg.norm(z, axis=1).mean() - exact_chi_mean(6)) < 2.8e-3


@pytest.mark.xfail(strict=True, reason="the series evaluates to 2.3507 at d=6; 2.3470 is an arithmetic slip")
def test_expected_norm_quoted_value():
    assert expected_norm(6) == pytest.approx(2.3470, abs=1e-3)


# -- sampling --------------------------------------------------------------------

def test_sampling_degenerate_spread():
    st_ = CmaState.initial([1.0, -2.0], 1e-300)
    X = sample_population(st_, CmaParams.default(2), np.random.default_rng(0))
    assert np.max(np.abs(X - st_.mean)) < 1e-290


def test_sampling_unit_variance():
    p = CmaParams.default(3, lam=10000)
    X = sample_population(CmaState.initial(np.zeros(3), 1.0), p, np.random.default_rng(5))
    var = X.var(axis=0)
    assert np.all((var > 0.94) & (var < 1.06))


def test_sampling_deterministic():
    p = CmaParams.default(4)
    a = sample_population(CmaState.initial(np.zeros(4), 1.0), p, np.random.default_rng(9))
    b = sample_population(CmaState.initial(np.zeros(4), 1.0), p, np.random.default_rng(9))
    assert np.array_equal(a, b)


# -- ranking and mean ------------------------------------------------------------------

def test_rank_plain_sort():
    pop = [("a", 3.0), ("b", 1.0), ("c", 4.0), ("d", 2.0)]
    assert [x for x, _ in rank_with_elitism(pop, [], False)] == ["b", "d", "a", "c"]


def test_rank_elitist_union_and_tie_rule():
    ranked = rank_with_elitism([("x", 3.0), ("y", 1.0)], [("p", 0.5), ("q", 5.0)], True)
    assert ranked[0] == ("p", 0.5)
    assert len(ranked) == 4
    ranked = rank_with_elitism([("x", 2.0), ("y", 1.0)], [("p", 1.0)], True)
    assert [x for x, _ in ranked] == ["p", "y", "x"]
    assert [x for x, _ in rank_with_elitism([("x", 2.0)], [("p", 0.0)], False)] == ["x"]


def test_update_mean_examples():
    p = CmaParams.default(2, lam=4, mu=2)
    np.testing.assert_allclose(p.positive_weights, [0.8041, 0.1959], atol=1e-4)
    m, old = update_mean([np.array([0.0, 0.0]), np.array([2.0, 0.0])], p, np.ones(2))
    w2 = (math.log(2.5) - math.log(2)) / (2 * math.log(2.5) - math.log(2))
    np.testing.assert_allclose(m, [2 * w2, 0.0], rtol=1e-14)
    # 0.3918 is twice the rounded weight 0.1959; the exact mean is 0.39167
    np.testing.assert_allclose(m, [0.3918, 0.0], atol=2e-4)
    assert np.array_equal(old, np.ones(2))
    p.weights[:2] = [0.5, 0.5]
    m, _ = update_mean([np.array([0.0, 0.0]), np.array([2.0, 0.0])], p, np.zeros(2))
    np.testing.assert_allclose(m, [1.0, 0.0])
    p1 = CmaParams.default(2, lam=4, mu=1)
    m, _ = update_mean([np.array([3.0, 4.0]), np.array([0.0, 0.0])], p1, np.zeros(2))
    assert np.array_equal(m, [3.0, 4.0])


# -- evolution paths -----------------------------------------------------------------

def test_paths_decay_without_shift():
    p = CmaParams.default(3)
    s = CmaState.initial(np.zeros(3), 1.0)
    s.p_sigma = np.array([1.0, -2.0, 0.5])
    s.p_c = np.array([0.3, 0.1, -0.2])
    s.generation = 50
    ps, pc, _ = update_paths(s, np.zeros(3), np.zeros(3), p)
    np.testing.assert_allclose(ps, (1 - p.c_sigma) * s.p_sigma, rtol=1e-15)
    np.testing.assert_allclose(pc, (1 - p.c_c) * s.p_c, rtol=1e-15)


def test_single_step_path_value():
    p = CmaParams.default(3)
    s = CmaState.initial(np.zeros(3), 1.0)
    delta = np.array([0.1, -0.05, 0.02])
    ps, _, _ = update_paths(s, delta, np.zeros(3), p)
    np.testing.assert_allclose(ps, math.sqrt(p.c_sigma * (2 - p.c_sigma) * p.mu_eff) * delta, rtol=1e-12)


def test_path_geometric_fixed_point():
    p = CmaParams.default(4)
    s = CmaState.initial(np.zeros(4), 1.0)
    delta = np.array([0.01, 0.0, -0.01, 0.02])
    for _ in range(100):
        s.p_sigma, s.p_c, _ = update_paths(s, delta, np.zeros(4), p)
        s.generation += 1
    limit = math.sqrt(p.c_sigma * (2 - p.c_sigma) * p.mu_eff) * delta / p.c_sigma
    np.testing.assert_allclose(s.p_sigma, limit, rtol=1e-2)


# -- covariance ------------------------------------------------------------------------

def _random_setting(seed, d=4, active=True):
    rng = np.random.default_rng(seed)
    p = CmaParams.default(d, active=active)
    s = CmaState.initial(rng.standard_normal(d), 0.7)
    M = rng.standard_normal((d, d))
    s.C = M @ M.T + d * np.eye(d)
    X = sample_population(s, p, rng)
    return p, s, X, rng.standard_normal(d)


def test_covariance_unchanged_when_learning_off():
    p, s, X, pc = _random_setting(0)
    p.c1 = p.c_mu = 0.0
    C = update_covariance_active(s, X, s.mean, p, pc)
    np.testing.assert_allclose(C, s.C, rtol=0, atol=1e-12 * np.abs(s.C).max())


def test_active_branch_equals_passive_when_negative_weights_zero():
    p, s, X, pc = _random_setting(1)
    passive = CmaParams.default(4, active=False)
    p.weights[p.mu:] = 0.0
    a = update_covariance_active(s, X, s.mean, p, pc)
    b = update_covariance_active(s, X, s.mean, passive, pc)
    np.testing.assert_allclose(a, b, rtol=1e-14)


def test_passive_update_formula():
    p, s, X, pc = _random_setting(2, active=False)
    Y = (X - s.mean) / s.sigma
    w = p.weights
    expected = (1 - p.c1 - p.c_mu) * s.C + p.c1 * np.outer(pc, pc) + p.c_mu * (Y.T * w) @ Y
    np.testing.assert_allclose(update_covariance_active(s, X, s.mean, p, pc), expected, rtol=1e-12)


def test_repair_lifts_indefinite_matrix():
    C, repaired = repair_pd(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert repaired
    assert np.linalg.eigvalsh(C)[0] > pd_floor(C)
    np.linalg.cholesky(C)


def test_rosenbrock_500_generations_keep_c_symmetric_pd():
    es = CmaEs(np.zeros(6), 0.5, CmaParams.default(6), np.random.default_rng(3))
    for _ in range(500):
        X = es.ask()
        es.tell(X, [rosenbrock(x) for x in X])
        C = es.state.C
        assert np.max(np.abs(C - C.T)) < 1e-12
        assert np.linalg.eigvalsh(C)[0] > pd_floor(C)


# -- step size ----------------------------------------------------------------------------

def test_csa_neutral_and_shrink():
    p = CmaParams.default(5)
    s = CmaState.initial(np.zeros(5), 2.0)
    neutral = np.zeros(5)
    neutral[0] = p.chi_n
    assert update_step_size_csa(s, neutral, p) == pytest.approx(2.0, rel=1e-15)
    assert update_step_size_csa(s, np.zeros(5), p) == pytest.approx(2.0 * math.exp(-p.c_sigma / p.d_sigma))


def test_tpa_rules():
    p = CmaParams.default(2, step_adaptation="TPA")
    s = CmaState.initial(np.zeros(2), 1.0)
    sig, n = update_step_size_tpa(s, np.array([1.0, 1.0]), np.array([2.0, 2.0]), p, sphere)
    assert n == 2 and sig > 1.0
    sig, n = update_step_size_tpa(s, np.ones(2), np.ones(2), p, sphere)
    assert (sig, n) == (1.0, 0)
    sig, _ = update_step_size_tpa(s, np.zeros(2), np.array([1.0, 0.0]), p, sphere)
    assert sig < 1.0  # equal test values: shorter wins
    assert tpa_factor(1.0, 1.0, 0.3) == pytest.approx(math.exp(-0.3))


def test_tpa_ask_appends_test_points():
    es = CmaEs(np.full(3, 3.0), 1.0, CmaParams.default(3, step_adaptation="TPA"), np.random.default_rng(0))
    X = es.ask()
    assert X.shape[0] == es.params.lam
    es.tell(X, [sphere(x) for x in X])
    X = es.ask()
    assert X.shape[0] == es.params.lam + 2
    shift = es.state.mean - es.state.previous_mean
    np.testing.assert_allclose(X[-2], es.state.mean + 0.5 * shift)
    np.testing.assert_allclose(X[-1], es.state.mean - 0.5 * shift)
    with pytest.raises(ValueError):
        es.tell(X[:-2], [sphere(x) for x in X[:-2]])


# -- ask/tell properties -------------------------------------------------------------------

@given(st.integers(0, 10_000))
@settings(max_examples=15, deadline=None)
def test_elitist_best_parent_never_worsens(seed):
    es = CmaEs(np.full(4, 2.0), 1.0, CmaParams.default(4), np.random.default_rng(seed))
    last = math.inf
    for _ in range(40):
        X = es.ask()
        es.tell(X, [rosenbrock(x) for x in X])
        best = es.best_parent[1]
        assert best <= last
        last = best


@pytest.mark.parametrize("tpa", [False, True])
def test_monotone_transform_leaves_samples_identical(tpa):
    mode = "TPA" if tpa else "CSA"

    def trajectory(f):
        es = CmaEs(np.full(5, 1.5), 1.0, CmaParams.default(5, step_adaptation=mode), np.random.default_rng(4))
        pts = []
        for _ in range(60):
            X = es.ask()
            pts.append(X.copy())
            es.tell(X, [f(x) for x in X])
        return np.vstack(pts)

    a = trajectory(rosenbrock)
    b = trajectory(lambda x: 2.0 * rosenbrock(x) + 7.0)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)
