import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hystkin.dataset import train_test_split
from hystkin.errors import (
    DegenerateDensity,
    DimensionMismatch,
    FitError,
    ModelFormatError,
    SingularCovariance,
    TooFewPoints,
)
from hystkin.gmm import GaussianMixture, fit_em, information_criteria, select_k
from hystkin.simulator import BacklashPlant, generate_dataset

import oracles


def std_normal():
    return GaussianMixture(np.array([1.0]), np.zeros((1, 2)), np.eye(2)[None])


def twin_mixture():
    return GaussianMixture(np.array([0.5, 0.5]), np.zeros((2, 2)), np.stack([np.eye(2)] * 2))


def as_mixture(weights, means, covs):
    return GaussianMixture(np.asarray(weights), np.asarray(means), np.asarray(covs))


def test_density_standard_normal_at_mean():
    assert std_normal().density(np.zeros(2)) == pytest.approx(1 / (2 * math.pi), rel=1e-15)
    assert std_normal().density(np.zeros(2)) == pytest.approx(0.159155, abs=1e-6)


def test_density_identical_components_collapse():
    pts = np.random.default_rng(0).normal(size=(20, 2))
    assert np.allclose(twin_mixture().density(pts), std_normal().density(pts), rtol=1e-14)


def test_density_matches_textbook_formula():
    rng = np.random.default_rng(1)
    w, m, c = oracles.random_mixture(rng, 3)
    gm = as_mixture(w, m, c)
    for x in rng.uniform(-4, 4, size=(10, 2)):
        assert gm.density(x) == pytest.approx(oracles.mixture_pdf(x, w, m, c), rel=1e-12)


def test_density_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        std_normal().density(np.zeros(3))


def test_responsibilities_single_component():
    assert std_normal().responsibilities(np.array([3.0, -2.0])).tolist() == [1.0]


def test_responsibilities_symmetric():
    assert twin_mixture().responsibilities(np.array([0.7, 0.1])) == pytest.approx([0.5, 0.5], abs=1e-15)


def test_responsibilities_far_separated():
    gm = GaussianMixture(np.array([0.5, 0.5]), np.array([[-10.0, 0.0], [10.0, 0.0]]), np.stack([np.eye(2)] * 2))
    r = gm.responsibilities(np.array([-10.0, 0.0]))
    ref = oracles.responsibilities([-10.0, 0.0], gm.weights, gm.means, gm.covariances)
    assert r[0] == pytest.approx(1.0, abs=1e-15)
    assert r[1] < 1e-20
    assert r[1] == pytest.approx(ref[1], rel=1e-10)


def test_responsibilities_survive_underflow():
    gm = GaussianMixture(np.array([0.5, 0.5]), np.array([[0.0, 0.0], [1.0, 0.0]]), np.stack([np.eye(2) * 1e-4] * 2))
    r = gm.responsibilities(np.array([500.0, 0.0]))
    assert np.isfinite(r).all() and r.sum() == pytest.approx(1.0, abs=1e-12)
    assert r[1] == pytest.approx(1.0)


def test_responsibilities_reject_non_finite():
    with pytest.raises(DegenerateDensity):
        std_normal().responsibilities(np.array([np.nan, 0.0]))


def test_rejects_bad_weights():
    with pytest.raises(FitError):
        GaussianMixture(np.array([0.6, 0.6]), np.zeros((2, 2)), np.stack([np.eye(2)] * 2))


def test_k1_recovers_known_gaussian():
    rng = np.random.default_rng(2)
    mu = np.array([0.3, -12.0])
    cov = np.array([[0.25, 1.2], [1.2, 9.0]])
    x = rng.multivariate_normal(mu, cov, size=1000)
    gm, rep = fit_em(x, 1, seed=0)
    se = np.sqrt(np.diag(cov) / len(x))
    assert np.all(np.abs(gm.means[0] - mu) <= 3 * se)
    assert np.linalg.norm(gm.covariances[0] - cov) / np.linalg.norm(cov) < 0.15
    # One component has a closed form: the sample mean and biased covariance.
    assert gm.means[0] == pytest.approx(x.mean(axis=0), rel=1e-12, abs=1e-12)
    assert np.allclose(gm.covariances[0], np.cov(x.T, bias=True), rtol=1e-5, atol=0)
    assert rep.converged and rep.iterations <= 3


@pytest.fixture(scope="module")
def backlash_train():
    ds = generate_dataset(BacklashPlant.preset("pitch-like", seed=0), 9, 200)
    return train_test_split(ds, 6)[0].points


def test_backlash_fit_near_best_of_ten_seeds(backlash_train):
    gm, rep = fit_em(backlash_train, 9, seed=0)
    best = oracles.best_of_seeds(fit_em, backlash_train, 9, range(10))
    ll = rep.log_likelihood_trace[-1]
    assert ll >= best - 0.01 * abs(best)


@pytest.mark.xfail(strict=True, reason="the 1e-7 total log-likelihood tolerance needs more than 200 EM iterations here")
def test_backlash_fit_converges_within_200(backlash_train):
    _, rep = fit_em(backlash_train, 9, seed=0)
    assert rep.converged and rep.iterations <= 200


def test_too_few_points():
    with pytest.raises(TooFewPoints):
        fit_em(np.zeros((2, 2)), 3)


def test_non_finite_data():
    x = np.random.default_rng(0).normal(size=(20, 2))
    x[3, 1] = np.inf
    with pytest.raises(SingularCovariance):
        fit_em(x, 2)


def test_collapsed_data_stays_positive_definite():
    # Gridded inputs: many exact duplicates would collapse a component.
    x = np.repeat(np.array([[0.0, 1.0], [1.0, 2.0], [2.0, 2.5]]), 30, axis=0)
    gm, _ = fit_em(x, 3, seed=0)
    assert np.all(np.linalg.eigvalsh(gm.covariances) > 0)


def test_converged_flag_reflects_budget():
    x = np.random.default_rng(3).normal(size=(300, 2))
    _, rep = fit_em(x, 4, seed=1, max_iters=3)
    assert not rep.converged and rep.iterations == 3
    _, rep = fit_em(x, 4, seed=1, max_iters=2000, tol=1e-6)
    assert rep.converged
    assert rep.log_likelihood_trace[-1] - rep.log_likelihood_trace[-2] < 1e-6


def test_fit_is_seed_deterministic():
    x = np.random.default_rng(4).normal(size=(200, 2))
    a, _ = fit_em(x, 3, seed=9)
    b, _ = fit_em(x, 3, seed=9)
    assert np.array_equal(a.means, b.means) and np.array_equal(a.covariances, b.covariances)


@pytest.mark.parametrize("k,p", [(1, 5), (9, 53)])
def test_parameter_count(k, p):
    gm = GaussianMixture(np.full(k, 1 / k), np.zeros((k, 2)), np.stack([np.eye(2)] * k))
    assert gm.n_parameters() == p


def test_information_criteria_formula():
    x = np.random.default_rng(5).normal(size=(120, 2))
    gm = std_normal()
    ll = sum(math.log(oracles.mixture_pdf(p, [1.0], [[0, 0]], [np.eye(2)])) for p in x)
    bic, aic = information_criteria(gm, x)
    assert bic == pytest.approx(-2 * ll + 5 * math.log(120), rel=1e-12)
    assert aic == pytest.approx(-2 * ll + 10, rel=1e-12)


def test_select_k_singleton():
    x = np.random.default_rng(6).normal(size=(100, 2))
    best_bic, best_aic, table = select_k(x, (3, 3))
    assert (best_bic, best_aic) == (3, 3)
    assert [r.k for r in table] == [3]


@pytest.mark.parametrize("rng_", [(0, 2), (3, 2), (1, 11)])
def test_select_k_range_checked(rng_):
    with pytest.raises(FitError):
        select_k(np.zeros((100, 2)) + np.arange(100)[:, None], rng_)


def test_select_k_sweep_on_yaw_data():
    ds = generate_dataset(BacklashPlant.preset("yaw-like", seed=1), 9, 200)
    _, _, table = select_k(ds.points, (1, 15), seed=1, max_iters=100)
    assert [r.k for r in table] == list(range(1, 16))
    assert all(np.isfinite([r.bic, r.aic]).all() for r in table)


def test_text_round_trip():
    rng = np.random.default_rng(7)
    gm = as_mixture(*oracles.random_mixture(rng, 3))
    back, extra = GaussianMixture.from_text(gm.to_text())
    assert extra == []
    assert np.array_equal(back.weights, gm.weights)
    assert np.array_equal(back.means, gm.means)
    assert np.array_equal(back.covariances, gm.covariances)
    assert gm.to_text().splitlines()[:2] == ["gmmodel v1", "3 2"]


@pytest.mark.parametrize("text", ["gmmodel v2\n1 2\n1 0 0 1 0 0 1\n", "", "gmmodel v1\n2 2\n1 0 0 1 0 0 1\n"])
def test_text_rejects_bad_input(text):
    with pytest.raises(ModelFormatError):
        GaussianMixture.from_text(text)


blobs = st.tuples(st.integers(0, 10_000), st.integers(1, 4), st.integers(30, 120))


@settings(max_examples=25, deadline=None)
@given(blobs)
def test_em_contract(args):
    seed, k, n = args
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-5, 5, size=(k, 2))
    x = centers[rng.integers(k, size=n)] + rng.normal(scale=rng.uniform(0.1, 2), size=(n, 2))
    gm, rep = fit_em(x, k, seed=seed)
    trace = np.array(rep.log_likelihood_trace)
    assert np.all(np.diff(trace) >= -1e-9)
    assert abs(gm.weights.sum() - 1) <= 1e-12
    assert np.all((gm.weights >= 0) & (gm.weights <= 1))
    assert np.all(np.linalg.eigvalsh(gm.covariances) > 0)
    assert trace[-1] == pytest.approx(gm.log_likelihood(x), rel=1e-9, abs=1e-9)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3))
def test_fit_permutation_invariant(seed, k):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(80, 2)) * [1.0, 5.0] + rng.integers(0, 3, size=(80, 1)) * [3.0, 0.0]
    a, _ = fit_em(x, k, seed=1)
    b, _ = fit_em(rng.permutation(x), k, seed=1)

    def canon(gm):
        order = np.lexsort(gm.means.T[::-1])
        return gm.weights[order], gm.means[order], gm.covariances[order]

    for u, v in zip(canon(a), canon(b)):
        assert np.allclose(u, v, rtol=0, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5))
def test_responsibilities_sum_to_one(seed, k):
    rng = np.random.default_rng(seed)
    gm = as_mixture(*oracles.random_mixture(rng, k))
    pts = rng.uniform(-50, 50, size=(25, 2))
    r = gm.responsibilities(pts)
    assert np.all(r >= 0)
    assert np.allclose(r.sum(axis=1), 1.0, rtol=0, atol=1e-12)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 3))
def test_density_integrates_to_one(seed, k):
    rng = np.random.default_rng(seed)
    gm = as_mixture(*oracles.random_mixture(rng, k))
    sd = np.sqrt(np.diagonal(gm.covariances, axis1=1, axis2=2))
    lo = (gm.means - 8 * sd).min(axis=0)
    hi = (gm.means + 8 * sd).max(axis=0)
    gx, gy = np.linspace(lo[0], hi[0], 401), np.linspace(lo[1], hi[1], 401)
    xx, yy = np.meshgrid(gx, gy, indexing="ij")
    dens = gm.density(np.column_stack([xx.ravel(), yy.ravel()])).reshape(xx.shape)
    assert np.all(dens >= 0)
    total = np.trapezoid(np.trapezoid(dens, gy, axis=1), gx)
    assert total == pytest.approx(1.0, abs=1e-3)
