import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import ndtri

from ctfilter.gaussian import (
    GaussianParams,
    LinearMap,
    NotPositiveDefiniteError,
    PushforwardDensity,
    cholesky,
    gaussian_marginalize,
    gaussian_product,
    gaussian_product_gain_form,
    pushforward_logpdf,
    sample_pushforward,
)
from ctfilter.transforms import Affine, DomainError, Exp, Identity, Logistic, stack

from .oracles import quad_marginal_1d, quad_product_1d, quad_product_2d, random_spd

STD_NORMAL_AT_MODE = -0.5 * np.log(2 * np.pi)


def scalar(mean, var):
    return GaussianParams([mean], [[var]])


def test_pushforward_logpdf_examples():
    assert pushforward_logpdf(PushforwardDensity(Identity(1), scalar(0, 1)), [0.0]) == pytest.approx(
        STD_NORMAL_AT_MODE, abs=1e-12)
    lognormal = PushforwardDensity(Exp(), scalar(0, 1))
    assert pushforward_logpdf(lognormal, [1.0]) == pytest.approx(-0.918939, abs=1e-6)
    with pytest.raises(DomainError):
        pushforward_logpdf(lognormal, [-1.0])


def test_sampling_examples(rng):
    n = 100_000
    x = sample_pushforward(PushforwardDensity(Identity(1), scalar(0, 1)), n, rng)
    assert abs(x.mean()) < 4 / np.sqrt(n)
    assert np.all(sample_pushforward(PushforwardDensity(Exp(), scalar(0, 1)), n, rng) > 0)
    z = sample_pushforward(PushforwardDensity(Logistic(), scalar(0.3, 2.0)), n, rng)
    assert np.all((z > 0) & (z < 1))


def test_params_validation():
    with pytest.raises(ValueError):
        GaussianParams([0.0, 0.0], [[1.0]])
    with pytest.raises(ValueError):
        GaussianParams([0.0, 0.0], [[1.0, 0.5], [0.0, 1.0]])
    p = GaussianParams([1.0], [[2.0]])
    with pytest.raises(ValueError):
        p.mean[0] = 5.0


def test_cholesky_jitter_then_error():
    # rank one, rescued by jitter
    v = np.array([[1.0], [2.0]])
    L = cholesky(v @ v.T)
    assert np.allclose(L @ L.T, v @ v.T, atol=1e-10)
    with pytest.raises(NotPositiveDefiniteError):
        cholesky(np.array([[1.0, 0.0], [0.0, -1.0]]))


def _integrate_1d(d, lo, hi):
    return integrate.quad(lambda y: np.exp(d.logpdf([y])), lo, hi, limit=400, epsabs=1e-12)[0]


def test_pushforward_normalizes_1d():
    base = scalar(0.4, 0.7)
    cases = [
        (Identity(1), -np.inf, np.inf),
        (Affine([2.5], [-1.0]), -np.inf, np.inf),
        (Exp(), 0.0, np.inf),
        (Logistic(), 0.0, 1.0),
    ]
    for t, lo, hi in cases:
        assert _integrate_1d(PushforwardDensity(t, base), lo, hi) == pytest.approx(1.0, abs=1e-4)


def test_pushforward_normalizes_2d():
    base = GaussianParams([0.2, -0.3], [[0.5, 0.3], [0.3, 0.8]])
    cases = [
        (Identity(2), (-8, 8), (-8, 8)),
        (Affine([2.0, 0.5], [1.0, 0.0]), (-15, 17), (-5, 5)),
        (stack(Exp(), Logistic()), (0, 60), (0, 1)),
    ]
    for t, (a0, b0), (a1, b1) in cases:
        d = PushforwardDensity(t, base)
        total = integrate.dblquad(lambda y1, y0: np.exp(d.logpdf([y0, y1])), a0, b0, a1, b1,
                                  epsabs=1e-9, epsrel=1e-9)[0]
        assert total == pytest.approx(1.0, abs=1e-4)


def test_sampling_matches_density_ks():
    # a 1% level test: any fixed seed fails with probability 0.01
    d = PushforwardDensity(Exp(), scalar(-0.2, 0.5))
    n = 100_000
    x = np.sort(sample_pushforward(d, n, np.random.default_rng(3))[0])
    # cdf implied by the density alone, integrated on a fine log grid
    grid = np.geomspace(1e-6, x.max() * 2, 200_001)
    pdf = np.exp(d.logpdf(grid[None, :]))
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid))])
    f = np.interp(x, grid, cdf)
    ecdf_hi = np.arange(1, n + 1) / n
    ecdf_lo = np.arange(0, n) / n
    ks = max(np.max(ecdf_hi - f), np.max(f - ecdf_lo))
    assert ks < 1.63 / np.sqrt(n)


def test_product_examples():
    p = gaussian_product(scalar(0, 1), LinearMap([[1.0]]), [[1.0]], [2.0])
    assert p.cov[0, 0] == pytest.approx(0.5)
    assert p.mean[0] == pytest.approx(1.0)
    u = GaussianParams([0.3, -1.0], [[1.0, 0.2], [0.2, 2.0]])
    q = gaussian_product(u, LinearMap(np.zeros((1, 2))), [[1.0]], [5.0])
    assert np.allclose(q.mean, u.mean) and np.allclose(q.cov, u.cov)


def test_product_matches_1d_quadrature(rng):
    for _ in range(5):
        mu_u, var_u = rng.normal(), rng.uniform(0.2, 3.0)
        a, b, var_v, v = rng.normal(), rng.normal(), rng.uniform(0.2, 3.0), rng.normal()
        p = gaussian_product(scalar(mu_u, var_u), LinearMap([[a]], [b]), [[var_v]], [v])
        m, s = quad_product_1d(mu_u, var_u, a, b, var_v, v)
        assert abs(p.mean[0] - m) < 1e-6
        assert abs(p.cov[0, 0] - s) < 1e-6


def test_product_matches_2d_quadrature(rng):
    mu = rng.normal(size=2)
    cov = random_spd(rng, 2, floor=0.3)
    A = rng.normal(size=(1, 2))
    b, sv, v = rng.normal(size=1), np.array([[0.7]]), rng.normal(size=1)
    p = gaussian_product(GaussianParams(mu, cov), LinearMap(A, b), sv, v)
    m, c = quad_product_2d(mu, cov, A, b, sv, v)
    assert np.allclose(p.mean, m, atol=1e-5)
    assert np.allclose(p.cov, c, atol=1e-5)


def test_marginal_examples():
    m = gaussian_marginalize(scalar(0, 1), LinearMap([[1.0]]), [[1.0]])
    assert m.mean[0] == 0.0 and m.cov[0, 0] == pytest.approx(2.0)
    m = gaussian_marginalize(scalar(0.7, 1.3), LinearMap([[0.0]], [3.0]), [[0.4]])
    assert m.mean[0] == pytest.approx(3.0) and m.cov[0, 0] == pytest.approx(0.4)


def test_marginal_matches_1d_quadrature(rng):
    for _ in range(3):
        mu_u, var_u = rng.normal(), rng.uniform(0.2, 2.0)
        a, b, var_v = rng.normal(), rng.normal(), rng.uniform(0.2, 2.0)
        g = gaussian_marginalize(scalar(mu_u, var_u), LinearMap([[a]], [b]), [[var_v]])
        m, s = quad_marginal_1d(mu_u, var_u, a, b, var_v)
        assert abs(g.mean[0] - m) < 1e-6
        assert abs(g.cov[0, 0] - s) < 1e-6


def test_marginal_matches_monte_carlo(rng):
    n = 400_000
    mu_u, var_u, a, b, var_v = 0.5, 1.5, -0.8, 2.0, 0.6
    u = mu_u + np.sqrt(var_u) * rng.standard_normal(n)
    v = a * u + b + np.sqrt(var_v) * rng.standard_normal(n)
    g = gaussian_marginalize(scalar(mu_u, var_u), LinearMap([[a]], [b]), [[var_v]])
    se = np.sqrt(g.cov[0, 0] / n)
    assert abs(v.mean() - g.mean[0]) < 5 * se
    assert abs(v.var() - g.cov[0, 0]) < 5 * g.cov[0, 0] * np.sqrt(2 / n)


def test_product_forms_agree(rng):
    for _ in range(100):
        n, m = rng.integers(1, 6, size=2)
        u = GaussianParams(rng.normal(size=n), random_spd(rng, n))
        lm = LinearMap(rng.normal(size=(m, n)), rng.normal(size=m))
        sv, v = random_spd(rng, m), rng.normal(size=m)
        a = gaussian_product(u, lm, sv, v)
        b = gaussian_product_gain_form(u, lm, sv, v)
        assert np.max(np.abs(a.mean - b.mean)) <= 1e-10 * max(1.0, np.max(np.abs(b.mean)))
        assert np.max(np.abs(a.cov - b.cov)) <= 1e-10 * np.max(np.abs(b.cov))


@given(st.floats(-3, 3), st.floats(0.1, 5), st.floats(0.1, 5), st.floats(-3, 3))
def test_product_shrinks_variance(mu, var_u, var_v, v):
    p = gaussian_product(scalar(mu, var_u), LinearMap([[1.0]]), [[var_v]], [v])
    assert p.cov[0, 0] <= min(var_u, var_v) + 1e-12
    lo, hi = min(mu, v), max(mu, v)
    assert lo - 1e-9 <= p.mean[0] <= hi + 1e-9


@given(st.floats(0.05, 0.95))
def test_logistic_pushforward_logpdf_symmetric(y):
    d = PushforwardDensity(Logistic(), scalar(0.0, 1.3))
    assert d.logpdf([y]) == pytest.approx(d.logpdf([1.0 - y]), abs=1e-9)


def test_pushforward_logpdf_matches_closed_form_lognormal():
    mu, var = 0.3, 0.8
    d = PushforwardDensity(Exp(), scalar(mu, var))
    x = np.array([0.2, 1.0, 3.5])
    closed = -np.log(x * np.sqrt(2 * np.pi * var)) - (np.log(x) - mu) ** 2 / (2 * var)
    assert np.allclose(d.logpdf(x[None, :]), closed, atol=1e-12)


def test_sample_quantiles_match_logistic_normal(rng):
    d = PushforwardDensity(Logistic(), scalar(0.5, 0.4))
    x = sample_pushforward(d, 200_000, rng)[0]
    q = np.array([0.1, 0.5, 0.9])
    expected = 1 / (1 + np.exp(-(0.5 + np.sqrt(0.4) * ndtri(q))))
    assert np.allclose(np.quantile(x, q), expected, atol=5e-3)
