import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctfilter.ectf import LognormalLikelihood
from ctfilter.experiments import TrialParams
from ctfilter.oracle import (
    GridPosterior,
    GridSpec,
    OracleError,
    cell_widths,
    ensemble_histogram,
    grid_moments,
    grid_posterior,
    js_divergence,
    kl_divergence,
    sample_grid,
    skill_report,
)

from .oracles import lognormal_mean


class FlatPrior:
    def logpdf(self, z):
        return np.zeros(np.shape(z)[1:])


def flat_likelihood(y, z):
    return np.zeros(np.shape(z)[1:])


def two_cell(a, b):
    g = GridSpec(n_z1=2, n_z2=2, z1_min=1.0, z1_max=2.0, z2_min=0.25, z2_max=0.75)
    return GridPosterior(g, np.array([[a, 0.0], [0.0, b]]))


def _posterior(p: TrialParams, y, grid):
    lik = LognormalLikelihood(p.r)
    return grid_posterior(p.prior(), lambda yy, z: lik.logpdf(yy, z[0]), y, grid)


def _marginal_js(a, b):
    a, b = a / a.sum(), b / b.sum()
    m = 0.5 * (a + b)
    kl = lambda p, q: np.sum(p[p > 0] * np.log(p[p > 0] / q[p > 0]))  # noqa: E731
    return 0.5 * (kl(a, m) + kl(b, m))


def test_flat_two_by_two_grid():
    g = GridSpec(n_z1=2, n_z2=2)
    post = grid_posterior(FlatPrior(), flat_likelihood, 1.0, g)
    assert np.allclose(post.masses, 0.25)


def test_masses_sum_to_one():
    p = TrialParams(0.6, 0.1, (0.2, -0.3), 0.7, 1.1, 0)
    post = _posterior(p, 1.3, GridSpec(n_z1=800, n_z2=60))
    assert post.masses.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all(post.masses >= 0)


def test_uninformative_observation_leaves_prior():
    p = TrialParams(0.9, 1e6, (0.0, 0.5), 0.5, 1.0, 0)
    grid = GridSpec(n_z1=1500, n_z2=80, z1_spacing="log")
    prior = grid_posterior(p.prior(), flat_likelihood, 2.0, grid)
    assert js_divergence(_posterior(p, 2.0, grid), prior) < 1e-3


def test_underflow_raises():
    g = GridSpec(n_z1=3, n_z2=3)
    with pytest.raises(OracleError):
        grid_posterior(FlatPrior(), lambda y, z: np.full(np.shape(z)[1:], -np.inf), 1.0, g)


def test_cell_widths_are_trapezoid():
    assert np.array_equal(cell_widths(np.array([0.0, 1.0, 3.0])), [0.5, 1.5, 1.0])


def test_grid_spec_validation():
    with pytest.raises(ValueError):
        GridSpec(n_z1=1)
    with pytest.raises(ValueError):
        GridSpec(z2_max=1.0)
    with pytest.raises(ValueError):
        GridSpec(z1_spacing="cubic")


def test_histogram_examples():
    g = GridSpec(n_z1=5, n_z2=4, z1_min=1.0, z1_max=5.0, z2_min=0.2, z2_max=0.8)
    node = np.array([[3.0] * 7, [0.4] * 7])
    h = ensemble_histogram(node, g)
    assert h.masses[2, 1] == 1.0 and h.masses.sum() == 1.0

    far = ensemble_histogram(np.array([[600.0], [0.5]]), g)
    assert far.masses[-1].sum() == 1.0

    mixed = ensemble_histogram(np.array([[3.0, 3.0], [0.4, -0.1]]), g)
    assert mixed.masses[2, 1] == 1.0
    with pytest.raises(OracleError):
        ensemble_histogram(np.array([[-1.0], [0.5]]), g)


def test_histogram_bins_centred_on_nodes():
    g = GridSpec(n_z1=3, n_z2=2, z1_min=1.0, z1_max=3.0, z2_min=0.25, z2_max=0.75)
    # 1.49 sits left of the 1/2 midpoint, 1.51 right of it
    h = ensemble_histogram(np.array([[1.49, 1.51], [0.3, 0.3]]), g)
    assert h.masses[0, 0] == 0.5 and h.masses[1, 0] == 0.5


def test_kl_examples():
    p, q = two_cell(1.0, 0.0), two_cell(0.5, 0.5)
    assert kl_divergence(p, p) == 0.0
    assert kl_divergence(p, q) == pytest.approx(np.log(2.0), abs=1e-15)
    big = kl_divergence(q, p)
    assert np.isfinite(big) and big > 300


def test_js_examples():
    p, q = two_cell(1.0, 0.0), two_cell(0.0, 1.0)
    assert js_divergence(p, p) == 0.0
    assert js_divergence(p, q) == pytest.approx(np.log(2.0), abs=1e-15)
    with pytest.raises(ValueError):
        js_divergence(p, GridPosterior(GridSpec(n_z1=2, n_z2=2), np.full((2, 2), 0.25)))


@given(st.integers(0, 2**32 - 1))
def test_js_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    g = GridSpec(n_z1=6, n_z2=5)
    a = rng.random((6, 5)) * (rng.random((6, 5)) < 0.6)
    b = rng.random((6, 5))
    a[0, 0] += 1e-3
    p, q = GridPosterior(g, a / a.sum()), GridPosterior(g, b / b.sum())
    js = js_divergence(p, q)
    assert 0.0 <= js <= np.log(2.0)
    assert abs(js - js_divergence(q, p)) <= 1e-15


def test_grid_moments_examples():
    g = GridSpec(n_z1=3, n_z2=3, z1_min=1.0, z1_max=3.0, z2_min=0.2, z2_max=0.8)
    m = np.zeros((3, 3))
    m[1, 2] = 1.0
    mean, std = grid_moments(GridPosterior(g, m))
    assert np.allclose(mean, [2.0, 0.8]) and np.allclose(std, 0.0)
    mean, _ = grid_moments(two_cell(0.5, 0.5))
    assert np.allclose(mean, [1.5, 0.5])


def test_fine_grid_lognormal_mean():
    p = TrialParams(0.0, 1.0, (0.3, 0.0), 0.4, 1.0, 0)
    grid = GridSpec(n_z1=20_000, n_z2=20, z1_spacing="log")
    prior = grid_posterior(p.prior(), flat_likelihood, 1.0, grid)
    mean, _ = grid_moments(prior)
    exact = lognormal_mean(0.3, 0.4)
    assert abs(mean[0] - exact) / exact < 1e-3


def test_skill_report_examples(rng):
    p = TrialParams(0.6, 0.1, (0.2, -0.3), 0.5, 0.8, 0)
    grid = GridSpec(n_z1=600, n_z2=50, z1_spacing="log")
    post = _posterior(p, 1.3, grid)
    ens = sample_grid(post, 400_000, rng)
    rep = skill_report(ens, post)
    assert rep.js < 5e-3
    assert abs(rep.me_mean) < 5e-3 and abs(rep.me_std) < 5e-3
    assert rep.bounds_violation_pct == 0.0

    delta = 0.01
    moments = (ens.mean(axis=1) - delta, ens.std(axis=1, ddof=1))
    shifted = skill_report(ens, post, moments)
    assert shifted.me_mean == pytest.approx(delta, abs=1e-12)

    half = skill_report(np.array([[0.5, -1.0], [0.5, 0.5]]), post)
    assert half.bounds_violation_pct == 50.0
    none = skill_report(np.array([[-0.5, -1.0], [0.5, 0.5]]), post)
    assert none.js == pytest.approx(np.log(2.0))


def test_doubling_z2_nodes_leaves_z1_marginal():
    p = TrialParams(0.6, 0.5, (0.1, 0.2), 0.6, 0.7, 0)
    coarse = _posterior(p, 1.5, GridSpec(n_z1=1500, n_z2=100, z1_spacing="log"))
    fine = _posterior(p, 1.5, GridSpec(n_z1=1500, n_z2=200, z1_spacing="log"))
    assert _marginal_js(coarse.marginal(0), fine.marginal(0)) < 1e-6


@pytest.mark.slow
def test_million_oracle_samples_match_masses():
    p = TrialParams(0.9, 0.1, (0.2, -0.3), 0.8, 1.2, 0)
    post = _posterior(p, 1.3, GridSpec())
    ens = sample_grid(post, 1_000_000, np.random.default_rng(11))
    assert js_divergence(ensemble_histogram(ens, post.grid), post) < 5e-3
