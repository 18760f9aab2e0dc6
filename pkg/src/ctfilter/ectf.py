"""Ensemble Conjugate Transform Filter.

Ensembles are plain ``(D, N)`` arrays with members as columns.  The analysis
works in the joint state-observation space: each member ``x`` is extended to
``[x; h(x)]``, pulled back through the partitioned transform ``f``, updated
with a stochastic EnKF step whose innovation covariance comes straight from
the latent perturbed observations, and pushed forward again.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .ctf import selection_matrix
from .gaussian import GaussianParams, chol_solve, cholesky, symmetrize
from .transforms import DomainError, Transform

ObservationOperator = Callable[[np.ndarray], np.ndarray]


class LikelihoodSampler(Protocol):
    """Draws one observation per member given the members' observation block."""

    def sample(self, hx: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...


@dataclass(frozen=True)
class LognormalLikelihood:
    """``y = h(x) * LN(0, r)`` elementwise, i.e. ``ln y ~ N(ln h(x), r)``."""

    r: float

    def __post_init__(self):
        if not self.r >= 0:
            raise ValueError("latent observation variance must be nonnegative")

    def sample(self, hx, rng):
        hx = np.asarray(hx, dtype=float)
        return hx * np.exp(np.sqrt(self.r) * rng.standard_normal(hx.shape))

    def logpdf(self, y, hx):
        """Log-density of scalar observation ``y`` given positive ``hx`` (broadcasts)."""
        ly = np.log(y)
        return -0.5 * np.log(2 * np.pi * self.r) - (ly - np.log(hx)) ** 2 / (2 * self.r) - ly


@dataclass(frozen=True, eq=False)
class GaussianLikelihood:
    """Additive Gaussian noise ``y = h(x) + e``, ``e ~ N(0, R)``."""

    R_cov: np.ndarray

    def sample(self, hx, rng):
        hx = np.asarray(hx, dtype=float)
        R = np.atleast_2d(np.asarray(self.R_cov, dtype=float))
        if not np.any(R):
            return hx.copy()
        return hx + cholesky(R) @ rng.standard_normal(hx.shape)


def extend_ensemble(x_ens, h: ObservationOperator) -> np.ndarray:
    """Stack ``[x; h(x)]`` for every member."""
    x_ens = np.asarray(x_ens, dtype=float)
    hx = np.atleast_2d(np.asarray(h(x_ens), dtype=float))
    if hx.ndim != 2 or hx.shape[1] != x_ens.shape[1]:
        raise ValueError(
            f"observation operator returned shape {hx.shape} for {x_ens.shape[1]} members"
        )
    return np.vstack([x_ens, hx])


def sample_cov(a, b) -> np.ndarray:
    """Cross-covariance of two ensembles with the ``N - 1`` divisor."""
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    n = a.shape[1]
    if b.shape[1] != n:
        raise ValueError(f"ensemble sizes differ: {n} vs {b.shape[1]}")
    if n < 2:
        raise ValueError("sample covariance needs at least two members")
    da = a - a.mean(axis=1, keepdims=True)
    db = b - b.mean(axis=1, keepdims=True)
    return da @ db.T / (n - 1)


def fit_prior_latent(z_ens, f: Transform) -> tuple[GaussianParams, np.ndarray]:
    """Pull members back through ``f`` and fit the latent sample mean/covariance."""
    z_ens = np.asarray(z_ens, dtype=float)
    inside = f.in_domain(z_ens)
    if not np.all(inside):
        i = int(np.flatnonzero(~inside)[0])
        raise DomainError(f"ensemble member {i} lies outside the transform image: {z_ens[:, i]}")
    z_lat = f.inverse(z_ens)
    return GaussianParams(z_lat.mean(axis=1), symmetrize(sample_cov(z_lat, z_lat))), z_lat


def generate_perturbed_obs(z_ens, sampler: LikelihoodSampler, rng, n_obs: int) -> np.ndarray:
    """One draw from ``p(y | z_i)`` per member, using the trailing ``n_obs`` rows."""
    z_ens = np.asarray(z_ens, dtype=float)
    y = np.atleast_2d(sampler.sample(z_ens[-n_obs:], rng))
    if y.shape != (n_obs, z_ens.shape[1]):
        raise ValueError(f"sampler returned shape {y.shape}, expected {(n_obs, z_ens.shape[1])}")
    return y


def latent_gain(z_lat, y_lat, H) -> np.ndarray:
    """``Cov(z, Hz) Cov(Y, Y)^-1``; the observation noise enters only through ``Y``."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    hz = H @ z_lat
    return chol_solve(symmetrize(sample_cov(y_lat, y_lat)), sample_cov(z_lat, hz).T).T


def latent_stochastic_update(z_lat, y_lat, H, y_obs_lat) -> np.ndarray:
    """Stochastic EnKF analysis ``z_i + K (y_obs - Y_i)`` in latent space."""
    z_lat = np.asarray(z_lat, dtype=float)
    y_lat = np.atleast_2d(np.asarray(y_lat, dtype=float))
    y_obs_lat = np.atleast_1d(np.asarray(y_obs_lat, dtype=float))
    K = latent_gain(z_lat, y_lat, H)
    return z_lat + K @ (y_obs_lat[:, None] - y_lat)


def back_transform(z_lat, f: Transform) -> np.ndarray:
    """Push latent members through ``f``; saturated values are nudged inside."""
    return f.nudge_inside(f.forward(z_lat))


def ectf_assimilate(
    x_ens,
    h: ObservationOperator,
    f: Transform,
    g: Transform,
    y_obs,
    sampler: LikelihoodSampler,
    rng: np.random.Generator,
) -> np.ndarray:
    """Full ECTF analysis; returns the extended ``(D + R, N)`` physical ensemble.

    ``f`` must act on the extended state (typically ``partition(f_x, g)``) and
    ``g`` on observations.  Strip the trailing ``R`` rows to recover the state.
    """
    x_ens = np.asarray(x_ens, dtype=float)
    y_obs = np.atleast_1d(np.asarray(y_obs, dtype=float))
    n_obs = y_obs.size
    if g.dim != n_obs or f.dim != x_ens.shape[0] + n_obs:
        raise ValueError("transform dimensions do not match state/observation sizes")
    z = extend_ensemble(x_ens, h)
    _, z_lat = fit_prior_latent(z, f)
    y_pert = generate_perturbed_obs(z, sampler, rng, n_obs)
    y_lat = g.inverse(g.nudge_inside(y_pert))
    H = selection_matrix(x_ens.shape[0], n_obs)
    z_lat_a = latent_stochastic_update(z_lat, y_lat, H, g.inverse(y_obs))
    return back_transform(z_lat_a, f)
