"""Exact Conjugate Transform Filter recursions.

The physical-space filtering density is always ``f # N(mu, Sigma)`` with a
fixed transform ``f``; assimilation only touches the latent pair.  With
identity transforms the recursions are the ordinary Kalman filter.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .gaussian import (
    GaussianParams,
    LinearMap,
    NotPositiveDefiniteError,
    PushforwardDensity,
    chol_solve,
    gaussian_marginalize,
    symmetrize,
)
from .transforms import Transform


class SingularInnovationError(NotPositiveDefiniteError):
    """Innovation covariance is singular and no observation noise was given."""


def selection_matrix(n_state: int, n_obs: int) -> np.ndarray:
    """``[O | I]``: picks the observation block of a joint latent vector."""
    return np.hstack([np.zeros((n_obs, n_state)), np.eye(n_obs)])


@dataclass(frozen=True, eq=False)
class LatentSSM:
    """Linear-Gaussian latent model with nonlinear output maps ``f`` and ``g``."""

    M: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    R_cov: np.ndarray
    f: Transform
    g: Transform

    def __post_init__(self):
        M, Q, H, R = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (self.M, self.Q, self.H, self.R_cov))
        d, r = M.shape[0], H.shape[0]
        if M.shape != (d, d) or Q.shape != (d, d) or H.shape != (r, d) or R.shape != (r, r):
            raise ValueError("SSM matrices do not conform")
        if self.f.dim != d or self.g.dim != r:
            raise ValueError("transform dimensions do not match the latent model")
        for name, a in (("Q", Q), ("R_cov", R)):
            if np.max(np.abs(a - a.T), initial=0.0) > 1e-12 * max(1.0, np.max(np.abs(a))):
                raise ValueError(f"{name} is not symmetric")
        for name, a in zip(("M", "Q", "H", "R_cov"), (M, Q, H, R)):
            object.__setattr__(self, name, a)


@dataclass(frozen=True)
class FilterState:
    transform: Transform
    latent: GaussianParams
    k: int = 0

    def density(self) -> PushforwardDensity:
        return PushforwardDensity(self.transform, self.latent)


def ctf_predict(post: GaussianParams, M, Q) -> GaussianParams:
    """``mu' = M mu``, ``Sigma' = M Sigma M^T + Q``."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if M.shape != (post.dim, post.dim):
        raise ValueError(f"propagator {M.shape} does not match state dimension {post.dim}")
    return gaussian_marginalize(post, LinearMap(M), Q)


def kalman_gain(prior_cov, H, R_cov) -> np.ndarray:
    """``K = Sigma H^T (H Sigma H^T + R)^-1`` via a Cholesky solve."""
    prior_cov = np.atleast_2d(np.asarray(prior_cov, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R_cov = np.atleast_2d(np.asarray(R_cov, dtype=float))
    if H.shape[1] != prior_cov.shape[0] or R_cov.shape != (H.shape[0], H.shape[0]):
        raise ValueError("gain inputs do not conform")
    HS = H @ prior_cov
    S = symmetrize(HS @ H.T + R_cov)
    if not np.any(R_cov):
        # exact-zero noise is only allowed when H Sigma H^T is itself PD
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise SingularInnovationError(
                "R_cov = 0 and H Sigma H^T is rank deficient"
            ) from None
    return chol_solve(S, HS).T


def ctf_update(prior: GaussianParams, H, R_cov, y_tilde) -> GaussianParams:
    """Latent analysis given the latent observation ``y_tilde = g^-1(y)``."""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    y_tilde = np.atleast_1d(np.asarray(y_tilde, dtype=float))
    if y_tilde.shape != (H.shape[0],):
        raise ValueError(f"observation {y_tilde.shape} does not match H {H.shape}")
    K = kalman_gain(prior.cov, H, R_cov)
    mean = prior.mean + K @ (y_tilde - H @ prior.mean)
    cov = symmetrize((np.eye(prior.dim) - K @ H) @ prior.cov)
    return GaussianParams(mean, cov)


def ctf_filter_step(state: FilterState, ssm: LatentSSM, y) -> FilterState:
    """One predict/update cycle; the transform is carried over untouched."""
    y_tilde = ssm.g.inverse(np.atleast_1d(np.asarray(y, dtype=float)))
    prior = ctf_predict(state.latent, ssm.M, ssm.Q)
    post = ctf_update(prior, ssm.H, ssm.R_cov, y_tilde)
    return replace(state, latent=post, k=state.k + 1)


def affine_pushforward(params: GaussianParams, L, b) -> GaussianParams:
    """Parameters of ``L W + b`` for ``W ~ N(params)``."""
    L = np.atleast_2d(np.asarray(L, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if L.shape[1] != params.dim or b.shape != (L.shape[0],):
        raise ValueError("affine map does not conform")
    return GaussianParams(L @ params.mean + b, symmetrize(L @ params.cov @ L.T))
