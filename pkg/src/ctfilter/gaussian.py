"""Latent Gaussian parameters, pushforward densities, and the product/marginal lemma.

A non-Gaussian density here is always a Gaussian pushed forward through a
:class:`~ctfilter.transforms.Transform`.  Products and marginals of such
densities reduce to operations on the latent ``(mean, cov)`` pair, which is
what :func:`gaussian_product` and :func:`gaussian_marginalize` implement.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .transforms import Transform

LOG_2PI = np.log(2.0 * np.pi)


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky factorization failed even after jitter."""


def symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def cholesky(cov: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor with a single jittered retry.

    On the first failure ``1e-12 * trace(cov) / D`` is added to the diagonal;
    a second failure raises :class:`NotPositiveDefiniteError`.
    """
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    d = cov.shape[0]
    jitter = 1e-12 * np.trace(cov) / d
    try:
        if not jitter > 0:
            raise np.linalg.LinAlgError
        return np.linalg.cholesky(cov + jitter * np.eye(d))
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            f"matrix is not positive definite (jitter {jitter:.3g} did not help)"
        ) from None


def chol_solve(cov: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``cov @ x = b`` through :func:`cholesky`."""
    L = cholesky(cov)
    return linalg.cho_solve((L, True), b)


@dataclass(frozen=True, eq=False)
class GaussianParams:
    """Mean vector and covariance matrix of a latent Gaussian."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=float)).copy()
        cov = np.atleast_2d(np.asarray(self.cov, dtype=float)).copy()
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError(f"mean {mean.shape} and covariance {cov.shape} do not conform")
        scale = max(1.0, float(np.max(np.abs(cov))))
        if np.max(np.abs(cov - cov.T)) > 1e-12 * scale:
            raise ValueError("covariance is not symmetric")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def logpdf(self, x) -> np.ndarray:
        """Gaussian log-density at points with coordinates on axis 0."""
        x = np.asarray(x, dtype=float)
        flat = x.reshape(self.dim, -1)
        L = cholesky(self.cov)
        white = linalg.solve_triangular(L, flat - self.mean[:, None], lower=True)
        maha = np.sum(white**2, axis=0)
        logdet = 2.0 * np.sum(np.log(np.diag(L)))
        out = -0.5 * (maha + logdet + self.dim * LOG_2PI)
        return out.reshape(x.shape[1:])


@dataclass(frozen=True, eq=False)
class LinearMap:
    """``u -> A u + b``."""

    matrix: np.ndarray
    shift: np.ndarray | None = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.matrix, dtype=float)).copy()
        b = np.zeros(A.shape[0]) if self.shift is None else np.atleast_1d(np.asarray(self.shift, dtype=float)).copy()
        if b.shape != (A.shape[0],):
            raise ValueError(f"shift {b.shape} does not match map output dimension {A.shape[0]}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
            raise ValueError("linear map has non-finite entries")
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "shift", b)


@dataclass(frozen=True)
class PushforwardDensity:
    """Density of ``transform(W)`` with ``W ~ N(base.mean, base.cov)``."""

    transform: Transform
    base: GaussianParams

    def __post_init__(self):
        if self.transform.dim != self.base.dim:
            raise ValueError(
                f"transform dimension {self.transform.dim} != base dimension {self.base.dim}"
            )

    def logpdf(self, x) -> np.ndarray:
        return pushforward_logpdf(self, x)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return sample_pushforward(self, n, rng)


def pushforward_logpdf(d: PushforwardDensity, x) -> np.ndarray:
    """Change-of-variables log-density ``log phi(t^-1(x)) + log|det J_{t^-1}(x)|``."""
    latent = d.transform.inverse(x)
    return d.base.logpdf(latent) + d.transform.log_det_jacobian_inverse(x)


def sample_latent(base: GaussianParams, n: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("need at least one sample")
    L = cholesky(base.cov)
    xi = rng.standard_normal((base.dim, n))
    return base.mean[:, None] + L @ xi


def sample_pushforward(d: PushforwardDensity, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` members as columns of a ``(D, n)`` array."""
    return d.transform.forward(sample_latent(d.base, n, rng))


def _conform(u: GaussianParams, A: np.ndarray, sigma_v: np.ndarray, v=None):
    if A.shape[1] != u.dim:
        raise ValueError(f"map input dimension {A.shape[1]} != latent dimension {u.dim}")
    if sigma_v.shape != (A.shape[0], A.shape[0]):
        raise ValueError(f"noise covariance {sigma_v.shape} does not match map output {A.shape[0]}")
    if v is not None and v.shape != (A.shape[0],):
        raise ValueError(f"observation {v.shape} does not match map output {A.shape[0]}")


def gaussian_product(u: GaussianParams, linear_map: LinearMap, sigma_v, v_tilde) -> GaussianParams:
    """Latent parameters of ``p(v|u) p(u|w)`` as a density in ``u`` (information form).

    ``Sigma_p = (Sigma_u^-1 + A^T Sigma_v^-1 A)^-1`` and
    ``mu_p = Sigma_p [Sigma_u^-1 mu_u + A^T Sigma_v^-1 (v~ - b)]``.
    """
    A, b = linear_map.matrix, linear_map.shift
    sigma_v = np.atleast_2d(np.asarray(sigma_v, dtype=float))
    v_tilde = np.atleast_1d(np.asarray(v_tilde, dtype=float))
    _conform(u, A, sigma_v, v_tilde)
    eye = np.eye(u.dim)
    prec_u = symmetrize(chol_solve(u.cov, eye))
    At_Rinv = chol_solve(sigma_v, A).T
    prec_p = symmetrize(prec_u + At_Rinv @ A)
    cov_p = symmetrize(chol_solve(prec_p, eye))
    rhs = prec_u @ u.mean + At_Rinv @ (v_tilde - b)
    return GaussianParams(cov_p @ rhs, cov_p)


def gaussian_product_gain_form(u: GaussianParams, linear_map: LinearMap, sigma_v, v_tilde) -> GaussianParams:
    """Same result as :func:`gaussian_product` via the Woodbury/gain route.

    ``B = Sigma_u A^T (Sigma_v + A Sigma_u A^T)^-1``, ``Sigma_p = (I - B A) Sigma_u``,
    ``mu_p = mu_u + B (v~ - b - A mu_u)``.
    """
    A, b = linear_map.matrix, linear_map.shift
    sigma_v = np.atleast_2d(np.asarray(sigma_v, dtype=float))
    v_tilde = np.atleast_1d(np.asarray(v_tilde, dtype=float))
    _conform(u, A, sigma_v, v_tilde)
    S = symmetrize(sigma_v + A @ u.cov @ A.T)
    B = chol_solve(S, A @ u.cov).T
    cov_p = symmetrize((np.eye(u.dim) - B @ A) @ u.cov)
    mean_p = u.mean + B @ (v_tilde - b - A @ u.mean)
    return GaussianParams(mean_p, cov_p)


def gaussian_marginalize(u: GaussianParams, linear_map: LinearMap, sigma_v) -> GaussianParams:
    """Latent parameters of ``int p(v|u) p(u|w) du``: ``(A mu_u + b, A Sigma_u A^T + Sigma_v)``."""
    A, b = linear_map.matrix, linear_map.shift
    sigma_v = np.atleast_2d(np.asarray(sigma_v, dtype=float))
    _conform(u, A, sigma_v)
    return GaussianParams(A @ u.mean + b, symmetrize(A @ u.cov @ A.T + sigma_v))
