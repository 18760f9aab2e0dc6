"""Comparison filters: stochastic EnKF and QCEF with linear-regression increments."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .ctf import ctf_update
from .ectf import LikelihoodSampler, ObservationOperator, ectf_assimilate, sample_cov
from .gaussian import GaussianParams
from .transforms import Identity


def enkf_assimilate(x_ens, h: ObservationOperator, y_obs, sampler: LikelihoodSampler, rng) -> np.ndarray:
    """Stochastic EnKF in physical space.

    This is the ECTF pipeline with identity transforms, so both filters differ
    only in ``f`` and ``g``.  Returns the extended ensemble like
    :func:`~ctfilter.ectf.ectf_assimilate`.
    """
    x_ens = np.asarray(x_ens, dtype=float)
    n_obs = np.atleast_1d(y_obs).size
    return ectf_assimilate(
        x_ens, h, Identity(x_ens.shape[0] + n_obs), Identity(n_obs), y_obs, sampler, rng
    )


class CdfInversionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class MarginalCdf:
    """Univariate cdf, either lognormal (latent mean/variance) or tabulated.

    Quantile mapping goes through the standard-normal score
    ``Phi^-1(F(x))``, which for the lognormal family is the closed form
    ``(ln x - m) / s`` and therefore never saturates in the tails.
    """

    family: str
    latent_mean: float = 0.0
    latent_var: float = 1.0
    support: np.ndarray | None = None
    values: np.ndarray | None = None

    @classmethod
    def lognormal(cls, latent_mean: float, latent_var: float) -> "MarginalCdf":
        if not latent_var > 0:
            raise ValueError("lognormal latent variance must be positive")
        return cls("lognormal", float(latent_mean), float(latent_var))

    @classmethod
    def numeric(cls, support, values) -> "MarginalCdf":
        support = np.asarray(support, dtype=float)
        values = np.asarray(values, dtype=float)
        if support.shape != values.shape or support.ndim != 1 or support.size < 2:
            raise ValueError("tabulated cdf needs matching 1-D support and values")
        if np.any(np.diff(support) <= 0) or np.any(np.diff(values) < 0):
            raise ValueError("tabulated cdf must have increasing support and nondecreasing values")
        if values[0] < 0 or values[-1] > 1:
            raise ValueError("cdf values must lie in [0, 1]")
        return cls("numeric", support=support, values=values)

    @property
    def _s(self) -> float:
        return float(np.sqrt(self.latent_var))

    def cdf(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family == "lognormal":
            with np.errstate(divide="ignore"):
                return ndtr((np.log(np.maximum(x, 0.0)) - self.latent_mean) / self._s)
        return np.interp(x, self.support, self.values, left=0.0, right=1.0)

    def ppf(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.family == "lognormal":
            return np.exp(self.latent_mean + self._s * ndtri(u))
        lo, hi = self.values[0], self.values[-1]
        if np.any((u < lo) | (u > hi)):
            raise CdfInversionError(f"quantile outside tabulated range [{lo}, {hi}]")
        # leftmost bracket [x_j, x_{j+1}] with F(x_j) <= u <= F(x_{j+1})
        j = np.clip(np.searchsorted(self.values, u, side="left") - 1, 0, self.values.size - 2)
        f0, f1 = self.values[j], self.values[j + 1]
        w = np.where(f1 > f0, (u - f0) / np.where(f1 > f0, f1 - f0, 1.0), 0.0)
        return self.support[j] + w * (self.support[j + 1] - self.support[j])

    def normal_score(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.family == "lognormal":
            return (np.log(x) - self.latent_mean) / self._s
        return ndtri(self.cdf(x))

    def from_normal_score(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if self.family == "lognormal":
            return np.exp(self.latent_mean + self._s * q)
        return self.ppf(ndtr(q))


def qcef_obs_update(obs_members, prior_cdf: MarginalCdf, post_cdf: MarginalCdf) -> np.ndarray:
    """Quantile-conserving update ``x -> F_post^-1(F_prior(x))``."""
    return post_cdf.from_normal_score(prior_cdf.normal_score(obs_members))


def lr_regress_increments(state_row, obs_row, obs_increments) -> np.ndarray:
    """Regress observation-space increments onto a state variable (``N - 1`` statistics)."""
    state_row = np.asarray(state_row, dtype=float)
    obs_row = np.asarray(obs_row, dtype=float)
    obs_increments = np.asarray(obs_increments, dtype=float)
    if not (state_row.shape == obs_row.shape == obs_increments.shape):
        raise ValueError("state row, observed row and increments must have equal length")
    var = sample_cov(obs_row, obs_row)[0, 0]
    if not var > 0:
        raise ValueError("observed variable has zero sample variance")
    beta = sample_cov(state_row, obs_row)[0, 0] / var
    return beta * obs_increments


@dataclass(frozen=True)
class QcefContext:
    """Observation setup for QCEF-LR: one lognormal observation of row ``obs_index``."""

    y_obs: float
    r: float
    obs_index: int = 0


def qcef_lr_assimilate(x_ens, ctx: QcefContext) -> np.ndarray:
    """Exact quantile update of the observed row, linear regression for the rest.

    Prior and posterior marginals of the observed variable are lognormal; the
    posterior parameters come from the 1-D conjugate latent update.  The
    unobserved rows are not clipped to any physical bounds.
    """
    x_ens = np.array(x_ens, dtype=float)
    obs = x_ens[ctx.obs_index]
    lat = np.log(obs)
    prior = GaussianParams([lat.mean()], [[sample_cov(lat, lat)[0, 0]]])
    post = ctf_update(prior, [[1.0]], [[ctx.r]], [np.log(ctx.y_obs)])
    prior_cdf = MarginalCdf.lognormal(prior.mean[0], prior.cov[0, 0])
    post_cdf = MarginalCdf.lognormal(post.mean[0], post.cov[0, 0])
    obs_a = qcef_obs_update(obs, prior_cdf, post_cdf)
    d_obs = obs_a - obs
    out = x_ens.copy()
    for j in range(x_ens.shape[0]):
        if j != ctx.obs_index:
            out[j] = x_ens[j] + lr_regress_increments(x_ens[j], obs, d_obs)
    out[ctx.obs_index] = obs_a
    return out
