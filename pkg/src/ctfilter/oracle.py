"""Grid-discretized Bayes posterior for the bounded 2-D problem, plus skill metrics.

The state is ``(z1, z2)`` with ``z1 > 0`` and ``0 < z2 < 1``.  Cell masses are
density values at the grid nodes times the local (trapezoid) cell area,
normalized in log space.  Ensemble histograms use bins centred on the same
nodes, so the two can be compared cell by cell.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.special import logsumexp

TINY = 1e-300


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class GridSpec:
    n_z1: int = 2500
    n_z2: int = 100
    z1_min: float = 1e-15
    z1_max: float = 500.0
    z2_min: float = 1e-15
    z2_max: float = 1.0 - 1e-15
    z1_spacing: str = "uniform"

    def __post_init__(self):
        if self.n_z1 < 2 or self.n_z2 < 2:
            raise ValueError("grid needs at least two nodes per axis")
        if not (0.0 < self.z1_min < self.z1_max):
            raise ValueError("z1 range must satisfy 0 < z1_min < z1_max")
        if not (0.0 < self.z2_min < self.z2_max < 1.0):
            raise ValueError("z2 range must lie strictly inside (0, 1)")
        if self.z1_spacing not in ("uniform", "log"):
            raise ValueError("z1_spacing must be 'uniform' or 'log'")

    def z1_nodes(self) -> np.ndarray:
        if self.z1_spacing == "log":
            return np.geomspace(self.z1_min, self.z1_max, self.n_z1)
        return np.linspace(self.z1_min, self.z1_max, self.n_z1)

    def z2_nodes(self) -> np.ndarray:
        return np.linspace(self.z2_min, self.z2_max, self.n_z2)

    def to_dict(self) -> dict:
        return asdict(self)


def cell_widths(nodes: np.ndarray) -> np.ndarray:
    """Trapezoid weights: half the distance between neighbouring nodes."""
    w = np.empty_like(nodes)
    w[1:-1] = 0.5 * (nodes[2:] - nodes[:-2])
    w[0] = 0.5 * (nodes[1] - nodes[0])
    w[-1] = 0.5 * (nodes[-1] - nodes[-2])
    return w


@dataclass(frozen=True, eq=False)
class GridPosterior:
    grid: GridSpec
    masses: np.ndarray

    def __post_init__(self):
        shape = (self.grid.n_z1, self.grid.n_z2)
        if self.masses.shape != shape:
            raise ValueError(f"masses shape {self.masses.shape} != grid shape {shape}")

    def marginal(self, axis: int) -> np.ndarray:
        """Marginal masses over z1 (``axis=0``) or z2 (``axis=1``)."""
        return self.masses.sum(axis=1 - axis)


@dataclass(frozen=True)
class SkillReport:
    js: float
    me_mean: float
    me_std: float
    bounds_violation_pct: float


def grid_posterior(prior, likelihood_logpdf: Callable, y_obs: float, grid: GridSpec,
                   max_cells_per_chunk: int = 2_000_000) -> GridPosterior:
    """Normalized posterior cell masses on ``grid``.

    ``prior`` needs a ``logpdf`` taking ``(2, ...)`` points; ``likelihood_logpdf``
    is called as ``likelihood_logpdf(y_obs, z)`` with ``z`` of shape ``(2, rows, n_z2)``.
    """
    z1, z2 = grid.z1_nodes(), grid.z2_nodes()
    log_area2 = np.log(cell_widths(z2))
    log_area1 = np.log(cell_widths(z1))
    logm = np.empty((z1.size, z2.size))
    rows = max(1, max_cells_per_chunk // z2.size)
    for start in range(0, z1.size, rows):
        stop = min(start + rows, z1.size)
        Z1, Z2 = np.meshgrid(z1[start:stop], z2, indexing="ij")
        z = np.stack([Z1, Z2])
        logm[start:stop] = (
            prior.logpdf(z)
            + likelihood_logpdf(y_obs, z)
            + log_area1[start:stop, None]
            + log_area2[None, :]
        )
    logm[np.isnan(logm)] = -np.inf
    total = logsumexp(logm)
    if not np.isfinite(total):
        raise OracleError("posterior underflowed to zero mass on every grid cell")
    masses = np.exp(logm - total)
    masses /= masses.sum()
    return GridPosterior(grid, masses)


def in_bounds(ens) -> np.ndarray:
    """Members inside ``(0, inf) x (0, 1)``."""
    ens = np.asarray(ens, dtype=float)
    return np.isfinite(ens).all(axis=0) & (ens[0] > 0) & (ens[1] > 0) & (ens[1] < 1)


def _bin_index(values: np.ndarray, nodes: np.ndarray) -> np.ndarray:
    mids = 0.5 * (nodes[1:] + nodes[:-1])
    return np.searchsorted(mids, np.clip(values, nodes[0], nodes[-1]), side="right")


def ensemble_histogram(ens, grid: GridSpec) -> GridPosterior:
    """Normalized histogram on bins centred at the grid nodes.

    Out-of-bounds members are dropped; in-bounds members beyond the grid
    range land in the edge bins.
    """
    ens = np.asarray(ens, dtype=float)
    ok = in_bounds(ens)
    n_in = int(ok.sum())
    if n_in == 0:
        raise OracleError("no ensemble member lies inside the physical bounds")
    i1 = _bin_index(ens[0, ok], grid.z1_nodes())
    i2 = _bin_index(ens[1, ok], grid.z2_nodes())
    counts = np.bincount(i1 * grid.n_z2 + i2, minlength=grid.n_z1 * grid.n_z2)
    return GridPosterior(grid, counts.reshape(grid.n_z1, grid.n_z2) / n_in)


def _same_grid(p: GridPosterior, q: GridPosterior) -> None:
    if p.grid != q.grid:
        raise ValueError("distributions live on different grids")


def kl_divergence(p: GridPosterior, q: GridPosterior) -> float:
    """``sum p ln(p / q)`` over cells with ``p > 0``; ``q`` floored at 1e-300."""
    _same_grid(p, q)
    pm, qm = p.masses.ravel(), q.masses.ravel()
    nz = pm > 0
    return float(np.sum(pm[nz] * (np.log(pm[nz]) - np.log(np.maximum(qm[nz], TINY)))))


def js_divergence(p: GridPosterior, q: GridPosterior) -> float:
    """Jensen-Shannon divergence, in ``[0, ln 2]``."""
    _same_grid(p, q)
    avg = GridPosterior(p.grid, 0.5 * (p.masses + q.masses))
    js = 0.5 * (kl_divergence(p, avg) + kl_divergence(q, avg))
    return float(min(max(js, 0.0), np.log(2.0)))


def grid_moments(g: GridPosterior) -> tuple[np.ndarray, np.ndarray]:
    """Mass-weighted mean and standard deviation of ``(z1, z2)`` at the nodes."""
    means, stds = [], []
    for axis, nodes in ((0, g.grid.z1_nodes()), (1, g.grid.z2_nodes())):
        w = g.marginal(axis)
        m = np.sum(w * nodes)
        means.append(m)
        stds.append(np.sqrt(max(np.sum(w * (nodes - m) ** 2), 0.0)))
    return np.array(means), np.array(stds)


def ensemble_moments(ens) -> tuple[np.ndarray, np.ndarray]:
    ens = np.asarray(ens, dtype=float)
    return ens.mean(axis=1), ens.std(axis=1, ddof=1)


def bounds_violation_pct(ens) -> float:
    ens = np.asarray(ens, dtype=float)
    return float(100.0 * np.mean(~in_bounds(ens)))


def skill_report(analysis_ens, truth: GridPosterior, truth_moments=None) -> SkillReport:
    """JS, moment errors averaged over both coordinates, and bounds violations."""
    ens = np.asarray(analysis_ens, dtype=float)[:2]
    mu_t, sd_t = truth_moments if truth_moments is not None else grid_moments(truth)
    mu_e, sd_e = ensemble_moments(ens)
    if in_bounds(ens).any():
        js = js_divergence(ensemble_histogram(ens, truth.grid), truth)
    else:
        # nothing left to histogram: treat as disjoint support
        js = float(np.log(2.0))
    return SkillReport(
        js=js,
        me_mean=float(np.mean(mu_e - mu_t)),
        me_std=float(np.mean(sd_e - sd_t)),
        bounds_violation_pct=bounds_violation_pct(ens),
    )


def sample_grid(g: GridPosterior, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` members located at grid nodes with probability equal to the masses."""
    flat = g.masses.ravel()
    cdf = np.cumsum(flat)
    idx = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    idx = np.minimum(idx, flat.size - 1)
    i1, i2 = np.divmod(idx, g.grid.n_z2)
    return np.vstack([g.grid.z1_nodes()[i1], g.grid.z2_nodes()[i2]])


def resampling_band(g: GridPosterior, n_members: int, n_rep: int, rng: np.random.Generator,
                    truth_moments=None) -> tuple[float, float]:
    """Monte Carlo standard error of ME(mean) and ME(std) for ``n_members`` exact draws."""
    mu_t, sd_t = truth_moments if truth_moments is not None else grid_moments(g)
    me_mu, me_sd = np.empty(n_rep), np.empty(n_rep)
    for k in range(n_rep):
        mu_e, sd_e = ensemble_moments(sample_grid(g, n_members, rng))
        me_mu[k] = np.mean(mu_e - mu_t)
        me_sd[k] = np.mean(sd_e - sd_t)
    return float(np.sqrt(np.mean(me_mu**2))), float(np.sqrt(np.mean(me_sd**2)))
