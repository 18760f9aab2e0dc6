"""Single-update data-assimilation trials on the bounded 2-D lognormal/logit-normal problem.

Each trial draws latent prior parameters, samples a prior ensemble and a
truth, generates a lognormal observation of ``z1``, computes the grid Bayes
posterior, and runs EnKF, QCEF-LR and ECTF on identical inputs.

Random streams: a trial seed spawns three child streams, used for the prior
ensemble, the truth/observation draw, and the perturbed observations.  EnKF
and ECTF receive generators built from the same perturbation stream.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import betainc

from .baselines import QcefContext, enkf_assimilate, qcef_lr_assimilate
from .ectf import LognormalLikelihood, ectf_assimilate
from .gaussian import GaussianParams, PushforwardDensity
from .oracle import (
    GridPosterior,
    GridSpec,
    SkillReport,
    grid_moments,
    grid_posterior,
    resampling_band,
    skill_report,
)
from .transforms import Exp, Logistic, Transform, partition, stack

FILTERS = ("enkf", "qcef_lr", "ectf")
METRICS = ("js", "me_mean", "me_std", "bounds_violation_pct")

DEFAULT_RHOS = (0.0, 0.3, 0.6, 0.9, 0.99)
DEFAULT_RS = (0.01, 0.1, 0.5, 2.0, 8.0)


def state_transform() -> Transform:
    """``(exp, logistic)``: maps R^2 onto ``(0, inf) x (0, 1)``."""
    return stack(Exp(), Logistic())


def observe_first(x: np.ndarray) -> np.ndarray:
    return x[:1]


@dataclass(frozen=True)
class TrialParams:
    rho: float
    r: float
    mu_prior: tuple[float, float]
    sigma1: float
    sigma2: float
    seed: int
    y_fixed: float | None = None

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")
        if not self.r > 0:
            raise ValueError("r must be positive")
        if not (self.sigma1 > 0 and self.sigma2 > 0):
            raise ValueError("sigma1 and sigma2 must be positive")

    def latent_prior(self) -> GaussianParams:
        c = self.rho * np.sqrt(self.sigma1 * self.sigma2)
        return GaussianParams(np.array(self.mu_prior, float), [[self.sigma1, c], [c, self.sigma2]])

    def prior(self) -> PushforwardDensity:
        return PushforwardDensity(state_transform(), self.latent_prior())


@dataclass
class TrialOutcome:
    params: TrialParams
    reports: dict[str, SkillReport]
    innovation: float
    truth: np.ndarray
    y: float
    mc_band: tuple[float, float] | None = None
    ensembles: dict[str, np.ndarray] | None = None
    posterior: GridPosterior | None = None


def draw_trial(rho: float, r: float, rng: np.random.Generator, y_fixed: float | None = None) -> TrialParams:
    """Prior mean ~ U[-1, 1]^2, latent variances ~ U[0.05, 2]^2, plus a child seed."""
    mu = rng.uniform(-1.0, 1.0, size=2)
    s1, s2 = rng.uniform(0.05, 2.0, size=2)
    seed = int(rng.integers(0, 2**63 - 1))
    return TrialParams(float(rho), float(r), (float(mu[0]), float(mu[1])), float(s1), float(s2), seed, y_fixed)


def _streams(seed: int) -> tuple[np.random.SeedSequence, ...]:
    return tuple(np.random.SeedSequence(seed).spawn(3))


def run_trial(
    p: TrialParams,
    n_members: int,
    grid: GridSpec,
    mc_rep: int = 0,
    ectf_transform: Transform | None = None,
    keep: bool = False,
) -> TrialOutcome:
    """Run all three filters on one prior/observation pair and score them."""
    s_prior, s_obs, s_pert = _streams(p.seed)
    prior = p.prior()
    lik = LognormalLikelihood(p.r)

    ens = prior.sample(n_members, np.random.default_rng(s_prior))
    obs_rng = np.random.default_rng(s_obs)
    truth = prior.sample(1, obs_rng)[:, 0]
    y = float(lik.sample(truth[:1], obs_rng)[0]) if p.y_fixed is None else float(p.y_fixed)

    post = grid_posterior(prior, lambda yy, z: lik.logpdf(yy, z[0]), y, grid)
    moments = grid_moments(post)

    f_state = ectf_transform if ectf_transform is not None else state_transform()
    f_ext = partition(f_state, Exp())
    out = {
        "enkf": enkf_assimilate(ens, observe_first, [y], lik, np.random.default_rng(s_pert))[:2],
        "qcef_lr": qcef_lr_assimilate(ens, QcefContext(y, p.r)),
        "ectf": ectf_assimilate(ens, observe_first, f_ext, Exp(), [y], lik, np.random.default_rng(s_pert))[:2],
    }
    reports = {name: skill_report(a, post, moments) for name, a in out.items()}
    band = None
    if mc_rep > 0:
        band_rng = np.random.default_rng(np.random.SeedSequence(p.seed, spawn_key=(7,)))
        band = resampling_band(post, n_members, mc_rep, band_rng, moments)
    return TrialOutcome(
        params=p,
        reports=reports,
        innovation=y - float(ens[0].mean()),
        truth=truth,
        y=y,
        mc_band=band,
        ensembles={"prior": ens, **out} if keep else None,
        posterior=post if keep else None,
    )


def resolve_threads(threads: int | None = None) -> int:
    if threads is None:
        env = os.environ.get("CTF_THREADS")
        threads = int(env) if env else 1
    return max(1, int(threads))


def _map(fn: Callable, items: Sequence, threads: int) -> list:
    """Order-preserving map, optionally across worker processes."""
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * threads))))


@dataclass(frozen=True)
class _TrialJob:
    n_members: int
    grid: GridSpec
    mc_rep: int = 0
    ectf_transform: Transform | None = None

    def __call__(self, p: TrialParams) -> TrialOutcome:
        return run_trial(p, self.n_members, self.grid, self.mc_rep, self.ectf_transform)


def paired_ttest(diffs) -> float:
    """Two-sided p-value of the one-sample t-test on paired differences.

    Zero-variance samples are degenerate: p = 1 if every difference is zero,
    otherwise p = 0.
    """
    d = np.asarray(diffs, dtype=float)
    n = d.size
    if n < 2:
        raise ValueError("t-test needs at least two differences")
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0.0:
        return 1.0 if mean == 0.0 else 0.0
    t = mean / (sd / np.sqrt(n))
    nu = n - 1
    return float(betainc(0.5 * nu, 0.5, nu / (nu + t * t)))


def pct_change(js_filter: float, js_enkf: float) -> float:
    return 100.0 * (js_filter - js_enkf) / js_enkf


@dataclass
class SweepResult:
    rhos: list[float]
    rs: list[float]
    n_trials: int
    js: dict[tuple[float, float], dict[str, np.ndarray]] = field(default_factory=dict)
    bounds_pct: dict[tuple[float, float], dict[str, np.ndarray]] = field(default_factory=dict)

    def rows(self) -> list[dict]:
        out = []
        for rho in self.rhos:
            for r in self.rs:
                cell = self.js[(rho, r)]
                base = cell["enkf"]
                for name in FILTERS:
                    vals = cell[name]
                    out.append({
                        "rho": rho,
                        "r": r,
                        "filter": name,
                        "mean_js": float(vals.mean()),
                        "pct_change_vs_enkf": pct_change(float(vals.mean()), float(base.mean())),
                        "p_value": paired_ttest(vals - base) if vals.size >= 2 else 1.0,
                        "n_trials": int(vals.size),
                    })
        return out

    def table(self, name: str, column: str) -> np.ndarray:
        """``(len(rhos), len(rs))`` array of one column for one filter."""
        lookup = {(row["rho"], row["r"]): row[column] for row in self.rows() if row["filter"] == name}
        return np.array([[lookup[(rho, r)] for r in self.rs] for rho in self.rhos])


def sweep(
    rho_list: Sequence[float],
    r_list: Sequence[float],
    n_trials: int,
    n_members: int,
    grid: GridSpec,
    seed: int = 0,
    threads: int | None = None,
    ectf_transform: Transform | None = None,
) -> SweepResult:
    """Mean JS per filter on every ``(rho, r)`` cell with paired t-tests against EnKF."""
    if not rho_list or not r_list:
        raise ValueError("sweep needs nonempty rho and r lists")
    params = []
    cells = [(float(rho), float(r)) for rho in rho_list for r in r_list]
    for ci, (rho, r) in enumerate(cells):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(ci,)))
        params.extend(draw_trial(rho, r, rng) for _ in range(n_trials))
    outcomes = _map(_TrialJob(n_members, grid, 0, ectf_transform), params, resolve_threads(threads))
    res = SweepResult([float(x) for x in rho_list], [float(x) for x in r_list], n_trials)
    for ci, cell in enumerate(cells):
        chunk = outcomes[ci * n_trials:(ci + 1) * n_trials]
        res.js[cell] = {name: np.array([o.reports[name].js for o in chunk]) for name in FILTERS}
        res.bounds_pct[cell] = {
            name: np.array([o.reports[name].bounds_violation_pct for o in chunk]) for name in FILTERS
        }
    return res


def quantile_bins(values: np.ndarray, n_bins: int) -> tuple[np.ndarray, np.ndarray]:
    """Equal-count bin edges and the bin index of every value."""
    edges = np.quantile(values, np.linspace(0.0, 1.0, n_bins + 1))
    idx = np.clip(np.searchsorted(edges[1:-1], values, side="right"), 0, n_bins - 1)
    return edges, idx


@dataclass
class InnovationResult:
    outcomes: list[TrialOutcome]
    edges: np.ndarray
    bin_index: np.ndarray

    def metric(self, name: str, metric: str) -> np.ndarray:
        return np.array([getattr(o.reports[name], metric) for o in self.outcomes])

    @property
    def innovations(self) -> np.ndarray:
        return np.array([o.innovation for o in self.outcomes])

    def band(self) -> np.ndarray:
        """``(n_trials, 2)`` Monte Carlo standard errors of ME(mean), ME(std)."""
        return np.array([o.mc_band if o.mc_band is not None else (np.nan, np.nan) for o in self.outcomes])

    def rows(self) -> list[dict]:
        out = []
        n_bins = self.edges.size - 1
        series = [(name, m, self.metric(name, m)) for name in FILTERS for m in METRICS]
        band = self.band()
        series += [("oracle", "mc_se_me_mean", band[:, 0]), ("oracle", "mc_se_me_std", band[:, 1])]
        for b in range(n_bins):
            sel = self.bin_index == b
            for name, m, vals in series:
                v = vals[sel]
                v = v[np.isfinite(v)]
                if v.size:
                    q25, q50, q75 = np.quantile(v, [0.25, 0.5, 0.75])
                else:
                    q25 = q50 = q75 = np.nan
                out.append({
                    "bin_lo": float(self.edges[b]),
                    "bin_hi": float(self.edges[b + 1]),
                    "filter": name,
                    "metric": m,
                    "median": float(q50),
                    "iqr_lo": float(q25),
                    "iqr_hi": float(q75),
                })
        return out


def innovation_study(
    y_list: Sequence[float],
    n_trials: int,
    n_members: int,
    grid: GridSpec,
    rho: float = 0.99,
    r: float = 0.01,
    seed: int = 0,
    n_bins: int = 15,
    mc_rep: int = 20,
    threads: int | None = None,
) -> InnovationResult:
    """Trials with observations fixed from ``y_list`` (cycled), binned by innovation."""
    y_list = [float(v) for v in y_list]
    if not y_list or n_trials < 1:
        raise ValueError("innovation study needs observations and at least one trial")
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1,)))
    params = [draw_trial(rho, r, rng, y_fixed=y_list[i % len(y_list)]) for i in range(n_trials)]
    outcomes = _map(_TrialJob(n_members, grid, mc_rep), params, resolve_threads(threads))
    d = np.array([o.innovation for o in outcomes])
    edges, idx = quantile_bins(d, min(n_bins, n_trials))
    return InnovationResult(outcomes, edges, idx)


@dataclass
class ExampleResult:
    outcome: TrialOutcome
    prior_grid: GridPosterior
    posterior_grid: GridPosterior


EXAMPLE_MU = (0.5, 0.0)
EXAMPLE_SIGMA = (1.0, 1.0)


def example_case(
    n_members: int,
    grid: GridSpec,
    rho: float = 0.99,
    r: float = 0.05,
    y: float = 0.5,
    mu: tuple[float, float] = EXAMPLE_MU,
    sigma: tuple[float, float] = EXAMPLE_SIGMA,
    seed: int = 0,
) -> ExampleResult:
    """One illustrative trial with a fixed prior and observation; keeps all ensembles."""
    child = int(np.random.SeedSequence(seed, spawn_key=(2,)).generate_state(2, np.uint64)[0] >> np.uint64(1))
    p = TrialParams(rho, r, (float(mu[0]), float(mu[1])), float(sigma[0]), float(sigma[1]), child, y)
    outcome = run_trial(p, n_members, grid, keep=True)
    prior_grid = grid_posterior(p.prior(), lambda yy, z: np.zeros(z.shape[1:]), y, grid)
    return ExampleResult(outcome, prior_grid, outcome.posterior)
