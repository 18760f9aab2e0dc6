"""Self-checks run by ``ctfilter validate``.

Each check returns a :class:`CheckResult` carrying the worst observed error
and the tolerance it was held to.  The reference computations here are coded
separately from the library routines they test (explicit inverses, Joseph-form
covariance updates, finite differences), so agreement is meaningful.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ctf import FilterState, LatentSSM, ctf_filter_step, ctf_update, selection_matrix
from .ectf import LognormalLikelihood, ectf_assimilate
from .gaussian import GaussianParams, LinearMap, gaussian_product, gaussian_product_gain_form
from .transforms import Affine, Exp, Identity, Logistic, compose, partition, stack


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    error: float
    tolerance: float
    detail: str = ""

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.passed))
        object.__setattr__(self, "error", float(self.error))


def _random_spd(rng, n, floor=0.1):
    a = rng.standard_normal((n, n))
    return a @ a.T + floor * np.eye(n)


def _shipped_transforms():
    return {
        "identity": Identity(2),
        "affine": Affine([2.0, -0.5], [1.0, 3.0]),
        "exp": Exp(),
        "logistic": Logistic(),
        "composition": compose([Affine([0.5], [0.2]), Exp()]),
        "partition": partition(stack(Exp(), Logistic()), Exp()),
    }


def check_round_trips(rng, n_points=1000, tol=1e-9) -> CheckResult:
    worst, who = 0.0, ""
    for name, t in _shipped_transforms().items():
        x = 3.0 * rng.standard_normal((t.dim, n_points))
        err = np.abs(t.inverse(t.forward(x)) - x) / np.maximum(1.0, np.abs(x))
        if err.max() > worst:
            worst, who = float(err.max()), name
    return CheckResult("transform_round_trip", worst < tol, worst, tol, f"worst kind: {who or 'none'}")


def _fd_log_det(t, y, h=1e-6):
    d = y.size
    jac = np.empty((d, d))
    for j in range(d):
        step = h * max(1.0, abs(y[j]))
        # stay inside bounded domains
        step = min(step, 0.5 * y[j] if y[j] > 0 else step)
        e = np.zeros(d)
        e[j] = step
        jac[:, j] = (t.inverse(y + e) - t.inverse(y - e)) / (2 * step)
    return np.linalg.slogdet(jac)[1]


def check_jacobians(rng, n_points=100, tol=1e-5) -> CheckResult:
    worst, who = 0.0, ""
    for name, t in _shipped_transforms().items():
        x = 1.5 * rng.standard_normal((t.dim, n_points))
        y = t.forward(x)
        for i in range(n_points):
            exact = float(np.squeeze(t.log_det_jacobian_inverse(y[:, i])))
            approx = _fd_log_det(t, y[:, i])
            err = abs(exact - approx) / max(1.0, abs(exact))
            if err > worst:
                worst, who = err, name
    return CheckResult("jacobian_finite_difference", worst < tol, worst, tol, f"worst kind: {who or 'none'}")


def check_lemma_forms(rng, n_instances=100, tol=1e-10) -> CheckResult:
    worst = 0.0
    for _ in range(n_instances):
        n, m = rng.integers(1, 6, size=2)
        u = GaussianParams(rng.standard_normal(n), _random_spd(rng, n))
        lm = LinearMap(rng.standard_normal((m, n)), rng.standard_normal(m))
        sv = _random_spd(rng, m)
        v = rng.standard_normal(m)
        a = gaussian_product(u, lm, sv, v)
        b = gaussian_product_gain_form(u, lm, sv, v)
        worst = max(
            worst,
            np.max(np.abs(a.mean - b.mean)) / max(1.0, np.max(np.abs(b.mean))),
            np.max(np.abs(a.cov - b.cov)) / np.max(np.abs(b.cov)),
        )
    return CheckResult("lemma_information_vs_gain_form", worst < tol, float(worst), tol)


def reference_kalman_step(mean, cov, M, Q, H, R, y):
    """Textbook predict/update with an explicit inverse and Joseph-form covariance."""
    mp = M @ mean
    Pp = M @ cov @ M.T + Q
    K = Pp @ H.T @ np.linalg.inv(H @ Pp @ H.T + R)
    A = np.eye(mean.size) - K @ H
    return mp + K @ (y - H @ mp), A @ Pp @ A.T + K @ R @ K.T


def check_kf_equivalence(rng, n_cycles=10, tol=1e-10) -> CheckResult:
    d, r = 3, 2
    M = 0.9 * np.linalg.qr(rng.standard_normal((d, d)))[0]
    Q, R = _random_spd(rng, d), _random_spd(rng, r)
    H = rng.standard_normal((r, d))
    ssm = LatentSSM(M, Q, H, R, Identity(d), Identity(r))
    m0, P0 = rng.standard_normal(d), _random_spd(rng, d)
    state = FilterState(Identity(d), GaussianParams(m0, P0))
    m, P = m0, P0
    worst = 0.0
    for _ in range(n_cycles):
        y = rng.standard_normal(r)
        state = ctf_filter_step(state, ssm, y)
        m, P = reference_kalman_step(m, P, M, Q, H, R, y)
        worst = max(worst, np.max(np.abs(state.latent.mean - m)), np.max(np.abs(state.latent.cov - P)))
    return CheckResult("kalman_filter_equivalence", worst < tol, float(worst), tol, f"{n_cycles} cycles")


def _extended_latent_prior(mu=(0.3, -0.2), s1=0.8, s2=1.1, rho=0.9):
    c = rho * np.sqrt(s1 * s2)
    cov = np.array([[s1, c, s1], [c, s2, c], [s1, c, s1]])
    return GaussianParams(np.array([mu[0], mu[1], mu[0]]), cov)


def check_observation_consistency_exact(y=2.5, variances=(1e-4, 1e-8, 1e-12)) -> CheckResult:
    prior = _extended_latent_prior()
    H = selection_matrix(2, 1)
    y_lat = np.log(y)
    errs, spreads = [], []
    for v in variances:
        post = ctf_update(prior, H, [[v]], [y_lat])
        errs.append(abs(post.mean[2] - y_lat))
        spreads.append(post.cov[2, 2])
    monotone = all(a > b for a, b in zip(errs, errs[1:])) and all(a > b for a, b in zip(spreads, spreads[1:]))
    tol = 1e-10
    ok = monotone and errs[-1] < tol and spreads[-1] < tol
    return CheckResult(
        "observation_consistency_exact", ok, float(max(errs[-1], spreads[-1])), tol,
        "monotone" if monotone else "not monotone",
    )


def observation_consistency_ensemble(y=2.5, variances=(1e-4, 1e-8, 1e-12), n_members=5000, seed=0):
    """ECTF obs-coordinate relative mean error and spread for shrinking likelihood variance."""
    prior = _extended_latent_prior()
    f_state = stack(Exp(), Logistic())
    rng = np.random.default_rng(seed)
    lat = rng.multivariate_normal(prior.mean[:2], prior.cov[:2, :2], size=n_members).T
    x = f_state.forward(lat)
    errs, spreads = [], []
    for v in variances:
        out = ectf_assimilate(
            x, lambda s: s[:1], partition(f_state, Exp()), Exp(), [y],
            LognormalLikelihood(v), np.random.default_rng(seed + 1),
        )
        errs.append(abs(out[2].mean() - y) / y)
        spreads.append(out[2].std(ddof=1))
    return np.array(errs), np.array(spreads)


def check_observation_consistency_ensemble(tol=1e-4) -> CheckResult:
    errs, spreads = observation_consistency_ensemble()
    monotone = bool(np.all(np.diff(errs) < 0) and np.all(np.diff(spreads) < 0))
    ok = monotone and errs[-1] < tol
    return CheckResult(
        "observation_consistency_ensemble", ok, float(errs[-1]), tol,
        f"{'monotone' if monotone else 'not monotone'}; final spread {spreads[-1]:.3g}",
    )


def run_all(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [
        check_round_trips(rng),
        check_jacobians(rng),
        check_lemma_forms(rng),
        check_kf_equivalence(rng),
        check_observation_consistency_exact(),
        check_observation_consistency_ensemble(),
    ]
