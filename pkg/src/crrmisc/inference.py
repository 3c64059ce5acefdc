"""Bootstrap variance estimation for the regression coefficients.

Each replicate ``b`` resamples subjects with replacement and, when the
misclassification parameters are uncertain, perturbs them by a draw from
``N(gamma_hat, omega_hat)`` before refitting.  Random numbers for replicate
``b`` come from counter-based Philox streams keyed on ``(seed, b)``, so results
do not depend on the order or process in which replicates run.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .estimator import FitConfig, FitResult, fit
from .likelihood import LikelihoodError
from .model import Dataset, GammaEstimate, MisclassModel

MAX_FAILURE_FRACTION = 0.2

_GAMMA_STREAM = 0
_DATA_STREAM = 1


class BootstrapError(RuntimeError):
    pass


def substream(seed: int, b: int, which: int) -> np.random.Generator:
    """Independent generator for replicate ``b``; ``which`` separates uses."""
    ss = np.random.SeedSequence(seed, spawn_key=(b, which))
    return np.random.Generator(np.random.Philox(ss))


def draw_gamma(gamma: GammaEstimate, rng: np.random.Generator) -> np.ndarray:
    """One draw of ``gamma_hat + L xi`` with ``L L' = omega_hat`` (clipped to PSD)."""
    xi = rng.standard_normal(gamma.q)
    omega = gamma.clipped_omega()
    if not np.any(omega):
        return gamma.gamma.copy()
    try:
        L = np.linalg.cholesky(omega)
    except np.linalg.LinAlgError:
        # singular but PSD: the symmetric square root gives the same law
        vals, vecs = np.linalg.eigh(omega)
        L = vecs * np.sqrt(np.clip(vals, 0.0, None))
    return gamma.gamma + L @ xi


def resample(dataset: Dataset, rng: np.random.Generator) -> Dataset:
    """Draw ``n`` subjects uniformly with replacement."""
    idx = rng.integers(0, dataset.n, size=dataset.n)
    return dataset.subset(idx)


@dataclass
class BootstrapResult:
    """Bootstrap summary for the stacked coefficients ``betas.ravel()``.

    ``replicate_betas`` has one row per replicate; rows of failed replicates are
    NaN and excluded from ``sigma_hat``.
    """

    sigma_hat: np.ndarray
    replicate_betas: np.ndarray
    failures: int
    seed: int
    point: FitResult | None = None
    warning: str | None = None

    @property
    def B(self) -> int:
        return self.replicate_betas.shape[0]

    @property
    def converged(self) -> np.ndarray:
        return ~np.isnan(self.replicate_betas).any(axis=1)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.diag(self.sigma_hat))

    def confidence_intervals(self, estimate=None, level: float = 0.95,
                             method: str = "normal") -> np.ndarray:
        """Intervals per stacked coefficient, shape ``(k*p, 2)``.

        ``method="normal"`` gives ``estimate +/- z * SE``; ``"percentile"`` uses
        quantiles of the converged replicates.
        """
        if method == "percentile":
            reps = self.replicate_betas[self.converged]
            a = (1 - level) / 2
            return np.column_stack([np.quantile(reps, a, axis=0),
                                    np.quantile(reps, 1 - a, axis=0)])
        if method != "normal":
            raise ValueError(f"unknown interval method {method!r}")
        if estimate is None:
            estimate = self.point.betas.ravel()
        zq = norm.ppf(0.5 + level / 2)
        est = np.asarray(estimate, dtype=float).ravel()
        return np.column_stack([est - zq * self.se, est + zq * self.se])


def _replicate(args):
    dataset, config, model, gamma, point, seed, b, perturb = args
    g = draw_gamma(gamma, substream(seed, b, _GAMMA_STREAM)) if perturb else gamma.gamma
    data_b = resample(dataset, substream(seed, b, _DATA_STREAM))
    try:
        res = fit(data_b, config, model, g, knots=point.theta.knots, init=point.theta)
    except (LikelihoodError, ValueError, np.linalg.LinAlgError):
        return None
    return res.betas.ravel() if res.converged else None


def _run(dataset, config, model, gamma, B, seed, point, perturb, n_jobs):
    if B < 2:
        raise ValueError("B must be >= 2")
    config = config or FitConfig()
    if point is None:
        point = fit(dataset, config, model, gamma.gamma)
    jobs = [(dataset, config, model, gamma, point, seed, b, perturb) for b in range(B)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if n_jobs == 1:
            out = [_replicate(a) for a in jobs]
        else:
            with ProcessPoolExecutor(max_workers=n_jobs) as ex:
                out = list(ex.map(_replicate, jobs))
    width = point.betas.size
    reps = np.full((B, width), np.nan)
    for b, r in enumerate(out):
        if r is not None:
            reps[b] = r
    ok = ~np.isnan(reps).any(axis=1)
    failures = int(B - ok.sum())
    msg = None
    if failures > MAX_FAILURE_FRACTION * B or ok.sum() < 2:
        raise BootstrapError(
            f"{failures} of {B} bootstrap replicates failed to converge "
            f"(limit {MAX_FAILURE_FRACTION:.0%})")
    if failures:
        msg = f"{failures} of {B} bootstrap replicates failed and were dropped"
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    sigma = np.atleast_2d(np.cov(reps[ok], rowvar=False, ddof=1))
    sigma = 0.5 * (sigma + sigma.T)
    return BootstrapResult(sigma, reps, failures, seed, point, msg)


def bootstrap_variance(dataset: Dataset, config: FitConfig | None, model: MisclassModel | None,
                       gamma: GammaEstimate, B: int = 100, seed: int = 0, *,
                       point: FitResult | None = None, n_jobs: int = 1) -> BootstrapResult:
    """Bootstrap covariance of the coefficients with misclassification parameters
    redrawn from ``N(gamma.gamma, gamma.omega)`` in every replicate.

    Replicates refit on the point estimate's sieve, warm-started at the point
    estimate.  With ``omega = 0`` this coincides with
    :func:`nonparametric_bootstrap` under the same seed.
    """
    return _run(dataset, config, model, gamma, B, seed, point, True, n_jobs)


def nonparametric_bootstrap(dataset: Dataset, config: FitConfig | None,
                            model: MisclassModel | None, gamma, B: int = 100, seed: int = 0,
                            *, point: FitResult | None = None, n_jobs: int = 1) -> BootstrapResult:
    """Plain bootstrap with the misclassification parameters held at ``gamma``."""
    if not isinstance(gamma, GammaEstimate):
        g = np.zeros(0) if gamma is None else np.asarray(gamma, dtype=float).ravel()
        gamma = GammaEstimate(g, np.zeros((g.size, g.size)))
    return _run(dataset, config, model, gamma, B, seed, point, False, n_jobs)
