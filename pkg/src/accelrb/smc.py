"""Sequential Monte Carlo over the model parameters.

The posterior is a weighted particle cloud updated by Bayes' rule for each
datum, with Liu-West resampling whenever the effective sample size drops
below a fraction of the particle count.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegeneratePosteriorError, DomainError, SupportCollisionError
from .model import N_PARAMS, Datum, ModelParams, PriorSpec, in_support, log_likelihoods

log = logging.getLogger(__name__)

MAX_RESAMPLE_ATTEMPTS = 100_000


@dataclass
class SmcConfig:
    n_particles: int = 4000
    resample_threshold: float = 0.5
    liu_west_a: float = 0.9
    rng_seed: int | None = 0
    # ESS below this fraction of n_particles at any update raises the warning flag
    ess_warning_fraction: float = 0.01
    # split a datum's likelihood into fractional steps when a single update
    # would drop the ESS below the resampling threshold
    tempering: bool = True
    max_tempering_steps: int = 200

    def __post_init__(self):
        if self.n_particles < 2:
            raise DomainError("n_particles must be at least 2")
        if not 0.0 < self.resample_threshold < 1.0:
            raise DomainError("resample_threshold must lie in (0, 1)")
        if not 0.0 < self.liu_west_a <= 1.0:
            raise DomainError("liu_west_a must lie in (0, 1]")


@dataclass
class ParticleCloud:
    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.locations = np.asarray(self.locations, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.locations.ndim != 2 or self.locations.shape[1] != N_PARAMS:
            raise DomainError(f"locations must have shape (n, {N_PARAMS})")
        if self.weights.shape != (self.locations.shape[0],):
            raise DomainError("weights must have one entry per particle")
        if np.any(self.weights < 0):
            raise DomainError("weights must be nonnegative")
        total = self.weights.sum()
        if not total > 0:
            raise DomainError("weights must not all be zero")
        if abs(total - 1.0) > 1e-10:
            self.weights = self.weights / total

    @property
    def n(self) -> int:
        return self.locations.shape[0]


def init_particles(prior: PriorSpec, n: int, rng: np.random.Generator) -> ParticleCloud:
    if n < 2:
        raise DomainError("at least two particles are required")
    return ParticleCloud(prior.draw(n, rng), np.full(n, 1.0 / n))


def _log_weights(cloud: ParticleCloud, loglik: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        logw = np.log(cloud.weights) + loglik
    return np.where(np.isnan(logw), -np.inf, logw)


def _ess_of_log_weights(logw: np.ndarray) -> float:
    top = np.max(logw)
    if not np.isfinite(top):
        return 0.0
    w = np.exp(logw - top)
    return float(w.sum() ** 2 / np.sum(w**2))


def _reweight(cloud: ParticleCloud, loglik: np.ndarray) -> ParticleCloud:
    logw = _log_weights(cloud, loglik)
    top = np.max(logw)
    if not np.isfinite(top):
        raise DegeneratePosteriorError("every particle has zero posterior weight; re-examine the prior")
    w = np.exp(logw - top)
    total = w.sum()
    if not total > 0:
        raise DegeneratePosteriorError("posterior weights underflowed to zero")
    return ParticleCloud(cloud.locations, w / total)


def bayes_update(cloud: ParticleCloud, datum: Datum) -> ParticleCloud:
    return _reweight(cloud, log_likelihoods(cloud.locations, datum))


def bayes_update_batch(cloud: ParticleCloud, data: Sequence[Datum]) -> ParticleCloud:
    """Single reweighting by the joint likelihood of ``data``."""
    loglik = np.zeros(cloud.n)
    for datum in data:
        loglik += log_likelihoods(cloud.locations, datum)
    return _reweight(cloud, loglik)


def effective_sample_size(cloud: ParticleCloud) -> float:
    return float(1.0 / np.sum(cloud.weights**2))


def posterior_mean(cloud: ParticleCloud) -> np.ndarray:
    return cloud.weights @ cloud.locations


def posterior_covariance(cloud: ParticleCloud) -> np.ndarray:
    dev = cloud.locations - posterior_mean(cloud)
    cov = (cloud.weights[:, None] * dev).T @ dev
    return (cov + cov.T) / 2


def _psd_root(cov: np.ndarray) -> np.ndarray:
    evals, evecs = np.linalg.eigh(cov)
    return evecs * np.sqrt(np.clip(evals, 0.0, None))


def liu_west_resample(
    cloud: ParticleCloud,
    a: float,
    rng: np.random.Generator,
    max_attempts: int = MAX_RESAMPLE_ATTEMPTS,
) -> ParticleCloud:
    """Liu-West kernel resampling with support enforced by redrawing perturbations."""
    if not 0.0 < a <= 1.0:
        raise DomainError(f"Liu-West parameter must lie in (0, 1], got {a}")
    n = cloud.n
    idx = rng.choice(n, size=n, p=cloud.weights)
    parents = cloud.locations[idx]
    uniform = np.full(n, 1.0 / n)
    if a == 1.0:
        return ParticleCloud(parents.copy(), uniform)

    mu = a * parents + (1.0 - a) * posterior_mean(cloud)
    root = np.sqrt(1.0 - a * a) * _psd_root(posterior_covariance(cloud))
    new = mu + rng.standard_normal((n, N_PARAMS)) @ root.T
    bad = ~in_support(new)
    attempts = 1
    while bad.any():
        if attempts >= max_attempts:
            raise SupportCollisionError(
                f"{int(bad.sum())} particles still outside support after {attempts} proposals"
            )
        k = int(bad.sum())
        new[bad] = mu[bad] + rng.standard_normal((k, N_PARAMS)) @ root.T
        bad = ~in_support(new)
        attempts += 1
    return ParticleCloud(new, uniform)


def _tempered_fraction(cloud: ParticleCloud, loglik: np.ndarray, remaining: float, target: float) -> float:
    """Largest likelihood exponent in (0, remaining] keeping the ESS at or above ``target``."""
    scaled = np.where(np.isfinite(loglik), loglik, -np.inf)
    if _ess_of_log_weights(_log_weights(cloud, remaining * scaled)) >= target:
        return remaining
    lo, hi = 0.0, remaining
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if _ess_of_log_weights(_log_weights(cloud, mid * scaled)) >= target:
            lo = mid
        else:
            hi = mid
    # guarantee progress even when impossible particles alone breach the target
    return max(lo, remaining * 1e-6)


@dataclass
class SmcDiagnostics:
    n_data: int = 0
    # ESS the untempered update of each datum would have produced; its minimum
    # is the prior-data conflict signal behind ``ess_warning``
    min_ess: float = float("inf")
    final_ess: float = float("nan")
    n_resamples: int = 0
    resample_points: list = field(default_factory=list)
    n_tempering_steps: int = 0
    ess_warning: bool = False

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class SmcResult:
    estimate: ModelParams
    covariance: np.ndarray
    diagnostics: SmcDiagnostics
    cloud: ParticleCloud
    prior_cloud: ParticleCloud | None = None

    @property
    def posterior_variance_trace(self) -> float:
        return float(np.trace(self.covariance))


def run_smc(
    prior: PriorSpec,
    dataset: Sequence[Datum],
    config: SmcConfig | None = None,
    rng: np.random.Generator | None = None,
    keep_prior: bool = False,
) -> SmcResult:
    """Posterior mean and covariance after processing ``dataset`` in order.

    Randomness comes from ``rng`` if given, else from ``config.rng_seed``.
    """
    config = SmcConfig() if config is None else config
    if not dataset:
        raise DomainError("dataset must not be empty")
    rng = np.random.default_rng(config.rng_seed) if rng is None else rng

    cloud = init_particles(prior, config.n_particles, rng)
    prior_cloud = cloud if keep_prior else None
    diag = SmcDiagnostics()
    n = cloud.n
    threshold = config.resample_threshold * n
    for i, datum in enumerate(dataset):
        loglik = log_likelihoods(cloud.locations, datum)
        ess_full = _ess_of_log_weights(_log_weights(cloud, loglik))
        diag.min_ess = min(diag.min_ess, ess_full)
        if ess_full < config.ess_warning_fraction * n:
            diag.ess_warning = True
        try:
            if config.tempering and ess_full < threshold:
                remaining = 1.0
                steps = 0
                while remaining > 0.0:
                    steps += 1
                    if steps >= config.max_tempering_steps:
                        frac = remaining
                    else:
                        frac = _tempered_fraction(cloud, loglik, remaining, threshold)
                    cloud = _reweight(cloud, frac * np.where(np.isfinite(loglik), loglik, -np.inf))
                    remaining = 0.0 if frac >= remaining else remaining - frac
                    if remaining > 0.0:
                        cloud = liu_west_resample(cloud, config.liu_west_a, rng)
                        diag.n_resamples += 1
                        diag.resample_points.append(i)
                        loglik = log_likelihoods(cloud.locations, datum)
                diag.n_tempering_steps += steps
            else:
                cloud = _reweight(cloud, loglik)
        except DegeneratePosteriorError as exc:
            diag.final_ess = 0.0
            diag.ess_warning = True
            raise DegeneratePosteriorError(str(exc), diagnostics=diag) from exc
        diag.n_data = i + 1
        if effective_sample_size(cloud) < threshold:
            cloud = liu_west_resample(cloud, config.liu_west_a, rng)
            diag.n_resamples += 1
            diag.resample_points.append(i)
    diag.final_ess = effective_sample_size(cloud)
    if diag.ess_warning:
        log.warning("effective sample size fell to %.1f of %d particles; inference may be unreliable",
                    diag.min_ess, n)
    return SmcResult(
        estimate=ModelParams.from_array(posterior_mean(cloud)),
        covariance=posterior_covariance(cloud),
        diagnostics=diag,
        cloud=cloud,
        prior_cloud=prior_cloud,
    )
