"""Zeroth-order interleaved benchmarking model.

Parameters are ordered ``(p_tilde, p_ref, A, B)`` everywhere. The survival
probability of a length-``m`` sequence is ``A * p_ref**m + B`` for reference
sequences and ``A * (p_ref * p_tilde)**m + B`` for interleaved sequences.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, xlog1py, xlogy

from .errors import DomainError, SamplingError

PARAM_NAMES = ("p_tilde", "p_ref", "A", "B")
N_PARAMS = 4


class Mode(str, enum.Enum):
    REFERENCE = "reference"
    INTERLEAVED = "interleaved"


class OutOfSupportWarning(UserWarning):
    pass


@dataclass(frozen=True)
class ModelParams:
    p_tilde: float
    p_ref: float
    A: float
    B: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p_tilde, self.p_ref, self.A, self.B], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "ModelParams":
        arr = np.asarray(arr, dtype=float).reshape(N_PARAMS)
        return cls(*(float(v) for v in arr))

    def as_dict(self) -> dict:
        return dict(zip(PARAM_NAMES, (self.p_tilde, self.p_ref, self.A, self.B)))


@dataclass(frozen=True)
class ExperimentDesign:
    m: int
    mode: Mode = Mode.REFERENCE

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 0:
            raise DomainError(f"sequence length must be a nonnegative integer, got {self.m!r}")
        object.__setattr__(self, "m", int(self.m))
        object.__setattr__(self, "mode", Mode(self.mode))

    @property
    def interleaved(self) -> bool:
        return self.mode is Mode.INTERLEAVED


@dataclass(frozen=True)
class Datum:
    design: ExperimentDesign
    shots: int
    survivals: int

    def __post_init__(self):
        if self.shots < 1:
            raise DomainError(f"shots must be positive, got {self.shots}")
        if not 0 <= self.survivals <= self.shots:
            raise DomainError(f"survivals must lie in [0, {self.shots}], got {self.survivals}")
        object.__setattr__(self, "shots", int(self.shots))
        object.__setattr__(self, "survivals", int(self.survivals))


def _as_param_array(x) -> np.ndarray:
    if isinstance(x, ModelParams):
        return x.as_array()
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1] != N_PARAMS:
        raise DomainError(f"expected trailing dimension {N_PARAMS}, got shape {arr.shape}")
    return arr


def support_violations(x) -> list[str]:
    """Names of the support constraints violated by a single parameter vector."""
    pt, pr, a, b = _as_param_array(x)
    out = []
    if not -1.0 <= a <= 1.0:
        out.append("-1 <= A <= 1")
    if not 0.0 <= b <= 1.0:
        out.append("0 <= B <= 1")
    if not 0.0 <= pt <= 1.0:
        out.append("0 <= p_tilde <= 1")
    if not 0.0 <= pr <= 1.0:
        out.append("0 <= p_ref <= 1")
    if not 0.0 <= a + b <= 1.0:
        out.append("0 <= A + B <= 1")
    return out


def in_support(x):
    """Membership in the prior support; vectorized over leading axes."""
    arr = _as_param_array(x)
    pt, pr, a, b = (arr[..., i] for i in range(N_PARAMS))
    ok = (
        (a >= -1.0) & (a <= 1.0)
        & (b >= 0.0) & (b <= 1.0)
        & (pt >= 0.0) & (pt <= 1.0)
        & (pr >= 0.0) & (pr <= 1.0)
        & (a + b >= 0.0) & (a + b <= 1.0)
    )
    if np.ndim(ok) == 0:
        return bool(ok)
    return ok


def decay_base(params, interleaved: bool) -> np.ndarray:
    arr = _as_param_array(params)
    return arr[..., 1] * arr[..., 0] if interleaved else arr[..., 1]


def survival_probabilities(params, m: int, interleaved: bool) -> np.ndarray:
    """Unchecked, vectorized survival probability for an array of hypotheses."""
    arr = _as_param_array(params)
    return arr[..., 2] * decay_base(arr, interleaved) ** m + arr[..., 3]


def survival_probability(x, e: ExperimentDesign) -> float:
    arr = _as_param_array(x)
    bad = support_violations(arr)
    if bad:
        raise DomainError("parameters outside support: " + ", ".join(bad))
    q = float(survival_probabilities(arr, e.m, e.interleaved))
    return min(max(q, 0.0), 1.0)


def _binomial_logpmf(k: int, n: int, q) -> np.ndarray:
    q = np.clip(q, 0.0, 1.0)
    log_binom = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
    return log_binom + xlogy(k, q) + xlog1py(n - k, -q)


def log_likelihoods(params, datum: Datum) -> np.ndarray:
    """Binomial log-likelihood of one datum for each row of ``params``."""
    q = survival_probabilities(params, datum.design.m, datum.design.interleaved)
    return _binomial_logpmf(datum.survivals, datum.shots, q)


def log_likelihood(x, datum: Datum) -> float:
    q = survival_probability(x, datum.design)
    return float(_binomial_logpmf(datum.survivals, datum.shots, q))


def ideal_params(d: int) -> tuple[float, float]:
    """Ideal SPAM (A, B) = (1 - 1/d, 1/d)."""
    if d < 2:
        raise DomainError(f"dimension must be at least 2, got {d}")
    return 1.0 - 1.0 / d, 1.0 / d


def p_from_fidelity(F: float, d: int) -> float:
    if d < 2:
        raise DomainError(f"dimension must be at least 2, got {d}")
    p = (d * F - 1.0) / (d - 1.0)
    if p < 0:
        warnings.warn(f"F={F} < 1/d gives p={p} outside support", OutOfSupportWarning, stacklevel=2)
    return p


def fidelity_from_p(p: float, d: int) -> float:
    if d < 2:
        raise DomainError(f"dimension must be at least 2, got {d}")
    return (p * (d - 1.0) + 1.0) / d


@dataclass(frozen=True)
class PriorSpec:
    """Diagonal normal prior truncated to the support by rejection.

    A zero entry of ``sigma`` pins that component at its mean.
    """

    mean: ModelParams
    sigma: tuple = field(default=(0.01, 0.01, 0.01, 0.01))

    def __post_init__(self):
        if not isinstance(self.mean, ModelParams):
            object.__setattr__(self, "mean", ModelParams.from_array(self.mean))
        sig = np.broadcast_to(np.asarray(self.sigma, dtype=float), (N_PARAMS,))
        if np.any(sig < 0) or not np.all(np.isfinite(sig)):
            raise DomainError(f"prior deviations must be finite and nonnegative, got {sig}")
        object.__setattr__(self, "sigma", tuple(float(s) for s in sig))
        bad = support_violations(self.mean)
        if bad:
            raise DomainError("prior mean outside support: " + ", ".join(bad))

    @property
    def sigma_array(self) -> np.ndarray:
        return np.asarray(self.sigma)

    @property
    def is_point_mass(self) -> bool:
        return not np.any(self.sigma_array > 0)

    def information(self) -> np.ndarray:
        """Fisher information of the (untruncated) prior density, diag(1/sigma^2).

        Pinned components contribute nothing.
        """
        s = self.sigma_array
        diag = np.zeros(N_PARAMS)
        diag[s > 0] = 1.0 / s[s > 0] ** 2
        return np.diag(diag)

    def draw(self, n: int, rng: np.random.Generator, min_acceptance: float = 1e-3) -> np.ndarray:
        """``n`` draws from the truncated prior as an (n, 4) array."""
        mu = self.mean.as_array()
        sig = self.sigma_array
        out = np.empty((n, N_PARAMS))
        filled = 0
        proposed = 0
        batch = max(n, 64)
        while filled < n:
            cand = mu + sig * rng.standard_normal((batch, N_PARAMS))
            proposed += batch
            cand = cand[in_support(cand)]
            take = min(len(cand), n - filled)
            out[filled:filled + take] = cand[:take]
            filled += take
            if filled < n and proposed >= 1000 / min_acceptance and filled / proposed < min_acceptance:
                raise SamplingError(
                    f"prior acceptance rate {filled / proposed:.2e} below {min_acceptance:.0e}"
                )
        return out
