"""Fisher score and information for the interleaved model, Cramer-Rao style
bounds, and sequence-length optimization.

Information matrices are 4x4 in parameter order ``(p_tilde, p_ref, A, B)`` and
carry per-shot units; aggregate over shots with :func:`total_information`.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import DivergenceError, DomainError, SingularLikelihoodError
from .model import (
    N_PARAMS,
    ExperimentDesign,
    Mode,
    PriorSpec,
    _as_param_array,
    support_violations,
    survival_probabilities,
)

PINV_RCOND = 1e-10

DesignList = Sequence[tuple[ExperimentDesign, int]]


def _power(base, m: int, k: int):
    """``m * base**(m - k)`` style factors with the m=0 (and 0**negative) case mapped to 0."""
    if m == 0:
        return np.zeros_like(np.asarray(base, dtype=float))
    return base ** (m - k)


def survival_gradient(params, m: int, interleaved: bool) -> np.ndarray:
    """Gradient of the survival probability with respect to the parameters."""
    arr = _as_param_array(params)
    pt, pr, a = arr[..., 0], arr[..., 1], arr[..., 2]
    grad = np.zeros(arr.shape, dtype=float)
    if interleaved:
        grad[..., 0] = a * m * _power(pt, m, 1) * pr**m
        grad[..., 1] = a * m * pt**m * _power(pr, m, 1)
        grad[..., 2] = (pt * pr) ** m
    else:
        grad[..., 1] = a * m * _power(pr, m, 1)
        grad[..., 2] = pr**m
    grad[..., 3] = 1.0
    return grad


def _checked_q(x, e: ExperimentDesign) -> tuple[np.ndarray, float]:
    arr = _as_param_array(x)
    bad = support_violations(arr)
    if bad:
        raise DomainError("parameters outside support: " + ", ".join(bad))
    q = float(survival_probabilities(arr, e.m, e.interleaved))
    if not 0.0 < q < 1.0:
        raise SingularLikelihoodError(f"survival probability {q} at m={e.m} is not strictly inside (0, 1)")
    return arr, q


def fisher_score(x, outcome: int, e: ExperimentDesign) -> np.ndarray:
    """Gradient of log Pr(outcome | x; e)."""
    arr, q = _checked_q(x, e)
    grad = survival_gradient(arr, e.m, e.interleaved)
    if outcome == 1:
        return grad / q
    if outcome == 0:
        return -grad / (1.0 - q)
    raise DomainError(f"outcome must be 0 or 1, got {outcome!r}")


def fisher_information(x, e: ExperimentDesign) -> np.ndarray:
    arr, q = _checked_q(x, e)
    grad = survival_gradient(arr, e.m, e.interleaved)
    return np.outer(grad, grad) / (q * (1.0 - q))


def _batch_information(params: np.ndarray, designs: DesignList) -> np.ndarray:
    """Total information at each row of ``params``; shape (n, 4, 4)."""
    params = np.atleast_2d(params)
    out = np.zeros((params.shape[0], N_PARAMS, N_PARAMS))
    for e, shots in designs:
        q = survival_probabilities(params, e.m, e.interleaved)
        if np.any((q <= 0.0) | (q >= 1.0)):
            raise SingularLikelihoodError(f"survival probability on the boundary at m={e.m}")
        g = survival_gradient(params, e.m, e.interleaved)
        out += (shots / (q * (1.0 - q)))[:, None, None] * g[:, :, None] * g[:, None, :]
    return out


def total_information(x, designs: DesignList) -> np.ndarray:
    """Sum of ``shots * fisher_information`` over independent designs."""
    arr = _as_param_array(x)
    total = np.zeros((N_PARAMS, N_PARAMS))
    for e, shots in designs:
        total += shots * fisher_information(arr, e)
    return total


def bounded_inverse(mat: np.ndarray, rcond: float = PINV_RCOND) -> tuple[np.ndarray, int]:
    """Inverse of a symmetric PSD matrix, or its Moore-Penrose pseudo-inverse
    when singular values fall below ``rcond`` times the largest.

    Returns the inverse and the numerical rank.
    """
    mat = np.asarray(mat, dtype=float)
    u, s, vt = np.linalg.svd(mat)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros_like(mat), 0
    keep = s > rcond * s[0]
    inv = (vt[keep].T / s[keep]) @ u[:, keep].T
    return inv, int(keep.sum())


def information_rank(mat: np.ndarray, rcond: float = PINV_RCOND) -> int:
    return bounded_inverse(mat, rcond)[1]


def crb(x, designs: DesignList) -> np.ndarray:
    if not designs:
        raise DomainError("at least one design is required")
    return bounded_inverse(total_information(x, designs))[0]


def single_param_bound(x, designs: DesignList) -> float:
    """Lower bound 1 / I[p_tilde, p_tilde] on the p_tilde error; +inf without interleaved data."""
    info = total_information(x, designs)[0, 0]
    return float("inf") if info <= 0.0 else 1.0 / info


def _as_m_grid(m_range) -> np.ndarray:
    if isinstance(m_range, range):
        grid = np.arange(m_range.start, m_range.stop, m_range.step)
    elif isinstance(m_range, tuple) and len(m_range) == 2:
        grid = np.arange(int(m_range[0]), int(m_range[1]) + 1)
    else:
        grid = np.asarray(sorted(set(int(m) for m in m_range)))
    if grid.size == 0:
        raise DomainError("empty sequence-length range")
    return grid


def information_profile(x, mode: Mode | str, m_range) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal information element for the decay parameter of ``mode``
    (p_tilde for interleaved, p_ref for reference) at each m in ``m_range``."""
    mode = Mode(mode)
    arr = _as_param_array(x)
    bad = support_violations(arr)
    if bad:
        raise DomainError("parameters outside support: " + ", ".join(bad))
    grid = _as_m_grid(m_range)
    pt, pr, a, b = arr
    with np.errstate(divide="ignore", invalid="ignore"):
        if mode is Mode.INTERLEAVED:
            q = a * (pt * pr) ** grid + b
            g = a * grid * pt ** (grid - 1.0) * pr**grid
        else:
            q = a * pr**grid + b
            g = a * grid * pr ** (grid - 1.0)
        info = g**2 / (q * (1.0 - q))
    return grid, info


def optimal_m(x, mode: Mode | str, m_range) -> int:
    """Integer m in ``m_range`` maximizing the decay-parameter information; ties go to smaller m."""
    grid, info = information_profile(x, mode, m_range)
    info = np.where(np.isfinite(info), info, -np.inf)
    if not np.any(np.isfinite(info)):
        raise SingularLikelihoodError("information undefined at every m in range")
    return int(grid[int(np.argmax(info))])


def optimal_m_large_d(F_tilde: float, F_ref: float) -> float:
    prod = F_tilde * F_ref
    if prod == 1.0:
        raise DivergenceError("optimal length diverges when F_tilde * F_ref = 1")
    if not 0.0 < prod < 1.0:
        raise DomainError(f"F_tilde * F_ref must lie in (0, 1), got {prod}")
    return 1.0 / (1.0 - prod)


def bayesian_information_matrix(
    prior: PriorSpec,
    designs: DesignList,
    n_samples: int = 10_000,
    rng: np.random.Generator | None = None,
    return_stderr: bool = False,
    chunk: int = 2048,
):
    """Monte Carlo estimate of the prior-averaged Fisher information.

    With ``return_stderr`` also returns the entrywise standard error.
    """
    if n_samples < 1:
        raise DomainError("n_samples must be at least 1")
    rng = np.random.default_rng() if rng is None else rng
    draws = prior.draw(n_samples, rng)
    total = np.zeros((N_PARAMS, N_PARAMS))
    total_sq = np.zeros((N_PARAMS, N_PARAMS))
    # fixed-order chunked reduction keeps results independent of memory tuning
    for start in range(0, n_samples, chunk):
        infos = _batch_information(draws[start:start + chunk], designs)
        total += infos.sum(axis=0)
        total_sq += (infos**2).sum(axis=0)
    mean = total / n_samples
    if not return_stderr:
        return mean
    if n_samples > 1:
        var = np.maximum(total_sq / n_samples - mean**2, 0.0) * n_samples / (n_samples - 1)
        stderr = np.sqrt(var / n_samples)
    else:
        stderr = np.full_like(mean, np.inf)
    return mean, stderr


def bcrb(
    prior: PriorSpec,
    designs: DesignList,
    n_samples: int = 10_000,
    rng: np.random.Generator | None = None,
    include_prior: bool = True,
) -> np.ndarray:
    """Bayesian Cramer-Rao bound.

    ``include_prior`` adds the prior's own information diag(1/sigma^2)
    (van Trees form); the bound is then never looser than the prior variance.
    """
    J = bayesian_information_matrix(prior, designs, n_samples, rng)
    if include_prior:
        J = J + prior.information()
    return bounded_inverse(J)[0]


def designs_from_lengths(
    reference_lengths: Iterable[int], interleaved_lengths: Iterable[int], shots: int
) -> list[tuple[ExperimentDesign, int]]:
    """Design list ordered by ascending m, reference before interleaved at equal m."""
    ref = [(ExperimentDesign(m, Mode.REFERENCE), shots) for m in reference_lengths]
    inter = [(ExperimentDesign(m, Mode.INTERLEAVED), shots) for m in interleaved_lengths]
    return sorted(ref + inter, key=lambda d: (d[0].m, d[0].interleaved))
