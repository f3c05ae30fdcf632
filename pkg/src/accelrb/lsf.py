"""Least-squares baseline: per-mode fits of ``A p**m + B`` to observed survival
frequencies, combined into a ratio estimate of the interleaved parameter.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DomainError, RatioUndefinedError, UnderdeterminedFitError
from .model import Datum, ModelParams

# fitted vector is (A, B, p)
BOX_LO = np.array([-1.0, 0.0, 0.0])
BOX_HI = np.array([1.0, 1.0, 1.0])


@dataclass
class FitResult:
    params: tuple[float, float, float]
    residual_norm: float
    converged: bool
    iterations: int

    @property
    def A(self) -> float:
        return self.params[0]

    @property
    def B(self) -> float:
        return self.params[1]

    @property
    def p(self) -> float:
        return self.params[2]


def decay_model(m: np.ndarray, theta: np.ndarray) -> np.ndarray:
    a, b, p = theta
    return a * p**m + b


def decay_jacobian(m: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Columns d/dA, d/dB, d/dp of ``A p**m + B``."""
    a, _, p = theta
    m = np.asarray(m, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        dp = np.where(m == 0, 0.0, a * m * p ** (m - 1))
    return np.column_stack([p**m, np.ones_like(m), dp])


def _prepare(points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    arr = np.array([(float(m), float(f), float(k)) for m, f, k in points], dtype=float)
    if arr.size == 0:
        raise UnderdeterminedFitError("no points to fit")
    order = np.lexsort((arr[:, 2], arr[:, 1], arr[:, 0]))
    arr = arr[order]
    m, freq, shots = arr.T
    if np.any((freq < 0) | (freq > 1)):
        raise DomainError("observed frequencies must lie in [0, 1]")
    if len(np.unique(m)) < 3:
        raise UnderdeterminedFitError(f"need at least 3 distinct sequence lengths, got {len(np.unique(m))}")
    return m, freq, shots


def fit_zeroth_order(
    points: Iterable[tuple[int, float, int]],
    guess: Sequence[float],
    weighted: bool = False,
    max_iter: int = 500,
    step_tol: float = 1e-10,
) -> FitResult:
    """Levenberg-Marquardt fit of ``(A, B, p)`` with the box enforced by clipping.

    ``points`` holds ``(m, observed_frequency, shots)``; shots only matter when
    ``weighted`` is set.
    """
    m, y, shots = _prepare(points)
    sw = np.sqrt(shots) if weighted else np.ones_like(y)

    theta = np.clip(np.asarray(guess, dtype=float), BOX_LO, BOX_HI)
    r = sw * (y - decay_model(m, theta))
    cost = r @ r
    lam = 1e-3
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        J = sw[:, None] * decay_jacobian(m, theta)
        JTJ = J.T @ J
        grad = J.T @ r
        scale = np.maximum(np.diag(JTJ), 1e-12 * max(np.trace(JTJ), 1.0))
        while True:
            try:
                step = np.linalg.solve(JTJ + lam * np.diag(scale), grad)
            except np.linalg.LinAlgError:
                step = np.zeros(3)
            trial = np.clip(theta + step, BOX_LO, BOX_HI)
            r_trial = sw * (y - decay_model(m, trial))
            cost_trial = r_trial @ r_trial
            if cost_trial <= cost:
                lam = max(lam / 10.0, 1e-12)
                break
            lam *= 10.0
            if lam > 1e16:
                # no descent direction inside the box: stationary point
                trial, r_trial, cost_trial = theta, r, cost
                break
        taken = trial - theta
        theta, r, cost = trial, r_trial, cost_trial
        if np.linalg.norm(taken) < step_tol:
            converged = True
            break

    return FitResult(
        params=tuple(float(v) for v in theta),
        residual_norm=float(np.sqrt(cost)),
        converged=converged,
        iterations=it,
    )


def points_from_dataset(dataset: Sequence[Datum]) -> tuple[list, list]:
    """Aggregate a dataset into per-mode ``(m, frequency, shots)`` lists."""
    pooled: dict[tuple[bool, int], list[int]] = {}
    for d in dataset:
        tot = pooled.setdefault((d.design.interleaved, d.design.m), [0, 0])
        tot[0] += d.survivals
        tot[1] += d.shots
    ref, inter = [], []
    for (is_int, m), (s, k) in sorted(pooled.items()):
        (inter if is_int else ref).append((m, s / k, k))
    return ref, inter


def lsf_interleaved_estimate(
    ref_points, int_points, guess: ModelParams, weighted: bool = False
) -> tuple[ModelParams, dict]:
    """Separate reference and interleaved fits; ``p_tilde = p_interleaved / p_ref``.

    A and B come from the reference fit.
    """
    ref_fit = fit_zeroth_order(ref_points, (guess.A, guess.B, guess.p_ref), weighted=weighted)
    int_fit = fit_zeroth_order(
        int_points, (guess.A, guess.B, guess.p_ref * guess.p_tilde), weighted=weighted
    )
    if ref_fit.p == 0.0:
        raise RatioUndefinedError("reference decay fitted to p_ref = 0; ratio undefined")
    est = ModelParams(
        p_tilde=int_fit.p / ref_fit.p,
        p_ref=ref_fit.p,
        A=ref_fit.A,
        B=ref_fit.B,
    )
    return est, {"reference": ref_fit, "interleaved": int_fit}


def lsf_from_dataset(dataset: Sequence[Datum], guess: ModelParams, weighted: bool = False):
    ref, inter = points_from_dataset(dataset)
    return lsf_interleaved_estimate(ref, inter, guess, weighted=weighted)
