"""Position-error statistics for localisation runs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_SUCCESS_THRESHOLD = 1.0


@dataclass(frozen=True)
class ErrorReport:
    """Summary of a per-epoch position error series.

    ``series`` keeps NaN for epochs without an estimate. ``std`` is the
    population standard deviation, so ``rmse**2 == mean**2 + std**2``.
    """

    rmse: float
    mean: float
    std: float
    success_rate: float
    series: np.ndarray
    success_threshold: float = DEFAULT_SUCCESS_THRESHOLD

    @property
    def n_present(self) -> int:
        return int(np.count_nonzero(~np.isnan(self.series)))


def position_errors(est, truth) -> np.ndarray:
    """Euclidean xy error per epoch; NaN where ``est`` has no estimate."""
    est = np.asarray(est, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if est.shape[0] != truth.shape[0]:
        raise ValueError(f"length mismatch: {est.shape[0]} estimates vs {truth.shape[0]} truth epochs")
    return np.hypot(est[:, 0] - truth[:, 0], est[:, 1] - truth[:, 1])


def summarize(errors, success_threshold: float = DEFAULT_SUCCESS_THRESHOLD) -> ErrorReport:
    """RMSE, mean and population STD over present epochs.

    The success rate is taken over all epochs: an epoch without an estimate
    counts as a failure.
    """
    e = np.asarray(errors, dtype=float).ravel()
    present = e[~np.isnan(e)]
    if present.size == 0:
        raise ValueError("no epoch has an estimate; cannot summarize")
    mean = float(present.mean())
    std = float(present.std())
    rmse = float(math.sqrt(np.mean(present**2)))
    success = float(np.count_nonzero(present < success_threshold) / e.size)
    return ErrorReport(rmse, mean, std, success, e, success_threshold)


@dataclass(frozen=True)
class Reduction:
    """Percent reduction relative to a baseline; None marks not-applicable."""

    rmse: float | None
    mean: float | None
    std: float | None


def _reduce(base: float, value: float) -> float | None:
    if base == 0.0:
        return None
    return 100.0 * (base - value) / base


def proportional_reduction(baseline: ErrorReport, method: ErrorReport) -> Reduction:
    return Reduction(
        _reduce(baseline.rmse, method.rmse),
        _reduce(baseline.mean, method.mean),
        _reduce(baseline.std, method.std),
    )


def nees(err: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Per-epoch normalised estimation error squared ``e^T P^-1 e``.

    ``err`` is (T, n) and ``cov`` is (T, n, n); rows containing NaN give NaN.
    """
    err = np.asarray(err, dtype=float)
    cov = np.asarray(cov, dtype=float)
    out = np.full(err.shape[0], np.nan)
    ok = ~(np.isnan(err).any(axis=1) | np.isnan(cov).any(axis=(1, 2)))
    if np.any(ok):
        sol = np.linalg.solve(cov[ok], err[ok][..., None])[..., 0]
        out[ok] = np.einsum("ij,ij->i", err[ok], sol)
    return out


def pose_errors(est: np.ndarray, truth: np.ndarray) -> np.ndarray:
    """(T, 3) error with the heading component wrapped."""
    d = np.asarray(est, float) - np.asarray(truth, float)
    d[:, 2] = (d[:, 2] + np.pi) % (2.0 * np.pi) - np.pi
    return d
