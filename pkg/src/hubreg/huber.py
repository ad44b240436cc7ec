"""Huber loss, its score function, and the penalized Huber objective.

The estimator minimizes

    sum_i lambda_o**2 * H((y_i - x_i' beta) / (lambda_o * sqrt(n))) + lambda_s * ||beta||_1

where H is the Huber loss with threshold 1. Everything is evaluated on the
scaled residual ``u_i = r_i / (lambda_o * sqrt(n))`` so that very large
``lambda_o`` does not overflow.
"""

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """Array dimensions are inconsistent."""


class DomainError(ValueError):
    """An input lies outside the domain of the operation (e.g. non-finite)."""


@dataclass(frozen=True)
class PenaltyConfig:
    """Tuning parameters of the estimator.

    Attributes
    ----------
    lambda_o : float
        Huber scale; residuals beyond ``lambda_o * sqrt(n)`` enter linearly.
    lambda_s : float
        Weight of the l1 penalty.
    """

    lambda_o: float
    lambda_s: float

    def __post_init__(self):
        if not np.isfinite(self.lambda_o) or self.lambda_o <= 0:
            raise DomainError(f"lambda_o must be positive, got {self.lambda_o}")
        if not np.isfinite(self.lambda_s) or self.lambda_s < 0:
            raise DomainError(f"lambda_s must be nonnegative, got {self.lambda_s}")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Observed sample: design ``X`` (n x d) and responses ``y`` (n,)."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if X.ndim != 2:
            raise ShapeError(f"X must be 2-D, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ShapeError(f"y must have shape ({X.shape[0]},), got {y.shape}")
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ShapeError(f"need n >= 1 and d >= 1, got {X.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DomainError("dataset contains non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.X[rows], self.y[rows])


@dataclass(frozen=True)
class ObjectiveValue:
    smooth: float
    penalty: float
    total: float


def _check_finite(t):
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise DomainError("Huber functions require finite input")
    return t


def huber_loss(t):
    """Huber loss with unit threshold: ``t**2/2`` for ``|t| <= 1``, else ``|t| - 1/2``.

    Accepts scalars or arrays; returns the same shape.
    """
    t = _check_finite(t)
    a = np.abs(t)
    out = np.where(a <= 1.0, 0.5 * t * t, a - 0.5)
    return out if out.ndim else float(out)


def huber_score(t):
    """Derivative of :func:`huber_loss`, i.e. ``t`` clipped to ``[-1, 1]``."""
    t = _check_finite(t)
    out = np.clip(t, -1.0, 1.0)
    return out if out.ndim else float(out)


def _check_beta(beta, data):
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (data.d,):
        raise ShapeError(f"beta must have shape ({data.d},), got {beta.shape}")
    return beta


def _scale(data, cfg):
    return cfg.lambda_o * np.sqrt(data.n)


def objective(beta, data: Dataset, cfg: PenaltyConfig) -> ObjectiveValue:
    """Penalized Huber objective split into data-fit and penalty terms."""
    beta = _check_beta(beta, data)
    u = (data.y - data.X @ beta) / _scale(data, cfg)
    smooth = float(cfg.lambda_o**2 * np.sum(huber_loss(u)))
    penalty = float(cfg.lambda_s * np.sum(np.abs(beta)))
    return ObjectiveValue(smooth, penalty, smooth + penalty)


def gradient_smooth(beta, data: Dataset, cfg: PenaltyConfig) -> np.ndarray:
    """Gradient of the Huber data-fit term:
    ``-(lambda_o / sqrt(n)) * sum_i h(u_i) x_i``.
    """
    beta = _check_beta(beta, data)
    u = (data.y - data.X @ beta) / _scale(data, cfg)
    return -(cfg.lambda_o / np.sqrt(data.n)) * (data.X.T @ huber_score(u))
