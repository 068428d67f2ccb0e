"""Class-weighted cross entropy, F-beta dice loss, and their stochastic variants.

The stochastic losses redraw their weights (class weights, or beta) from a
discretized uniform range once per call, i.e. once per mini-batch.
"""
from __future__ import annotations

import dataclasses
import math

import numpy as np
import torch

from .errors import ConfigurationError

LOG_FLOOR = math.log(1e-12)
FBETA_EPS = 1e-7


@dataclasses.dataclass(frozen=True)
class WeightSampler:
    """Uniform distribution over ``{low, low + step, ..., high}``."""

    low: float
    high: float
    step: float

    def __post_init__(self):
        if self.step <= 0:
            raise ConfigurationError(f"sampler step must be positive, got {self.step}")
        if self.high < self.low:
            raise ConfigurationError(f"sampler high {self.high} < low {self.low}")
        if self.low < 0:
            raise ConfigurationError(f"sampler low must be >= 0, got {self.low}")

    @property
    def n_values(self) -> int:
        # the tolerance absorbs float error in ranges such as (1, 2, 0.1)
        return int(math.floor((self.high - self.low) / self.step + 1e-9)) + 1

    def values(self) -> np.ndarray:
        return np.array([self.value_at(i) for i in range(self.n_values)])

    def value_at(self, index: int) -> float:
        return round(self.low + index * self.step, 12)


@dataclasses.dataclass(frozen=True)
class ClassWeights:
    w_background: float
    w_vessel: float

    def __post_init__(self):
        if not (self.w_background > 0 and self.w_vessel > 0):
            raise ConfigurationError(f"class weights must be positive: {self}")

    def as_tensor(self, dtype=torch.float64) -> torch.Tensor:
        return torch.tensor([self.w_background, self.w_vessel], dtype=dtype)


@dataclasses.dataclass
class PixelPrediction:
    """Per-pixel (background, vessel) probabilities with integer targets.

    ``probs`` has shape (N, 2, H, W); ``target`` and ``valid_mask`` (N, H, W).
    """

    probs: torch.Tensor
    target: torch.Tensor
    valid_mask: torch.Tensor | None = None

    def __post_init__(self):
        self.probs = torch.as_tensor(self.probs)
        if not self.probs.is_floating_point():
            self.probs = self.probs.double()
        self.target = torch.as_tensor(self.target).long()
        if self.valid_mask is not None:
            self.valid_mask = torch.as_tensor(self.valid_mask).bool()
        if self.probs.ndim != 4 or self.probs.shape[1] != 2:
            raise ValueError(f"probs must be (N, 2, H, W), got {tuple(self.probs.shape)}")
        spatial = (self.probs.shape[0],) + tuple(self.probs.shape[2:])
        if tuple(self.target.shape) != spatial:
            raise ValueError("target shape does not match probs")
        if self.valid_mask is not None and tuple(self.valid_mask.shape) != spatial:
            raise ValueError("valid_mask shape does not match probs")
        with torch.no_grad():
            p = self.probs.detach()
            if (p < 0).any() or (p > 1).any():
                raise ValueError("probabilities must lie in [0, 1]")
            if not torch.allclose(p.sum(1), torch.ones_like(p[:, 0]), atol=1e-6, rtol=0):
                raise ValueError("per-pixel probabilities must sum to 1")

    def mask(self) -> torch.Tensor:
        if self.valid_mask is None:
            return torch.ones_like(self.target, dtype=torch.bool)
        return self.valid_mask


def sample_weight(sampler: WeightSampler, rng: np.random.Generator) -> float:
    return sampler.value_at(int(rng.integers(0, sampler.n_values)))


def sample_class_weights(sampler: WeightSampler, rng: np.random.Generator) -> ClassWeights:
    """Two independent draws: background first, then vessel."""
    w_bg = sample_weight(sampler, rng)
    w_v = sample_weight(sampler, rng)
    return ClassWeights(w_bg, w_v)


def weighted_nll(
    log_q: torch.Tensor,
    target: torch.Tensor,
    weights: ClassWeights,
    valid: torch.Tensor | None = None,
) -> torch.Tensor:
    """Mean over valid pixels of ``-w[t] * log q_t`` given log-probabilities."""
    log_q = log_q.clamp_min(LOG_FLOOR)
    picked = log_q.gather(1, target.unsqueeze(1)).squeeze(1)
    w = weights.as_tensor(log_q.dtype).to(log_q.device)[target]
    terms = -w * picked
    if valid is not None:
        terms = terms[valid]
    if terms.numel() == 0:
        raise ValueError("no pixels to score")
    return terms.mean()


def weighted_cross_entropy_from_probs(
    probs: torch.Tensor,
    target: torch.Tensor,
    weights: ClassWeights,
    valid: torch.Tensor | None = None,
) -> torch.Tensor:
    """Same as :func:`weighted_cross_entropy` without the probability checks."""
    return weighted_nll(torch.log(probs.clamp_min(1e-12)), target, weights, valid)


def weighted_cross_entropy(pred: PixelPrediction, weights: ClassWeights) -> torch.Tensor:
    return weighted_cross_entropy_from_probs(pred.probs, pred.target, weights, pred.valid_mask)


def weighted_cross_entropy_grad(
    probs: np.ndarray, target: np.ndarray, weights: ClassWeights, valid: np.ndarray | None = None
) -> np.ndarray:
    """Closed-form d(loss)/d(probs) for the mean-reduced weighted cross entropy."""
    probs = np.asarray(probs, dtype=np.float64)
    target = np.asarray(target)
    valid = np.ones(target.shape, bool) if valid is None else np.asarray(valid, bool)
    n = valid.sum()
    if n == 0:
        raise ValueError("no pixels to score")
    w = np.array([weights.w_background, weights.w_vessel])
    grad = np.zeros_like(probs)
    q_t = np.take_along_axis(probs, target[:, None], axis=1)[:, 0]
    # the clamp at 1e-12 has zero slope below the floor
    g_t = np.where(valid & (q_t > 1e-12), -w[target] / (np.maximum(q_t, 1e-12) * n), 0.0)
    np.put_along_axis(grad, target[:, None], g_t[:, None], axis=1)
    return grad


def dynamic_cross_entropy(
    pred: PixelPrediction, sampler: WeightSampler, rng: np.random.Generator
) -> tuple[torch.Tensor, ClassWeights]:
    drawn = sample_class_weights(sampler, rng)
    return weighted_cross_entropy(pred, drawn), drawn


def f_beta_from_pr(precision, recall, beta: float, eps: float = FBETA_EPS):
    """F-beta from (soft) precision and recall; works on floats and tensors."""
    if beta <= 0:
        raise ConfigurationError(f"beta must be positive, got {beta}")
    b2 = beta * beta
    return (1 + b2) * precision * recall / (b2 * precision + recall + eps)


def soft_precision_recall(
    q_vessel: torch.Tensor, target: torch.Tensor, valid: torch.Tensor | None = None
) -> tuple[torch.Tensor, torch.Tensor]:
    t = target.to(q_vessel.dtype)
    if valid is not None:
        v = valid.to(q_vessel.dtype)
        q_vessel = q_vessel * v
        t = t * v
    overlap = (q_vessel * t).sum()
    precision = overlap / (q_vessel.sum() + FBETA_EPS)
    recall = overlap / (t.sum() + FBETA_EPS)
    return precision, recall


def f_beta_score(pred: PixelPrediction, beta: float) -> torch.Tensor:
    if beta <= 0:
        raise ConfigurationError(f"beta must be positive, got {beta}")
    p, r = soft_precision_recall(pred.probs[:, 1], pred.target, pred.valid_mask)
    return f_beta_from_pr(p, r, beta)


def dice_loss(pred: PixelPrediction, beta: float) -> torch.Tensor:
    return 1 - f_beta_score(pred, beta)


def dice_loss_grad(
    q_vessel: np.ndarray, target: np.ndarray, beta: float, valid: np.ndarray | None = None
) -> np.ndarray:
    """Closed-form d(1 - F_beta)/d(q_vessel) for the soft precision/recall form."""
    q = np.asarray(q_vessel, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    v = np.ones_like(q) if valid is None else np.asarray(valid, dtype=np.float64)
    q, t = q * v, t * v
    s, qs, ts = (q * t).sum(), q.sum(), t.sum()
    e = FBETA_EPS
    p = s / (qs + e)
    r = s / (ts + e)
    b2 = beta * beta
    d = b2 * p + r + e
    df_dp = (1 + b2) * r * (r + e) / d**2
    df_dr = (1 + b2) * p * (b2 * p + e) / d**2
    dp_dq = t / (qs + e) - s / (qs + e) ** 2
    dr_dq = t / (ts + e)
    return -(df_dp * dp_dq + df_dr * dr_dq) * v


def dynamic_dice_loss(
    pred: PixelPrediction, beta_sampler: WeightSampler, rng: np.random.Generator
) -> tuple[torch.Tensor, float]:
    beta = sample_weight(beta_sampler, rng)
    return dice_loss(pred, beta), beta
