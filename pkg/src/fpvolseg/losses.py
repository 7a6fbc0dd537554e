"""Segmentation losses with analytic gradients.

Every loss takes predicted probabilities ``p`` and a binary target ``g`` of
the same shape, reduces over all voxels, and returns ``(loss, grad)`` where
``grad`` has the shape of ``p``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .validation import check_probability_pair

PROB_CLIP = 1e-7
DEFAULT_SMOOTH = 1e-5


@dataclass(frozen=True)
class TverskyParams:
    alpha: float = 0.3
    beta: float = 0.7
    smooth: float = DEFAULT_SMOOTH

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0 or self.alpha + self.beta <= 0:
            raise ParameterError(f"need alpha, beta >= 0 with alpha + beta > 0, got {self.alpha}, {self.beta}")
        if not self.smooth > 0:
            raise ParameterError(f"smooth must be positive, got {self.smooth}")


@dataclass(frozen=True)
class LossWeights:
    w_ce: float = 1.0
    w_softdice: float = 1.0
    w_tversky: float = 1.0

    def __post_init__(self):
        ws = (self.w_ce, self.w_softdice, self.w_tversky)
        if any(w < 0 for w in ws):
            raise ParameterError(f"loss weights must be non-negative, got {ws}")

    @property
    def all_zero(self):
        return self.w_ce == 0 and self.w_softdice == 0 and self.w_tversky == 0


def bce(p, g):
    shape = np.shape(p)
    p, g = check_probability_pair(p, g)
    p = np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)
    n = p.size
    loss = -np.sum(g * np.log(p) + (1.0 - g) * np.log1p(-p)) / n
    grad = (p - g) / (n * p * (1.0 - p))
    return float(loss), grad.reshape(shape)


def dice_loss(p, g, smooth=DEFAULT_SMOOTH):
    shape = np.shape(p)
    p, g = check_probability_pair(p, g)
    num = 2.0 * np.dot(p, g) + smooth
    den = p.sum() + g.sum() + smooth
    grad = -(2.0 * g * den - num) / den**2
    return float(1.0 - num / den), grad.reshape(shape)


def soft_dice_loss(p, g, smooth=DEFAULT_SMOOTH):
    """Dice loss with squared sums in the denominator."""
    shape = np.shape(p)
    p, g = check_probability_pair(p, g)
    num = 2.0 * np.dot(p, g) + smooth
    den = np.dot(p, p) + np.dot(g, g) + smooth
    grad = -(2.0 * g * den - num * 2.0 * p) / den**2
    return float(1.0 - num / den), grad.reshape(shape)


def tversky_loss(p, g, params=TverskyParams()):
    shape = np.shape(p)
    p, g = check_probability_pair(p, g)
    a, b, s = params.alpha, params.beta, params.smooth
    tp = np.dot(p, g)
    fp = p.sum() - tp
    fn = g.sum() - tp
    num = tp + s
    den = tp + a * fp + b * fn + s
    dden = g + a * (1.0 - g) - b * g
    grad = -(g * den - num * dden) / den**2
    return float(1.0 - num / den), grad.reshape(shape)


def combined_loss(p, g, weights=LossWeights(), tversky=TverskyParams()):
    """Weighted sum of BCE, soft dice and Tversky losses."""
    if weights.all_zero:
        raise ParameterError("at least one loss weight must be positive")
    loss = 0.0
    grad = np.zeros(np.shape(p), dtype=np.float64)
    terms = (
        (weights.w_ce, lambda: bce(p, g)),
        (weights.w_softdice, lambda: soft_dice_loss(p, g, tversky.smooth)),
        (weights.w_tversky, lambda: tversky_loss(p, g, tversky)),
    )
    for w, term in terms:
        if w == 0:
            continue
        value, dp = term()
        loss += w * value
        grad += w * dp
    return loss, grad
