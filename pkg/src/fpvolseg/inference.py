"""Ensembling, thresholding and morphological clean-up of probability volumes."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionError, ParameterError, RangeError
from .patches import gaussian_weight_map, sliding_window_infer
from .validation import check_kind


@dataclass(frozen=True)
class EnsembleSpec:
    """Named members with positive weights, normalized to sum to one."""

    members: tuple

    def __post_init__(self):
        members = tuple((str(name), float(w)) for name, w in self.members)
        if not members:
            raise ParameterError("an ensemble needs at least one member")
        if any(not w > 0 for _, w in members):
            raise ParameterError("ensemble weights must be positive")
        total = sum(w for _, w in members)
        object.__setattr__(self, "members", tuple((n, w / total) for n, w in members))

    @property
    def weights(self):
        return [w for _, w in self.members]


def ensemble_average(probs, spec):
    if len(probs) != len(spec.members):
        raise DimensionError(f"{len(probs)} volumes given for {len(spec.members)} ensemble members")
    for p in probs:
        check_kind(p, "probability")
        if p.shape != probs[0].shape:
            raise DimensionError(f"ensemble member shapes differ: {probs[0].shape} vs {p.shape}")
    acc = np.zeros(probs[0].shape, dtype=np.float64)
    for p, w in zip(probs, spec.weights):
        acc += w * p.data.astype(np.float64)
    return probs[0].with_data(np.clip(acc, 0.0, 1.0), "probability")


def threshold_prob(prob, t=0.5):
    """Binarize with a strict ``prob > t`` rule."""
    if not 0.0 < t < 1.0:
        raise RangeError(f"threshold must lie in (0, 1), got {t}")
    check_kind(prob, "probability")
    return prob.with_data(prob.data > t, "mask")


def ball_element(radius):
    """Boolean structuring element of voxel radius ``radius``.

    Radius 1 is the full 3x3x3 neighborhood; larger radii use the discrete
    Euclidean ball ``dz^2 + dy^2 + dx^2 <= r^2``.
    """
    radius = int(radius)
    if radius < 1:
        raise ParameterError(f"structuring element radius must be >= 1, got {radius}")
    if radius == 1:
        return np.ones((3, 3, 3), dtype=bool)
    r = np.arange(-radius, radius + 1)
    zz, yy, xx = np.meshgrid(r, r, r, indexing="ij")
    return zz**2 + yy**2 + xx**2 <= radius**2


def erode(mask, radius=1):
    """Erosion treating everything outside the volume as background."""
    check_kind(mask, "mask")
    out = ndimage.binary_erosion(mask.data > 0, structure=ball_element(radius), border_value=0)
    return mask.with_data(out)


def dilate(mask, radius=1):
    check_kind(mask, "mask")
    out = ndimage.binary_dilation(mask.data > 0, structure=ball_element(radius))
    return mask.with_data(out)


def postprocess_open(mask, radius=1):
    """Morphological opening: drops structures the element cannot fit inside."""
    return dilate(erode(mask, radius), radius)


def predict_volume(mc, predictor, patch_size, overlap=0.5, sigma_scale=1.0 / 8.0):
    """Sliding-window probability map of ``mc`` with a Gaussian weight map."""
    wmap = gaussian_weight_map(patch_size, sigma_scale)
    return sliding_window_infer(mc, predictor, overlap, wmap)
