"""Patch grids, patch cropping, and Gaussian-weighted fusion of patch predictions."""

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .errors import BoundsError, ContractError, CoverageError, DimensionError, ParameterError
from .validation import check_fraction, check_triple
from .volume import DEFAULT_SPACING_MM, Volume3D

WEIGHT_FLOOR = 1e-6
DEFAULT_SIGMA_SCALE = 1.0 / 8.0


@dataclass(frozen=True)
class PatchGrid:
    shape: tuple
    patch_size: tuple
    stride: tuple
    origins: tuple

    @property
    def padded_shape(self):
        return tuple(max(d, p) for d, p in zip(self.shape, self.patch_size))

    def __len__(self):
        return len(self.origins)


@dataclass(frozen=True)
class WeightMap:
    patch_size: tuple
    weights: np.ndarray


def _axis_origins(dim, patch, stride):
    if dim <= patch:
        return [0]
    return list(range(0, dim - patch, stride)) + [dim - patch]


def compute_grid(shape, patch_size, overlap=0.5):
    """Patch corners covering ``shape`` with the requested fractional overlap.

    Per axis the origins advance by ``floor(patch * (1 - overlap))`` and the
    last one is pulled back to ``dim - patch`` so the high edge is covered.
    Axes shorter than the patch get one origin and are zero-padded.
    """
    shape = check_triple(shape, "shape")
    patch_size = check_triple(patch_size, "patch_size")
    overlap = check_fraction(overlap, "overlap")
    # the epsilon keeps e.g. 0.3 * 10 from flooring to 2
    stride = tuple(max(1, math.floor(p * (1.0 - overlap) + 1e-9)) for p in patch_size)
    per_axis = [_axis_origins(d, p, s) for d, p, s in zip(shape, patch_size, stride)]
    origins = tuple(product(*per_axis))
    return PatchGrid(shape, patch_size, stride, origins)


def extract_array_patch(arr, origin, patch_size):
    """Crop ``patch_size`` from the trailing three axes of ``arr``, zero-padding past the edge."""
    origin = tuple(int(o) for o in origin)
    if any(o < 0 for o in origin):
        raise BoundsError(f"patch origin must be non-negative, got {origin}")
    spatial = arr.shape[-3:]
    if any(o >= d for o, d in zip(origin, spatial)):
        raise BoundsError(f"patch origin {origin} lies outside volume {spatial}")
    out = np.zeros(arr.shape[:-3] + tuple(patch_size), dtype=arr.dtype)
    stop = [min(o + p, d) for o, p, d in zip(origin, patch_size, spatial)]
    src = (...,) + tuple(slice(o, s) for o, s in zip(origin, stop))
    dst = (...,) + tuple(slice(0, s - o) for o, s in zip(origin, stop))
    out[dst] = arr[src]
    return out


def extract_patch(mc, origin, patch_size):
    """Return the (channels, pz, py, px) block of ``mc`` starting at ``origin``."""
    patch_size = check_triple(patch_size, "patch_size")
    return extract_array_patch(mc.as_array(), origin, patch_size)


def extract_grid(mc, grid):
    arr = mc.as_array()
    return [extract_array_patch(arr, o, grid.patch_size) for o in grid.origins]


def gaussian_weight_map(patch_size, sigma_scale=DEFAULT_SIGMA_SCALE):
    patch_size = check_triple(patch_size, "patch_size")
    if not sigma_scale > 0:
        raise ParameterError(f"sigma_scale must be positive, got {sigma_scale}")
    exponent = np.zeros(patch_size, dtype=np.float64)
    for axis, p in enumerate(patch_size):
        center = (p - 1) / 2.0
        sigma = sigma_scale * p
        coord = (np.arange(p, dtype=np.float64) - center) ** 2 / (2.0 * sigma**2)
        bshape = [1, 1, 1]
        bshape[axis] = p
        exponent = exponent + coord.reshape(bshape)
    weights = np.maximum(WEIGHT_FLOOR, np.exp(-exponent))
    weights.setflags(write=False)
    return WeightMap(patch_size, weights)


def fuse_patches(preds, out_shape, wmap, spacing_mm=DEFAULT_SPACING_MM):
    """Weighted average of overlapping patch predictions.

    ``preds`` is an iterable of ``(origin, patch)`` pairs.  Sums are kept in
    float64 and accumulated in the given order, so a fixed input gives a
    bit-identical output.
    """
    out_shape = check_triple(out_shape, "out_shape")
    preds = list(preds)
    psize = wmap.patch_size
    extent = list(max(d, p) for d, p in zip(out_shape, psize))
    for origin, _ in preds:
        extent = [max(e, o + p) for e, o, p in zip(extent, origin, psize)]
    num = np.zeros(extent, dtype=np.float64)
    den = np.zeros(extent, dtype=np.float64)
    w = wmap.weights
    for origin, patch in preds:
        patch = np.asarray(patch, dtype=np.float64)
        if patch.shape != psize:
            raise DimensionError(f"patch shape {patch.shape} does not match weight map {psize}")
        if any(o < 0 for o in origin):
            raise BoundsError(f"patch origin must be non-negative, got {origin}")
        sl = tuple(slice(o, o + p) for o, p in zip(origin, psize))
        num[sl] += w * patch
        den[sl] += w
    crop = tuple(slice(0, d) for d in out_shape)
    num, den = num[crop], den[crop]
    if np.any(den <= 0):
        raise CoverageError(f"{int(np.sum(den <= 0))} voxels are not covered by any patch")
    out = np.clip(num / den, 0.0, 1.0)
    return Volume3D(out, spacing_mm, "probability")


def sliding_window_infer(mc, predictor, overlap=0.5, wmap=None, patch_size=None):
    """Predict a full probability volume by tiling ``mc`` with overlapping patches.

    ``predictor`` maps a (channels, pz, py, px) float32 array to a
    (pz, py, px) array of probabilities.
    """
    if wmap is None:
        if patch_size is None:
            raise ParameterError("either wmap or patch_size is required")
        wmap = gaussian_weight_map(patch_size)
    grid = compute_grid(mc.shape, wmap.patch_size, overlap)
    arr = mc.as_array()
    preds = []
    for origin in grid.origins:
        out = np.asarray(predictor(extract_array_patch(arr, origin, grid.patch_size)))
        if out.shape != grid.patch_size:
            raise ContractError(f"predictor returned shape {out.shape}, expected {grid.patch_size}")
        if not np.all((out >= 0) & (out <= 1)):
            raise ContractError("predictor output must lie in [0, 1]")
        preds.append((origin, out))
    return fuse_patches(preds, mc.shape, wmap, mc.spacing_mm)
