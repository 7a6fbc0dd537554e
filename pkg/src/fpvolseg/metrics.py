"""Lesion-level evaluation: dice, false positive/negative volumes and the aggregate score."""

from dataclasses import dataclass

import numba
import numpy as np

from .errors import KindError, ParameterError, RangeError
from .validation import check_same_geometry, check_same_shape

CONNECTIVITIES = (6, 18, 26)
DEFAULT_CONNECTIVITY = 18
FP_COEF = 0.1
FN_COEF = 0.1


@dataclass(frozen=True)
class ComponentLabeling:
    labels: np.ndarray
    num_components: int
    connectivity: int


@dataclass(frozen=True)
class MetricsReport:
    dice: float
    fpv_ml: float
    fnv_ml: float
    score: float

    def as_dict(self):
        return {"dice": self.dice, "fpv_ml": self.fpv_ml, "fnv_ml": self.fnv_ml, "score": self.score}


def neighbor_offsets(connectivity):
    """All (dz, dy, dx) unit-cube offsets admitted by ``connectivity``."""
    if connectivity not in CONNECTIVITIES:
        raise ParameterError(f"connectivity must be one of {CONNECTIVITIES}, got {connectivity}")
    max_l1 = {6: 1, 18: 2, 26: 3}[connectivity]
    out = []
    for dz in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                l1 = abs(dz) + abs(dy) + abs(dx)
                if 0 < l1 <= max_l1:
                    out.append((dz, dy, dx))
    return np.array(out, dtype=np.int64)


@numba.njit(cache=True)
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@numba.njit(cache=True)
def _union_find_label(fg, offsets):
    nz, ny, nx = fg.shape
    n = nz * ny * nx
    parent = np.arange(n)
    for z in range(nz):
        for y in range(ny):
            for x in range(nx):
                if not fg[z, y, x]:
                    continue
                idx = (z * ny + y) * nx + x
                for k in range(offsets.shape[0]):
                    zz = z + offsets[k, 0]
                    yy = y + offsets[k, 1]
                    xx = x + offsets[k, 2]
                    if zz < 0 or yy < 0 or xx < 0 or zz >= nz or yy >= ny or xx >= nx:
                        continue
                    if not fg[zz, yy, xx]:
                        continue
                    a = _find(parent, idx)
                    b = _find(parent, (zz * ny + yy) * nx + xx)
                    if a != b:
                        if a < b:
                            parent[b] = a
                        else:
                            parent[a] = b
    labels = np.zeros(n, dtype=np.int32)
    root_label = np.zeros(n, dtype=np.int32)
    count = 0
    flat = fg.ravel()
    for i in range(n):
        if not flat[i]:
            continue
        r = _find(parent, i)
        if root_label[r] == 0:
            count += 1
            root_label[r] = count
        labels[i] = root_label[r]
    return labels.reshape((nz, ny, nx)), count


def _binary_array(mask):
    data = np.asarray(getattr(mask, "data", mask))
    if data.ndim != 3:
        raise ParameterError(f"expected a 3D mask, got shape {data.shape}")
    if not np.all((data == 0) | (data == 1)):
        raise KindError("connected-component labeling needs a binary mask")
    return data.astype(bool)


def connected_components(mask, connectivity=DEFAULT_CONNECTIVITY):
    """Label foreground components; labels follow first appearance in C-order scan."""
    fg = _binary_array(mask)
    # only offsets earlier in scan order are needed for the union pass
    offsets = np.array([o for o in neighbor_offsets(connectivity) if tuple(o) < (0, 0, 0)], dtype=np.int64)
    labels, count = _union_find_label(np.ascontiguousarray(fg), offsets)
    return ComponentLabeling(labels, int(count), connectivity)


def dice_coefficient(pred, gt):
    p = _binary_array(pred)
    g = _binary_array(gt)
    check_same_shape(p, g, "masks")
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return 1.0
    return 2.0 * int(np.logical_and(p, g).sum()) / denom


def _unmatched_volume_ml(source, other, connectivity, voxel_mm3):
    labeling = connected_components(source, connectivity)
    if labeling.num_components == 0:
        return 0.0
    labels = labeling.labels
    sizes = np.bincount(labels.ravel(), minlength=labeling.num_components + 1)
    hits = np.bincount(labels[_binary_array(other)], minlength=labeling.num_components + 1)
    unmatched = (hits == 0)
    unmatched[0] = False
    return float(sizes[unmatched].sum()) * voxel_mm3 / 1000.0


def fpv(pred, gt, connectivity=DEFAULT_CONNECTIVITY):
    """Volume (ml) of predicted components that touch no ground-truth voxel."""
    check_same_geometry(pred, gt)
    return _unmatched_volume_ml(pred, gt, connectivity, pred.voxel_volume_mm3)


def fnv(pred, gt, connectivity=DEFAULT_CONNECTIVITY):
    """Volume (ml) of ground-truth components that no predicted voxel touches."""
    check_same_geometry(pred, gt)
    return _unmatched_volume_ml(gt, pred, connectivity, gt.voxel_volume_mm3)


def aggregate_score(dice, fpv_ml, fnv_ml):
    if not 0.0 <= dice <= 1.0:
        raise RangeError(f"dice must lie in [0, 1], got {dice}")
    if fpv_ml < 0 or fnv_ml < 0:
        raise RangeError(f"volumes must be non-negative, got {fpv_ml}, {fnv_ml}")
    return dice - FP_COEF * fpv_ml - FN_COEF * fnv_ml


def evaluate_case(pred, gt, connectivity=DEFAULT_CONNECTIVITY):
    d = dice_coefficient(pred, gt)
    fp = fpv(pred, gt, connectivity)
    fn = fnv(pred, gt, connectivity)
    return MetricsReport(d, fp, fn, aggregate_score(d, fp, fn))


def summarize(reports):
    """Mean of each field over a list of reports."""
    if not reports:
        raise ParameterError("no reports to summarize")
    n = len(reports)
    return {
        "mean_dice": sum(r.dice for r in reports) / n,
        "mean_fpv_ml": sum(r.fpv_ml for r in reports) / n,
        "mean_fnv_ml": sum(r.fnv_ml for r in reports) / n,
        "mean_score": sum(r.score for r in reports) / n,
    }
