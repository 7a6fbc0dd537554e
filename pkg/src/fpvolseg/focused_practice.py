"""Focused Practice: loss-driven hard-patch oversampling.

Per-patch training losses are split into easy and hard groups at the
threshold maximizing between-class variance.  The hardest tail of the hard
group is left out of the next epoch and the rest is repeated
``oversample_factor`` times.
"""

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParameterError
from .validation import check_fraction
from .volume import atomic_write_bytes

DEFAULT_OVERSAMPLE = 2
DEFAULT_EXCLUDE_FRAC = 0.2
TIE_RTOL = 1e-12


@dataclass
class LossRegistry:
    """Latest recorded loss for every patch id."""

    entries: dict = field(default_factory=dict)
    epoch_tag: int = 0

    def __len__(self):
        return len(self.entries)

    def to_json(self):
        return {"epoch_tag": self.epoch_tag, "entries": {str(k): v for k, v in self.entries.items()}}

    @classmethod
    def from_json(cls, obj):
        return cls({int(k): float(v) for k, v in obj["entries"].items()}, int(obj.get("epoch_tag", 0)))


@dataclass(frozen=True)
class EpochPlan:
    entries: tuple
    counts: dict
    excluded: frozenset
    threshold: float

    def __len__(self):
        return len(self.entries)


def record_loss(reg, patch_id, loss):
    """Store ``loss`` as the latest value for ``patch_id`` (in place) and return the registry."""
    loss = float(loss)
    if not math.isfinite(loss) or loss < 0:
        raise ParameterError(f"patch loss must be finite and non-negative, got {loss}")
    reg.entries[patch_id] = loss
    return reg


def otsu_threshold(losses):
    """Exact Otsu split of a 1-D sample.

    Returns ``(threshold, split_index)`` where ``split_index`` is the size of
    the low class after sorting.  Ties go to the smallest split.  A constant
    sample has no split: everything lands in the low class.
    """
    values = np.sort(np.asarray(losses, dtype=np.float64).ravel())
    n = values.size
    if n == 0:
        raise ParameterError("otsu_threshold needs at least one value")
    if values[0] == values[-1]:
        return float(values[0]), n
    k = np.arange(1, n)
    csum = np.cumsum(values)
    mu_low = csum[:-1] / k
    mu_high = (csum[-1] - csum[:-1]) / (n - k)
    between = (k / n) * ((n - k) / n) * (mu_low - mu_high) ** 2
    # splits whose variance equals the maximum up to rounding count as ties
    best = int(np.flatnonzero(between >= between.max() * (1.0 - TIE_RTOL))[0]) + 1
    return float((values[best - 1] + values[best]) / 2.0), best


def classify(reg):
    """Split registry ids into ``(easy, hard, threshold)``.

    Hard ids have loss strictly above the threshold and come sorted by loss,
    highest first; easy ids are sorted ascending.
    """
    if not reg.entries:
        raise ParameterError("cannot classify an empty loss registry")
    threshold, _ = otsu_threshold(list(reg.entries.values()))
    hard = [i for i, v in reg.entries.items() if v > threshold]
    easy = sorted(i for i, v in reg.entries.items() if not v > threshold)
    hard.sort(key=lambda i: (-reg.entries[i], -i))
    return easy, hard, threshold


def uniform_plan(patch_ids, rng):
    ids = list(patch_ids)
    order = rng.permutation(len(ids))
    return EpochPlan(tuple(ids[i] for i in order), {i: 1 for i in ids}, frozenset(), math.nan)


def build_epoch_plan(reg, oversample_factor=DEFAULT_OVERSAMPLE, exclude_frac=DEFAULT_EXCLUDE_FRAC, rng=None):
    """Next epoch's shuffled training order built from ``reg``."""
    if int(oversample_factor) != oversample_factor or oversample_factor < 1:
        raise ParameterError(f"oversample_factor must be an integer >= 1, got {oversample_factor}")
    exclude_frac = check_fraction(exclude_frac, "exclude_frac")
    if rng is None:
        rng = np.random.default_rng()
    easy, hard, threshold = classify(reg)
    n_excluded = math.floor(exclude_frac * len(hard))
    # hard is already ordered by (loss desc, id desc), so the head is the hardest
    excluded = frozenset(hard[:n_excluded])
    retained = hard[n_excluded:]
    counts = {i: 1 for i in easy}
    counts.update({i: int(oversample_factor) for i in retained})
    entries = [i for i in easy] + [i for i in retained for _ in range(int(oversample_factor))]
    order = rng.permutation(len(entries))
    return EpochPlan(tuple(entries[j] for j in order), counts, excluded, threshold)


def save_checkpoint(path, reg, plan=None):
    """Write the registry (and optional plan threshold) as JSON for resuming."""
    obj = reg.to_json()
    obj["threshold"] = None if plan is None or math.isnan(plan.threshold) else plan.threshold
    atomic_write_bytes(path, json.dumps(obj, indent=2).encode("utf-8"))


def load_checkpoint(path):
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    try:
        return LossRegistry.from_json(obj), obj.get("threshold")
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed registry checkpoint: {exc}") from exc
