"""Three-parameter voxelwise logistic segmenter used to drive the training loop."""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError, DimensionError, NumericError
from .inference import predict_volume
from .volume import atomic_write_bytes, normalize_channels

MODEL_NAME = "toy-logistic"


def logistic(z):
    # split by sign so exp never overflows
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class ToyModel:
    """p = logistic(w_ct * ct + w_pet * pet + bias) at every voxel."""

    w_ct: float = 0.0
    w_pet: float = 0.0
    bias: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.params)):
            raise NumericError(f"model parameters must be finite, got {self.params}")

    @property
    def params(self):
        return np.array([self.w_ct, self.w_pet, self.bias], dtype=np.float64)

    @classmethod
    def from_params(cls, params):
        return cls(*(float(v) for v in params))

    def predict_patch(self, x):
        """Probabilities for a (2, z, y, x) patch of normalized CT/PET."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 4 or x.shape[0] != 2:
            raise DimensionError(f"expected a (2, z, y, x) patch, got {x.shape}")
        return logistic(self.w_ct * x[0] + self.w_pet * x[1] + self.bias)

    def param_grad(self, x, p, dloss_dp):
        """Chain the per-voxel loss gradient through the logistic to the 3 parameters."""
        q = dloss_dp * p * (1.0 - p)
        return np.array([np.sum(q * x[0]), np.sum(q * x[1]), np.sum(q)])

    def predict_volume(self, mc, patch_size, overlap=0.5, sigma_scale=1.0 / 8.0):
        """Probability volume for a raw (un-normalized) CT/PET pair."""
        return predict_volume(normalize_channels(mc), self.predict_patch, patch_size, overlap, sigma_scale)

    def to_json(self, **extra):
        return {"model": MODEL_NAME, "w_ct": self.w_ct, "w_pet": self.w_pet, "bias": self.bias, **extra}

    def save(self, path, **extra):
        atomic_write_bytes(path, json.dumps(self.to_json(**extra), indent=2).encode("utf-8"))

    @classmethod
    def load(cls, path):
        """Return ``(model, metadata)`` from a JSON checkpoint."""
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        if obj.get("model") != MODEL_NAME:
            raise DataError(f"unsupported model type {obj.get('model')!r}")
        try:
            model = cls(float(obj["w_ct"]), float(obj["w_pet"]), float(obj["bias"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed model checkpoint: {exc}") from exc
        meta = {k: v for k, v in obj.items() if k not in ("model", "w_ct", "w_pet", "bias")}
        return model, meta
