"""scikit-learn style wrappers around the training loop and post-processing.

Samples are whole cases: ``X`` is a list of two-channel CT/PET volumes and
``y`` the matching list of lesion masks.
"""

from dataclasses import asdict, fields

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DimensionError, ParameterError
from .inference import postprocess_open, threshold_prob
from .metrics import dice_coefficient
from .training import TrainConfig, fit
from .validation import check_kind
from .volume import MultiChannelVolume, Volume3D

_DEFAULTS = TrainConfig()


def check_cases(X, y=None):
    """Validate a list of multi-channel cases and (optionally) matching masks."""
    if isinstance(X, MultiChannelVolume):
        X = [X]
    X = list(X)
    if not X:
        raise ParameterError("need at least one case")
    for mc in X:
        if not isinstance(mc, MultiChannelVolume) or mc.n_channels != 2:
            raise DimensionError("each case must be a two-channel (CT, PET) volume")
    if y is None:
        return X
    if isinstance(y, Volume3D):
        y = [y]
    y = list(y)
    if len(y) != len(X):
        raise DimensionError(f"{len(X)} cases but {len(y)} masks")
    for mc, m in zip(X, y):
        check_kind(m, "mask")
        if m.shape != mc.shape:
            raise DimensionError(f"mask shape {m.shape} differs from case shape {mc.shape}")
    return X, y


class FocusedPracticeSegmenter(BaseEstimator):
    """Voxelwise logistic lesion segmenter trained with Focused Practice.

    Hyperparameters mirror :class:`~fpvolseg.training.TrainConfig`.  After
    ``fit`` the estimator exposes ``model_``, ``stats_`` and ``registry_``.
    """

    def __init__(
        self,
        epochs=_DEFAULTS.epochs,
        batch_size=_DEFAULTS.batch_size,
        optimizer=_DEFAULTS.optimizer,
        base_lr=_DEFAULTS.base_lr,
        momentum=_DEFAULTS.momentum,
        weight_decay=_DEFAULTS.weight_decay,
        w_ce=_DEFAULTS.w_ce,
        w_softdice=_DEFAULTS.w_softdice,
        w_tversky=_DEFAULTS.w_tversky,
        tversky_alpha=_DEFAULTS.tversky_alpha,
        tversky_beta=_DEFAULTS.tversky_beta,
        fp_enabled=_DEFAULTS.fp_enabled,
        oversample_factor=_DEFAULTS.oversample_factor,
        exclude_frac=_DEFAULTS.exclude_frac,
        seed=_DEFAULTS.seed,
        patch_size=_DEFAULTS.patch_size,
        overlap=_DEFAULTS.overlap,
        flip_augment=_DEFAULTS.flip_augment,
        threshold=_DEFAULTS.threshold,
    ):
        self.epochs = epochs
        self.batch_size = batch_size
        self.optimizer = optimizer
        self.base_lr = base_lr
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.w_ce = w_ce
        self.w_softdice = w_softdice
        self.w_tversky = w_tversky
        self.tversky_alpha = tversky_alpha
        self.tversky_beta = tversky_beta
        self.fp_enabled = fp_enabled
        self.oversample_factor = oversample_factor
        self.exclude_frac = exclude_frac
        self.seed = seed
        self.patch_size = patch_size
        self.overlap = overlap
        self.flip_augment = flip_augment
        self.threshold = threshold

    @classmethod
    def from_config(cls, config):
        params = asdict(config)
        params.pop("model")
        return cls(**params)

    def to_config(self):
        names = {f.name for f in fields(TrainConfig)} - {"model"}
        return TrainConfig(**{k: v for k, v in self.get_params().items() if k in names})

    def fit(self, X, y, X_val=None, y_val=None):
        """Train on ``(X, y)``; validation defaults to the training cases."""
        X, y = check_cases(X, y)
        if X_val is None:
            X_val, y_val = X, y
        else:
            X_val, y_val = check_cases(X_val, y_val)
        config = self.to_config()
        self.model_, self.stats_, self.registry_ = fit(
            config, list(zip(X, y)), list(zip(X_val, y_val))
        )
        return self

    def predict_proba(self, X):
        """Sliding-window probability volume for every case."""
        check_is_fitted(self, "model_")
        X = check_cases(X)
        return [self.model_.predict_volume(mc, (self.patch_size,) * 3, self.overlap) for mc in X]

    def predict(self, X):
        return [threshold_prob(p, self.threshold) for p in self.predict_proba(X)]

    def score(self, X, y):
        """Mean dice over the cases (a fraction, not a percentage)."""
        X, y = check_cases(X, y)
        return float(np.mean([dice_coefficient(p, m) for p, m in zip(self.predict(X), y)]))


class MaskPostprocessor(TransformerMixin, BaseEstimator):
    """Threshold probability volumes and optionally apply morphological opening.

    ``open_radius=0`` leaves the thresholded mask untouched, matching the
    default pipeline where morphology is off.
    """

    def __init__(self, threshold=0.5, open_radius=0):
        self.threshold = threshold
        self.open_radius = open_radius

    def fit(self, X=None, y=None):
        if int(self.open_radius) < 0:
            raise ParameterError("open_radius must be >= 0")
        self.fitted_ = True
        return self

    def _transform_one(self, v):
        mask = v if v.kind == "mask" else threshold_prob(v, self.threshold)
        if self.open_radius:
            mask = postprocess_open(mask, int(self.open_radius))
        return mask

    def transform(self, X):
        check_is_fitted(self, "fitted_")
        if isinstance(X, Volume3D):
            return self._transform_one(X)
        return [self._transform_one(v) for v in X]

