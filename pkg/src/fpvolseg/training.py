"""Training orchestration: config, patch sets, epochs, validation and the fit loop."""

import json
import logging
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import DataError, ParameterError, RangeError
from .focused_practice import LossRegistry, build_epoch_plan, record_loss, uniform_plan
from .inference import threshold_prob
from .losses import LossWeights, TverskyParams, combined_loss
from .metrics import dice_coefficient
from .model import MODEL_NAME, ToyModel
from .optim import OPTIMIZERS, OptimizerState, optimizer_step
from .patches import compute_grid, extract_array_patch
from .volume import draw_flips, flip_array, normalize_channels

log = logging.getLogger(__name__)

LR_DECAY_BASE = 0.9


@dataclass(frozen=True)
class TrainConfig:
    """Every knob of a training run.

    ``batch_size`` defaults to 4 at desk scale; large 3D networks usually run
    with 6 to 32 depending on GPU memory.
    """

    model: str = MODEL_NAME
    epochs: int = 10
    batch_size: int = 4
    optimizer: str = "sgd"
    base_lr: float = 3e-5
    momentum: float = 0.99
    weight_decay: float = 3e-5
    w_ce: float = 1.0
    w_softdice: float = 1.0
    w_tversky: float = 1.0
    tversky_alpha: float = 0.3
    tversky_beta: float = 0.7
    fp_enabled: bool = True
    oversample_factor: int = 2
    exclude_frac: float = 0.2
    seed: int = 0
    patch_size: int = 32
    overlap: float = 0.5
    flip_augment: bool = True
    threshold: float = 0.5

    def __post_init__(self):
        if self.model != MODEL_NAME:
            raise ParameterError(f"only model={MODEL_NAME} is available, got {self.model!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ParameterError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.epochs < 0 or self.batch_size < 1 or self.patch_size < 1:
            raise ParameterError("epochs must be >= 0, batch_size and patch_size >= 1")
        if not self.base_lr > 0:
            raise ParameterError("base_lr must be positive")
        if not 0 <= self.overlap < 1 or not 0 <= self.exclude_frac < 1:
            raise ParameterError("overlap and exclude_frac must lie in [0, 1)")
        if self.oversample_factor < 1:
            raise ParameterError("oversample_factor must be >= 1")

    @property
    def loss_weights(self):
        return LossWeights(self.w_ce, self.w_softdice, self.w_tversky)

    @property
    def tversky(self):
        return TverskyParams(self.tversky_alpha, self.tversky_beta)

    @property
    def patch_shape(self):
        return (self.patch_size,) * 3

    @classmethod
    def from_mapping(cls, mapping):
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in mapping.items():
            if key not in types:
                raise ParameterError(f"unknown config key {key!r}")
            kwargs[key] = _coerce(key, raw, types[key])
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text):
        mapping = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParameterError(f"config line {lineno}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            mapping[key] = value
        return cls.from_mapping(mapping)

    @classmethod
    def from_file(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_text(fh.read())

    def to_text(self):
        def fmt(v):
            return str(v).lower() if isinstance(v, bool) else str(v)

        return "".join(f"{k}={fmt(v)}\n" for k, v in asdict(self).items())


def _coerce(key, raw, typ):
    if not isinstance(raw, str):
        return raw
    try:
        if typ in (bool, "bool"):
            low = raw.lower()
            if low not in ("true", "false"):
                raise ValueError(raw)
            return low == "true"
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
    except ValueError:
        raise ParameterError(f"config key {key}: cannot parse {raw!r}") from None
    return raw


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_train_loss: float
    val_dice_pct: float
    lr_used: float
    hard_count: int
    excluded_count: int

    def to_json(self):
        return json.dumps(asdict(self))


def lr_for_epoch(base_lr, val_dice_pct):
    """Metric-driven decay: ``base_lr * 0.9 ** (dice_pct / 10)``."""
    if not 0.0 <= val_dice_pct <= 100.0:
        raise RangeError(f"validation dice must be a percentage in [0, 100], got {val_dice_pct}")
    return base_lr * LR_DECAY_BASE ** (val_dice_pct / 10.0)


def build_patch_set(cases, patch_size, overlap):
    """Normalize each ``(mc, mask)`` case and cut it into grid patches.

    Returns ``{patch_id: (x, g)}`` with ids numbered in case then grid order;
    ``x`` is (channels, *patch_size) float32 and ``g`` the matching mask.
    """
    patches = {}
    for mc, mask in cases:
        if mask.shape != mc.shape:
            raise DataError(f"mask shape {mask.shape} differs from image shape {mc.shape}")
        arr = normalize_channels(mc).as_array()
        grid = compute_grid(mc.shape, patch_size, overlap)
        for origin in grid.origins:
            x = extract_array_patch(arr, origin, grid.patch_size)
            g = extract_array_patch(mask.data, origin, grid.patch_size)
            patches[len(patches)] = (x, g)
    return patches


def _patch_loss(model, x, g, weights, tversky):
    x = x.astype(np.float64)
    p = model.predict_patch(x)
    if weights.all_zero:
        return 0.0, np.zeros(3)
    loss, dp = combined_loss(p, g, weights, tversky)
    return loss, model.param_grad(x, p, dp)


def train_epoch(model, plan, patches, config, opt_state, rng):
    """One pass over ``plan`` in mini-batches.

    Returns ``(model, opt_state, losses, mean_loss)`` where ``losses`` maps
    each visited patch id to its latest loss.
    """
    missing = [i for i in set(plan.entries) if i not in patches]
    if missing:
        raise DataError(f"plan references {len(missing)} unknown patch ids, e.g. {sorted(missing)[:5]}")
    weights, tversky = config.loss_weights, config.tversky
    params = model.params
    losses = {}
    total = 0.0
    entries = plan.entries
    for start in range(0, len(entries), config.batch_size):
        batch = entries[start : start + config.batch_size]
        grad = np.zeros(3)
        for pid in batch:
            x, g = patches[pid]
            if config.flip_augment:
                flips = draw_flips(rng)
                x, g = flip_array(x, flips), flip_array(g, flips)
            loss, dparams = _patch_loss(model, x, g, weights, tversky)
            losses[pid] = loss
            total += loss
            grad += dparams
        params, opt_state = optimizer_step(params, grad / len(batch), opt_state)
        model = ToyModel.from_params(params)
    mean_loss = total / len(entries) if entries else 0.0
    return model, opt_state, losses, mean_loss


def validate(model, val_cases, patch_size=32, overlap=0.5, threshold=0.5):
    """Mean validation dice in percent.

    ``model`` needs ``predict_volume(mc, patch_size, overlap)`` returning a
    probability volume.
    """
    if not val_cases:
        raise ParameterError("validation set is empty")
    patch_shape = (patch_size,) * 3 if np.isscalar(patch_size) else tuple(patch_size)
    scores = []
    for mc, mask in val_cases:
        prob = model.predict_volume(mc, patch_shape, overlap)
        scores.append(dice_coefficient(threshold_prob(prob, threshold), mask))
    return 100.0 * float(np.mean(scores))


def initial_optimizer(config, n_params=3):
    return OptimizerState.create(
        config.optimizer,
        n_params,
        lr=config.base_lr,
        momentum=config.momentum,
        weight_decay=config.weight_decay,
    )


def fit(config, train_cases, val_cases, model=None, patches=None):
    """Run ``config.epochs`` epochs; returns ``(model, stats, registry)``.

    Each epoch's learning rate comes from the previous epoch's validation
    dice (the first epoch uses dice 0).  The first epoch, and every epoch
    when Focused Practice is off, visits each patch once in random order.
    """
    rng = np.random.default_rng(config.seed)
    model = model or ToyModel()
    if patches is None:
        patches = build_patch_set(train_cases, config.patch_shape, config.overlap)
    if not patches:
        raise DataError("no training patches")
    opt = initial_optimizer(config)
    registry = LossRegistry()
    stats = []
    prev_dice = 0.0
    for epoch in range(1, config.epochs + 1):
        lr = lr_for_epoch(config.base_lr, prev_dice)
        opt = opt.with_lr(lr)
        if epoch == 1 or not config.fp_enabled:
            plan = uniform_plan(sorted(patches), rng)
            hard_count = 0
        else:
            plan = build_epoch_plan(registry, config.oversample_factor, config.exclude_frac, rng)
            hard_count = sum(1 for v in registry.entries.values() if v > plan.threshold)
        model, opt, losses, mean_loss = train_epoch(model, plan, patches, config, opt, rng)
        for pid, loss in losses.items():
            record_loss(registry, pid, loss)
        registry.epoch_tag = epoch
        dice = validate(model, val_cases, config.patch_size, config.overlap, config.threshold)
        stats.append(EpochStats(epoch, mean_loss, dice, lr, hard_count, len(plan.excluded)))
        log.info("epoch %d loss %.5f val dice %.2f%% lr %.3g", epoch, mean_loss, dice, lr)
        prev_dice = dice
    return model, stats, registry


def epochs_to_reach(stats, dice_pct):
    for s in stats:
        if s.val_dice_pct >= dice_pct:
            return s.epoch
    return None


def compare_focused_practice(config, train_cases, val_cases, seeds=(0, 1, 2), target_dice_pct=80.0):
    """Train with and without Focused Practice for each seed on the same data.

    The report records epochs needed to reach ``target_dice_pct`` and the
    final validation dice of each run.  No winner is asserted.
    """
    patches = build_patch_set(train_cases, config.patch_shape, config.overlap)
    runs = []
    for seed in seeds:
        row = {"seed": int(seed)}
        for label, enabled in (("fp", True), ("baseline", False)):
            cfg = TrainConfig.from_mapping({**asdict(config), "seed": int(seed), "fp_enabled": enabled})
            _, stats, _ = fit(cfg, train_cases, val_cases, patches=patches)
            row[label] = {
                "epochs_to_target": epochs_to_reach(stats, target_dice_pct),
                "final_dice_pct": stats[-1].val_dice_pct if stats else None,
                "dice_trail": [s.val_dice_pct for s in stats],
            }
        runs.append(row)
    return {"target_dice_pct": target_dice_pct, "epochs": config.epochs, "runs": runs}
