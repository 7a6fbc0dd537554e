"""SGD with momentum, Adam and AdamW over a flat parameter vector."""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import NumericError, ParameterError

OPTIMIZERS = ("sgd", "adam", "adamw")


@dataclass(frozen=True)
class OptimizerState:
    kind: str = "sgd"
    lr: float = 3e-5
    momentum: float = 0.99  # beta1 for adam/adamw
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 3e-5
    velocity: np.ndarray = field(default=None, repr=False)
    second_moment: np.ndarray = field(default=None, repr=False)
    step_count: int = 0

    def __post_init__(self):
        if self.kind not in OPTIMIZERS:
            raise ParameterError(f"optimizer must be one of {OPTIMIZERS}, got {self.kind!r}")
        if not self.lr > 0:
            raise ParameterError(f"learning rate must be positive, got {self.lr}")

    @classmethod
    def create(cls, kind, n_params, **hyper):
        zeros = np.zeros(n_params, dtype=np.float64)
        return cls(kind=kind, velocity=zeros, second_moment=zeros.copy(), **hyper)

    def with_lr(self, lr):
        return replace(self, lr=float(lr))


def _check(params, grads, state):
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or state.velocity is None or state.velocity.shape != params.shape:
        raise ParameterError("parameter, gradient and accumulator shapes must match")
    if not np.all(np.isfinite(grads)):
        raise NumericError("non-finite gradient")
    return params, grads


def sgd_step(params, grads, state):
    """Classical momentum with the L2 decay folded into the gradient."""
    params, grads = _check(params, grads, state)
    v = state.momentum * state.velocity - state.lr * (grads + state.weight_decay * params)
    return params + v, replace(state, velocity=v, step_count=state.step_count + 1)


def _adam_update(params, grads, state):
    t = state.step_count + 1
    b1, b2 = state.momentum, state.beta2
    m = b1 * state.velocity + (1.0 - b1) * grads
    s = b2 * state.second_moment + (1.0 - b2) * grads**2
    m_hat = m / (1.0 - b1**t)
    s_hat = s / (1.0 - b2**t)
    new = params - state.lr * m_hat / (np.sqrt(s_hat) + state.eps)
    return new, replace(state, velocity=m, second_moment=s, step_count=t)


def adam_step(params, grads, state):
    params, grads = _check(params, grads, state)
    return _adam_update(params, grads + state.weight_decay * params, state)


def adamw_step(params, grads, state):
    params, grads = _check(params, grads, state)
    new, state = _adam_update(params, grads, state)
    return new - state.lr * state.weight_decay * params, state


_STEPS = {"sgd": sgd_step, "adam": adam_step, "adamw": adamw_step}


def optimizer_step(params, grads, state):
    return _STEPS[state.kind](params, grads, state)
