"""Adam with bias correction and the cosine annealing learning-rate schedule."""

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError
from .unet import NetworkParams


def cosine_lr(t: int, t_max: int, lr0: float) -> float:
    """lr0 * 0.5 * (1 + cos(pi * t / t_max)); lr0 at t=0, 0 at t=t_max."""
    if not 0 <= t <= t_max:
        raise ConfigError(f"iteration {t} outside [0, {t_max}]")
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * t / t_max))


@dataclass
class AdamState:
    m: NetworkParams = field(default_factory=dict)
    v: NetworkParams = field(default_factory=dict)
    t: int = 0


def adam_step(params: NetworkParams, grads: NetworkParams, state: AdamState,
              lr: float, betas: tuple[float, float] = (0.9, 0.999),
              eps: float = 1e-8) -> tuple[NetworkParams, AdamState]:
    """One bias-corrected Adam update.

    Arrays in ``params`` and ``state`` are updated in place and the same
    containers are returned.  eps sits outside the square root:
    delta = lr * m_hat / (sqrt(v_hat) + eps).
    """
    b1, b2 = betas
    state.t += 1
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name, g in grads.items():
        if name not in params:
            raise ConfigError(f"gradient for unknown parameter {name!r}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(params[name])
        v = state.v.get(name)
        if v is None:
            v = state.v[name] = np.zeros_like(params[name])
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        params[name] -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return params, state
