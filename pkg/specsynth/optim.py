import math
from dataclasses import dataclass, field

import numpy as np

from specsynth.exceptions import ShapeMismatch


@dataclass
class AdamState:
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    """one bias-corrected Adam update of the named arrays in `params`, in place"""
    state.t += 1
    for name, value in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != value.shape:
            raise ShapeMismatch('gradient {} for {} does not match parameter {}'.format(g.shape, name, value.shape))
        m = beta1 * state.m.get(name, 0.0) + (1.0 - beta1) * g
        v = beta2 * state.v.get(name, 0.0) + (1.0 - beta2) * g * g
        state.m[name] = m
        state.v[name] = v
        m_hat = m / (1.0 - beta1 ** state.t)
        v_hat = v / (1.0 - beta2 ** state.t)
        value -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


def cosine_lr(base, t, total):
    """cosine annealing from `base` at t=0 to 0 at t=total"""
    if total <= 0:
        return base
    return 0.5 * base * (1.0 + math.cos(math.pi * min(t, total) / total))


class Adam(object):
    """Adam with an externally scheduled learning rate"""

    def __init__(self, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        self.lr = lr
        self.betas = tuple(betas)
        self.eps = eps
        self.state = AdamState()

    def step(self, params, grads, lr=None):
        adam_step(params, grads, self.state, self.lr if lr is None else lr,
                  self.betas[0], self.betas[1], self.eps)
        return params
