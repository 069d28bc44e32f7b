# -*- coding: utf-8 -*-
"""Adam over named parameter arrays."""

import math
import numpy as np

from common.exceptions import ContractError


class Adam(object):
    """Adam with per-parameter step counts.

    A parameter without a gradient at a step is left exactly unchanged and its
    moments are not decayed, so heads that did not take part in a batch stay
    bit-identical.
    """

    def __init__(self, learning_rate=1e-3, beta1=0.9, beta2=0.999, eps=1e-8,
                 schedule='constant', total_steps=None):
        if learning_rate <= 0:
            raise ContractError("learning_rate must be > 0")
        if schedule == 'cosine' and not total_steps:
            raise ContractError("cosine schedule needs total_steps")
        self.learning_rate = float(learning_rate)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.schedule = schedule
        self.total_steps = total_steps
        self.m = {}
        self.v = {}
        self.t = {}
        self.global_step = 0

    def current_lr(self):
        if self.schedule == 'cosine':
            progress = min(self.global_step, self.total_steps) / float(self.total_steps)
            return self.learning_rate * 0.5 * (1.0 + math.cos(math.pi * progress))
        return self.learning_rate

    def step(self, arrays, grads):
        """Update ``arrays`` (name -> ndarray, in place) from ``grads`` (name -> ndarray)."""
        lr = self.current_lr()
        for name, g in grads.items():
            param = arrays[name]
            if g.shape != param.shape:
                raise ContractError("gradient for '{}' has shape {}, expected {}".format(name, g.shape, param.shape))
            if name not in self.m:
                self.m[name] = np.zeros_like(param)
                self.v[name] = np.zeros_like(param)
                self.t[name] = 0
            self.t[name] += 1
            t = self.t[name]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            m_hat = self.m[name] / (1.0 - self.beta1 ** t)
            v_hat = self.v[name] / (1.0 - self.beta2 ** t)
            param -= lr * m_hat / (np.sqrt(v_hat) + self.eps)
        self.global_step += 1


def named_gradients(bound, grads):
    """Gradients of the bound leaves that were reached, keyed by parameter name."""
    return {name: grads[tensor] for name, tensor in bound.items() if tensor in grads}
