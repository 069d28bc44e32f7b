# -*- coding: utf-8 -*-
"""Central finite-difference gradient checking."""

import numpy as np

from .tensor import Tape, Tensor, backward


def numerical_gradient(fn, arrays, index, h=1e-5):
    """d fn / d arrays[index] by central differences; ``fn`` maps Tensors to a 1x1 Tensor."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    target = base[index]
    grad = np.zeros_like(target)
    for pos in np.ndindex(*target.shape):
        saved = target[pos]
        target[pos] = saved + h
        plus = fn(*[Tensor(a) for a in base]).item()
        target[pos] = saved - h
        minus = fn(*[Tensor(a) for a in base]).item()
        target[pos] = saved
        grad[pos] = (plus - minus) / (2.0 * h)
    return grad


def analytic_gradients(fn, arrays):
    inputs = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in arrays]
    with Tape():
        loss = fn(*inputs)
        grads = backward(loss)
    return [grads.get(t, np.zeros(t.shape)) for t in inputs]


def relative_error(analytic, numeric, floor=1e-8):
    scale = max(np.max(np.abs(analytic)), np.max(np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric)) / scale)


def check_gradients(fn, arrays, h=1e-5):
    """Largest relative error over all inputs of ``fn``."""
    analytic = analytic_gradients(fn, arrays)
    worst = 0.0
    for i in range(len(arrays)):
        numeric = numerical_gradient(fn, arrays, i, h=h)
        worst = max(worst, relative_error(analytic[i], numeric))
    return worst
