# -*- coding: utf-8 -*-
"""Differentiable operations over 2-D tensors.

Every op returns a new ``Tensor``; its backward closure maps the output
gradient to one gradient per parent (``None`` when a parent receives nothing).
"""

import numpy as np

from common.exceptions import ContractError, DimensionError
from .tensor import Tensor, make_result

NORM_EPS = 1e-12
LAYERNORM_EPS = 1e-5
_GELU_C = np.sqrt(2.0 / np.pi)
_GELU_K = 0.044715


def _check_tensor(x, op):
    if not isinstance(x, Tensor):
        raise ContractError("{} expects Tensor inputs, got {}".format(op, type(x).__name__))


def _is_row_broadcast(a, b):
    return b.rows == 1 and a.cols == b.cols and a.rows != 1


def matmul(a, b):
    _check_tensor(a, 'matmul')
    _check_tensor(b, 'matmul')
    if a.cols != b.rows:
        raise DimensionError("matmul inner dimensions differ", a.shape, b.shape)
    av, bv = a.values, b.values

    def _backward(g):
        return g @ bv.T, av.T @ g

    return make_result('matmul', av @ bv, (a, b), _backward)


def add(a, b):
    """a + b; ``b`` may be a 1×n row vector added to every row of ``a``."""
    _check_tensor(a, 'add')
    _check_tensor(b, 'add')
    if a.shape == b.shape:
        return make_result('add', a.values + b.values, (a, b), lambda g: (g, g))
    if _is_row_broadcast(a, b):
        return make_result('add', a.values + b.values, (a, b),
                           lambda g: (g, g.sum(axis=0, keepdims=True)))
    raise DimensionError("add needs equal shapes or a matching row vector", a.shape, b.shape)


def subtract(a, b):
    _check_tensor(a, 'subtract')
    _check_tensor(b, 'subtract')
    if a.shape != b.shape:
        raise DimensionError("subtract needs equal shapes", a.shape, b.shape)
    return make_result('subtract', a.values - b.values, (a, b), lambda g: (g, -g))


def multiply(a, b):
    """Elementwise product; ``b`` may be a 1×n row vector."""
    _check_tensor(a, 'multiply')
    _check_tensor(b, 'multiply')
    av, bv = a.values, b.values
    if a.shape == b.shape:
        return make_result('multiply', av * bv, (a, b), lambda g: (g * bv, g * av))
    if _is_row_broadcast(a, b):
        return make_result('multiply', av * bv, (a, b),
                           lambda g: (g * bv, (g * av).sum(axis=0, keepdims=True)))
    raise DimensionError("multiply needs equal shapes or a matching row vector", a.shape, b.shape)


def scalar_scale(x, c):
    _check_tensor(x, 'scalar_scale')
    c = float(c)
    return make_result('scalar_scale', x.values * c, (x,), lambda g: (g * c,))


def transpose(x):
    _check_tensor(x, 'transpose')
    return make_result('transpose', x.values.T.copy(), (x,), lambda g: (g.T,))


def relu(x):
    _check_tensor(x, 'relu')
    mask = x.values > 0
    return make_result('relu', np.where(mask, x.values, 0.0), (x,), lambda g: (g * mask,))


def gelu(x):
    """GELU, tanh approximation."""
    _check_tensor(x, 'gelu')
    v = x.values
    t = np.tanh(_GELU_C * (v + _GELU_K * v ** 3))
    out = 0.5 * v * (1.0 + t)

    def _backward(g):
        dt = (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_K * v * v)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * dt),)

    return make_result('gelu', out, (x,), _backward)


def row_l2_normalize(x):
    """Scale every row to unit Euclidean norm.

    Rows with norm below ``NORM_EPS`` are divided by ``NORM_EPS`` and pass no gradient.
    """
    _check_tensor(x, 'row_l2_normalize')
    v = x.values
    norms = np.sqrt((v * v).sum(axis=1, keepdims=True))
    degenerate = norms < NORM_EPS
    safe = np.where(degenerate, NORM_EPS, norms)
    y = v / safe

    def _backward(g):
        dot = (g * y).sum(axis=1, keepdims=True)
        dx = (g - y * dot) / safe
        return (np.where(degenerate, 0.0, dx),)

    return make_result('row_l2_normalize', y, (x,), _backward)


def log_softmax_rows(x):
    _check_tensor(x, 'log_softmax_rows')
    v = x.values
    shifted = v - v.max(axis=1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    probs = np.exp(out)

    def _backward(g):
        return (g - probs * g.sum(axis=1, keepdims=True),)

    return make_result('log_softmax_rows', out, (x,), _backward)


def layernorm_rows(x, eps=LAYERNORM_EPS):
    """Normalize each row to zero mean and unit variance (no affine part)."""
    _check_tensor(x, 'layernorm_rows')
    v = x.values
    mu = v.mean(axis=1, keepdims=True)
    centered = v - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=1, keepdims=True) + eps)
    y = centered * inv_std

    def _backward(g):
        g_mean = g.mean(axis=1, keepdims=True)
        gy_mean = (g * y).mean(axis=1, keepdims=True)
        return (inv_std * (g - g_mean - y * gy_mean),)

    return make_result('layernorm_rows', y, (x,), _backward)


def sum_all(x):
    _check_tensor(x, 'sum_all')
    shape = x.shape
    return make_result('sum_all', x.values.sum().reshape(1, 1), (x,),
                       lambda g: (np.full(shape, g[0, 0]),))


def mean_all(x):
    _check_tensor(x, 'mean_all')
    shape = x.shape
    n = float(x.values.size)
    if n == 0:
        raise ContractError("mean_all of an empty tensor")
    return make_result('mean_all', (x.values.sum() / n).reshape(1, 1), (x,),
                       lambda g: (np.full(shape, g[0, 0] / n),))


def frobenius_sq_diff(a, b):
    """Σ_ij (a_ij − b_ij)² as a 1×1 tensor."""
    _check_tensor(a, 'frobenius_sq_diff')
    _check_tensor(b, 'frobenius_sq_diff')
    if a.shape != b.shape:
        raise DimensionError("frobenius_sq_diff needs equal shapes", a.shape, b.shape)
    diff = a.values - b.values

    def _backward(g):
        scaled = 2.0 * g[0, 0] * diff
        return scaled, -scaled

    return make_result('frobenius_sq_diff', np.sum(diff * diff).reshape(1, 1), (a, b), _backward)


def gather_rows(x, indices):
    """Rows of ``x`` at ``indices`` (repeats allowed); gradients scatter-add back."""
    _check_tensor(x, 'gather_rows')
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= x.rows):
        raise ContractError("gather_rows index out of range for {} rows".format(x.rows))
    shape = x.shape

    def _backward(g):
        dx = np.zeros(shape)
        np.add.at(dx, idx, g)
        return (dx,)

    return make_result('gather_rows', x.values[idx], (x,), _backward)


def kl_rows(p_log, q_log):
    """Per-row KL(p ‖ q) from log-probabilities, as an m×1 column."""
    _check_tensor(p_log, 'kl_rows')
    _check_tensor(q_log, 'kl_rows')
    if p_log.shape != q_log.shape:
        raise DimensionError("kl_rows needs equal shapes", p_log.shape, q_log.shape)
    p = np.exp(p_log.values)
    diff = p_log.values - q_log.values
    out = (p * diff).sum(axis=1, keepdims=True)

    def _backward(g):
        return g * p * (diff + 1.0), -g * p

    return make_result('kl_rows', out, (p_log, q_log), _backward)
