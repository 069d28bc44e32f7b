# -*- coding: utf-8 -*-
from .tensor import Tape, Tensor, backward, constant, parameter, stop_gradient
from .ops import (
    add, frobenius_sq_diff, gather_rows, gelu, kl_rows, layernorm_rows,
    log_softmax_rows, matmul, mean_all, multiply, relu, row_l2_normalize,
    scalar_scale, subtract, sum_all, transpose,
)

__all__ = (
    'Tape', 'Tensor', 'backward', 'constant', 'parameter', 'stop_gradient',
    'add', 'frobenius_sq_diff', 'gather_rows', 'gelu', 'kl_rows', 'layernorm_rows',
    'log_softmax_rows', 'matmul', 'mean_all', 'multiply', 'relu', 'row_l2_normalize',
    'scalar_scale', 'subtract', 'sum_all', 'transpose',
)
