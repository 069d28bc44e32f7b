# -*- coding: utf-8 -*-
"""Parameter layout, initialization and counting."""

from collections import OrderedDict
import logging
import numpy as np

from autograd import constant, parameter
from common.exceptions import ContractError
from .config import MLP_BASELINE_HIDDEN

logger = logging.getLogger(__name__)

WEIGHT, BIAS, GAIN = 'weight', 'bias', 'gain'


def _projector_layout(prefix, in_dim, out_dim, kind):
    if kind == 'linear':
        return [("{}.weight".format(prefix), (in_dim, out_dim), WEIGHT)]
    # one hidden layer as wide as the output, layernorm then GELU
    return [
        ("{}.hidden.weight".format(prefix), (in_dim, out_dim), WEIGHT),
        ("{}.hidden.bias".format(prefix), (1, out_dim), BIAS),
        ("{}.ln.gain".format(prefix), (1, out_dim), GAIN),
        ("{}.ln.bias".format(prefix), (1, out_dim), BIAS),
        ("{}.out.weight".format(prefix), (out_dim, out_dim), WEIGHT),
        ("{}.out.bias".format(prefix), (1, out_dim), BIAS),
    ]


def student_classifier_dim(config):
    return MLP_BASELINE_HIDDEN[-1] if config.mlp_baseline else config.student_dim


def parameter_layout(config):
    """Ordered (name, shape, kind) triples for every trainable tensor of ``config``."""
    layout = []
    dims = [config.input_dim] + list(config.backbone_hidden_dims) + [config.backbone_out_dim]
    for k in range(len(dims) - 1):
        layout.append(("backbone.{}.weight".format(k), (dims[k], dims[k + 1]), WEIGHT))
        layout.append(("backbone.{}.bias".format(k), (1, dims[k + 1]), BIAS))

    D = config.backbone_out_dim
    if config.student_head:
        layout += _projector_layout("student.proj", D, config.student_dim, config.projector_kind)
        for i, c in enumerate(config.classes_per_domain):
            if config.mlp_baseline:
                mlp_dims = [config.student_dim] + list(MLP_BASELINE_HIDDEN)
                for j in range(len(mlp_dims) - 1):
                    layout.append(("student.mlp.{}.{}.weight".format(i, j), (mlp_dims[j], mlp_dims[j + 1]), WEIGHT))
                    layout.append(("student.mlp.{}.{}.bias".format(i, j), (1, mlp_dims[j + 1]), BIAS))
            layout.append(("student.cls.{}.weight".format(i), (c, student_classifier_dim(config)), WEIGHT))

    for i in config.teacher_domains:
        layout += _projector_layout("teacher.{}.proj".format(i), D, config.teacher_dim, config.projector_kind)
        layout.append(("teacher.{}.cls.weight".format(i), (config.classes_per_domain[i], config.teacher_dim), WEIGHT))
    return layout


def _projector_count(in_dim, out_dim, kind):
    if kind == 'linear':
        return in_dim * out_dim
    return in_dim * out_dim + out_dim + 2 * out_dim + out_dim * out_dim + out_dim


def parameter_count(config):
    """Closed-form number of trainable scalars."""
    dims = [config.input_dim] + list(config.backbone_hidden_dims) + [config.backbone_out_dim]
    total = sum(dims[k] * dims[k + 1] + dims[k + 1] for k in range(len(dims) - 1))
    D = config.backbone_out_dim
    if config.student_head:
        total += _projector_count(D, config.student_dim, config.projector_kind)
        total += sum(config.classes_per_domain) * student_classifier_dim(config)
        if config.mlp_baseline:
            mlp_dims = [config.student_dim] + list(MLP_BASELINE_HIDDEN)
            per_domain = sum(mlp_dims[j] * mlp_dims[j + 1] + mlp_dims[j + 1] for j in range(len(mlp_dims) - 1))
            total += per_domain * config.num_domains
    total += teacher_head_count(config)
    return total


def teacher_head_count(config):
    D = config.backbone_out_dim
    return sum(
        _projector_count(D, config.teacher_dim, config.projector_kind)
        + config.classes_per_domain[i] * config.teacher_dim
        for i in config.teacher_domains)


class ModelParams(object):
    """Named float64 arrays of one network, owned by a single trainer."""

    def __init__(self, config, arrays):
        self.config = config
        self.arrays = OrderedDict(arrays)

    def __getitem__(self, name):
        return self.arrays[name]

    def __contains__(self, name):
        return name in self.arrays

    def names(self):
        return list(self.arrays)

    def count(self):
        return int(sum(a.size for a in self.arrays.values()))

    def bind(self):
        """Fresh leaf tensors for one training step."""
        return OrderedDict((name, parameter(arr, name=name)) for name, arr in self.arrays.items())

    def constants(self):
        """Read-only view for inference (no tape needed)."""
        return OrderedDict((name, constant(arr, name=name)) for name, arr in self.arrays.items())

    def copy(self):
        return ModelParams(self.config, [(k, v.copy()) for k, v in self.arrays.items()])

    def equals(self, other):
        if self.names() != other.names():
            return False
        return all(np.array_equal(self.arrays[k], other.arrays[k]) for k in self.arrays)


def init_params(config, seed):
    """Glorot-uniform weights, zero biases, unit layernorm gains; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    arrays = []
    for name, shape, kind in parameter_layout(config):
        if kind == WEIGHT:
            bound = np.sqrt(6.0 / (shape[0] + shape[1]))
            arr = rng.uniform(-bound, bound, size=shape)
        elif kind == GAIN:
            arr = np.ones(shape)
        else:
            arr = np.zeros(shape)
        arrays.append((name, arr))
    params = ModelParams(config, arrays)
    expected = parameter_count(config)
    if params.count() != expected:
        raise ContractError("parameter count {} differs from closed form {}".format(params.count(), expected))
    logger.debug("initialized %d parameters (seed=%s)", expected, seed)
    return params
