# -*- coding: utf-8 -*-
"""Forward passes of the shared backbone, the universal head and the teacher heads.

``bound`` is a mapping name -> Tensor as returned by ``ModelParams.bind()``
(training) or ``ModelParams.constants()`` (inference).
"""

from autograd import (
    Tensor, add, constant, gelu, layernorm_rows, matmul, multiply,
    row_l2_normalize, scalar_scale, transpose,
)
from common.exceptions import ContractError, DimensionError
from .config import MLP_BASELINE_HIDDEN

HEADS = ('student', 'teacher')


def _linear(bound, prefix, x, bias=True):
    out = matmul(x, bound[prefix + '.weight'])
    if bias:
        out = add(out, bound[prefix + '.bias'])
    return out


def _project(bound, prefix, x, kind):
    if kind == 'linear':
        return matmul(x, bound[prefix + '.weight'])
    h = _linear(bound, prefix + '.hidden', x)
    h = add(multiply(layernorm_rows(h), bound[prefix + '.ln.gain']), bound[prefix + '.ln.bias'])
    return _linear(bound, prefix + '.out', gelu(h))


def as_tensor(features):
    if isinstance(features, Tensor):
        return features
    return constant(features)


def backbone_forward(bound, config, features):
    """e_b: GELU MLP followed by row ℓ2 normalization."""
    x = as_tensor(features)
    if x.cols != config.input_dim:
        raise DimensionError("backbone input has wrong feature dimension",
                             x.shape, (x.rows, config.input_dim))
    n_layers = len(config.backbone_hidden_dims) + 1
    for k in range(n_layers):
        x = _linear(bound, 'backbone.{}'.format(k), x)
        if k < n_layers - 1:
            x = gelu(x)
    return row_l2_normalize(x)


def _check_backbone_embedding(config, e_b):
    if e_b.cols != config.backbone_out_dim:
        raise DimensionError("backbone embedding has wrong dimension",
                             e_b.shape, (e_b.rows, config.backbone_out_dim))


def student_embed(bound, config, e_b):
    """e_u: the universal embedding."""
    if not config.student_head:
        raise ContractError("network has no student head")
    _check_backbone_embedding(config, e_b)
    return row_l2_normalize(_project(bound, 'student.proj', e_b, config.projector_kind))


def teacher_embed(bound, config, domain, e_b):
    """e_{t_i}: embedding of the teacher head of ``domain``."""
    if not 0 <= domain < config.num_domains:
        raise ContractError("domain index {} out of range [0, {})".format(domain, config.num_domains))
    if not config.has_teacher(domain):
        raise ContractError("network has no teacher head for domain {}".format(domain))
    _check_backbone_embedding(config, e_b)
    prefix = 'teacher.{}.proj'.format(domain)
    return row_l2_normalize(_project(bound, prefix, e_b, config.projector_kind))


def _student_classifier_input(bound, config, domain, embedding):
    if not config.mlp_baseline:
        return embedding
    h = embedding
    for j in range(len(MLP_BASELINE_HIDDEN)):
        h = gelu(_linear(bound, 'student.mlp.{}.{}'.format(domain, j), h))
    return row_l2_normalize(h)


def logits(bound, config, head, domain, embedding):
    """Normalized-softmax logits ⟨e, w_c/‖w_c‖⟩ / τ of the (head, domain) classifier."""
    if head not in HEADS:
        raise ContractError("unknown head '{}'".format(head))
    if not 0 <= domain < config.num_domains:
        raise ContractError("domain index {} out of range [0, {})".format(domain, config.num_domains))
    if head == 'student':
        expected = config.student_dim
        name = 'student.cls.{}.weight'.format(domain)
    else:
        expected = config.teacher_dim
        name = 'teacher.{}.cls.weight'.format(domain)
    if name not in bound:
        raise ContractError("network has no {} classifier for domain {}".format(head, domain))
    if embedding.cols != expected:
        raise DimensionError("{} embedding has wrong dimension".format(head), embedding.shape, (embedding.rows, expected))
    if head == 'student':
        embedding = _student_classifier_input(bound, config, domain, embedding)
    weights = row_l2_normalize(bound[name])
    return scalar_scale(matmul(embedding, transpose(weights)), 1.0 / config.classifier_temperature)
