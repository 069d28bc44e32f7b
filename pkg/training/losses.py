# -*- coding: utf-8 -*-
"""Classification and distillation losses of the joint objective."""

import numpy as np

from autograd import (
    add, constant, frobenius_sq_diff, kl_rows, log_softmax_rows, matmul, mean_all,
    multiply, scalar_scale, stop_gradient, sum_all, transpose,
)
from common.exceptions import ContractError, DimensionError

REL_NORMS = ('raw', 'mean')
TERMS = ('cls_teacher', 'cls_student', 'rel', 'log_distill')


def _require_detached(x, what):
    if x.requires_grad:
        raise ContractError("{} must be wrapped in stop_gradient".format(what))


def nsl_classification(logits, labels):
    """Mean negative log-probability of the true class (normalized softmax loss)."""
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    batch, n_classes = logits.shape
    if labels.shape[0] != batch:
        raise DimensionError("one label per logit row is required", logits.shape, labels.shape)
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ContractError("labels must lie in [0, {})".format(n_classes))
    one_hot = np.zeros((batch, n_classes))
    one_hot[np.arange(batch), labels] = 1.0
    picked = sum_all(multiply(log_softmax_rows(logits), constant(one_hot)))
    return scalar_scale(picked, -1.0 / batch)


def gram(embeddings):
    return matmul(embeddings, transpose(embeddings))


def relational_distill(student, teacher, rel_norm='raw'):
    """Squared Frobenius distance between the student and teacher batch Gram matrices."""
    _require_detached(teacher, "teacher embeddings")
    if student.rows != teacher.rows:
        raise DimensionError("relational distillation needs the same batch", student.shape, teacher.shape)
    if rel_norm not in REL_NORMS:
        raise ContractError("unknown rel_norm '{}'".format(rel_norm))
    loss = frobenius_sq_diff(gram(student), gram(teacher))
    if rel_norm == 'mean':
        loss = scalar_scale(loss, 1.0 / (student.rows * student.rows))
    return loss


def logit_distill(student_logits, teacher_logits, temperature):
    """Batch mean of KL(softmax(l_u/T) ‖ softmax(l_t/T)); no T² factor."""
    _require_detached(teacher_logits, "teacher logits")
    if temperature <= 0:
        raise ContractError("temperature must be > 0, got {}".format(temperature))
    if student_logits.shape != teacher_logits.shape:
        raise DimensionError("logit distillation needs equal shapes", student_logits.shape, teacher_logits.shape)
    inv_t = 1.0 / temperature
    p_log = log_softmax_rows(scalar_scale(student_logits, inv_t))
    q_log = log_softmax_rows(scalar_scale(teacher_logits, inv_t))
    return mean_all(kl_rows(p_log, q_log))


class LossFlags(object):

    def __init__(self, teacher_cls=True, student_cls=True, rel=True, log_distill=True,
                 rel_norm='raw', temperature=0.1):
        self.teacher_cls = bool(teacher_cls)
        self.student_cls = bool(student_cls)
        self.rel = bool(rel)
        self.log_distill = bool(log_distill)
        self.rel_norm = rel_norm
        self.temperature = float(temperature)

    @classmethod
    def from_ablation(cls, no_logit_distill=False, no_any_distill=False, no_student_ce=False,
                      rel_norm='raw', temperature=0.1, has_teacher=True):
        return cls(
            teacher_cls=has_teacher,
            student_cls=not no_student_ce,
            rel=has_teacher and not no_any_distill,
            log_distill=has_teacher and not (no_any_distill or no_logit_distill),
            rel_norm=rel_norm,
            temperature=temperature,
        )

    def enabled(self):
        return {'cls_teacher': self.teacher_cls, 'cls_student': self.student_cls,
                'rel': self.rel, 'log_distill': self.log_distill}


class LossBundle(object):
    """Loss terms of one clean batch; disabled terms are ``None``."""

    def __init__(self, cls_teacher, cls_student, rel, log_distill, total, enabled):
        self.cls_teacher = cls_teacher
        self.cls_student = cls_student
        self.rel = rel
        self.log_distill = log_distill
        self.total = total
        self.enabled = enabled

    def terms(self):
        return {name: getattr(self, name) for name in TERMS}

    def as_floats(self):
        values = {name: (t.item() if t is not None else None) for name, t in self.terms().items()}
        values['total'] = self.total.item()
        return values


def total_loss(labels, flags, student_logits=None, student_embedding=None,
               teacher_logits=None, teacher_embedding=None):
    """Unweighted sum of the enabled terms, in the fixed order cls_teacher, cls_student, rel, log.

    Teacher tensors are passed undetached; the distillation terms see them
    through ``stop_gradient`` so only the student side receives their gradient.
    """
    enabled = flags.enabled()
    if not any(enabled.values()):
        raise ContractError("all loss terms are disabled")

    cls_teacher = cls_student = rel = log_distill = None
    if flags.teacher_cls:
        cls_teacher = nsl_classification(_needed(teacher_logits, 'teacher logits'), labels)
    if flags.student_cls:
        cls_student = nsl_classification(_needed(student_logits, 'student logits'), labels)
    if flags.rel:
        rel = relational_distill(_needed(student_embedding, 'student embedding'),
                                 stop_gradient(_needed(teacher_embedding, 'teacher embedding')),
                                 rel_norm=flags.rel_norm)
    if flags.log_distill:
        log_distill = logit_distill(_needed(student_logits, 'student logits'),
                                    stop_gradient(_needed(teacher_logits, 'teacher logits')),
                                    flags.temperature)
    return combine_terms(cls_teacher, cls_student, rel, log_distill, enabled)


def combine_terms(cls_teacher, cls_student, rel, log_distill, enabled):
    """Bundle precomputed terms; the total adds the enabled ones left to right."""
    total = None
    for name, term in zip(TERMS, (cls_teacher, cls_student, rel, log_distill)):
        if not enabled.get(name) or term is None:
            continue
        total = term if total is None else add(total, term)
    if total is None:
        raise ContractError("all loss terms are disabled")
    return LossBundle(cls_teacher, cls_student, rel, log_distill, total, dict(enabled))


def _needed(x, what):
    if x is None:
        raise ContractError("{} required by an enabled loss term".format(what))
    return x
