# -*- coding: utf-8 -*-
"""Network shape configuration."""

from common.exceptions import ContractError
from common.utils import keyvalue

PROJECTOR_KINDS = ('linear', 'mlp_one_hidden')
MLP_BASELINE_HIDDEN = (256, 256, 512)


class ModelConfig(object):
    """Dimensions of the shared backbone and of its heads.

    ``teacher_domains`` lists the domains carrying a teacher head: every domain
    for UDON, none for the classification-only baselines and a single domain
    for an offline specialist.
    """

    def __init__(self, input_dim, classes_per_domain, backbone_hidden_dims=(256, 256),
                 backbone_out_dim=256, student_dim=64, teacher_dim=256,
                 projector_kind='linear', classifier_temperature=0.05,
                 student_head=True, teacher_domains=None, mlp_baseline=False):
        self.input_dim = int(input_dim)
        self.classes_per_domain = [int(c) for c in classes_per_domain]
        self.backbone_hidden_dims = [int(h) for h in backbone_hidden_dims]
        self.backbone_out_dim = int(backbone_out_dim)
        self.student_dim = int(student_dim)
        self.teacher_dim = int(teacher_dim)
        self.projector_kind = projector_kind
        self.classifier_temperature = float(classifier_temperature)
        self.student_head = bool(student_head)
        if teacher_domains is None:
            teacher_domains = range(len(self.classes_per_domain))
        self.teacher_domains = sorted(int(i) for i in teacher_domains)
        self.mlp_baseline = bool(mlp_baseline)
        self.validate()

    @property
    def num_domains(self):
        return len(self.classes_per_domain)

    def validate(self):
        if self.num_domains < 1:
            raise ContractError("at least one domain is required")
        for i, c in enumerate(self.classes_per_domain):
            if c < 2:
                raise ContractError("domain {} has {} classes; at least 2 are required".format(i, c))
        if self.student_head and self.student_dim > self.backbone_out_dim:
            raise ContractError("student_dim {} exceeds backbone_out_dim {}".format(
                self.student_dim, self.backbone_out_dim))
        if self.teacher_domains and self.teacher_dim > self.backbone_out_dim:
            raise ContractError("teacher_dim {} exceeds backbone_out_dim {}".format(
                self.teacher_dim, self.backbone_out_dim))
        if self.projector_kind not in PROJECTOR_KINDS:
            raise ContractError("unknown projector_kind '{}'".format(self.projector_kind))
        if self.classifier_temperature <= 0:
            raise ContractError("classifier_temperature must be > 0")
        for i in self.teacher_domains:
            if not 0 <= i < self.num_domains:
                raise ContractError("teacher domain {} out of range".format(i))
        if not self.student_head and not self.teacher_domains:
            raise ContractError("a network needs a student head or at least one teacher head")

    def has_teacher(self, domain):
        return domain in self.teacher_domains

    def derive(self, **changes):
        values = self.to_dict()
        values.update(changes)
        return ModelConfig(**values)

    def to_dict(self):
        return {
            'input_dim': self.input_dim,
            'classes_per_domain': list(self.classes_per_domain),
            'backbone_hidden_dims': list(self.backbone_hidden_dims),
            'backbone_out_dim': self.backbone_out_dim,
            'student_dim': self.student_dim,
            'teacher_dim': self.teacher_dim,
            'projector_kind': self.projector_kind,
            'classifier_temperature': self.classifier_temperature,
            'student_head': self.student_head,
            'teacher_domains': list(self.teacher_domains),
            'mlp_baseline': self.mlp_baseline,
        }

    def to_lines(self):
        values = self.to_dict()
        for key in ('classes_per_domain', 'backbone_hidden_dims', 'teacher_domains'):
            values[key] = keyvalue.format_list(values[key])
        values['classifier_temperature'] = repr(self.classifier_temperature)
        return keyvalue.format_lines(values)

    @classmethod
    def from_lines(cls, text):
        values = keyvalue.parse_lines(text, source='<model config>')
        return cls(
            input_dim=int(values['input_dim']),
            classes_per_domain=keyvalue.to_int_list(values['classes_per_domain']),
            backbone_hidden_dims=keyvalue.to_int_list(values['backbone_hidden_dims']),
            backbone_out_dim=int(values['backbone_out_dim']),
            student_dim=int(values['student_dim']),
            teacher_dim=int(values['teacher_dim']),
            projector_kind=values['projector_kind'],
            classifier_temperature=float(values['classifier_temperature']),
            student_head=keyvalue.to_bool(values['student_head']),
            teacher_domains=keyvalue.to_int_list(values['teacher_domains']),
            mlp_baseline=keyvalue.to_bool(values['mlp_baseline']),
        )

    def __eq__(self, other):
        return isinstance(other, ModelConfig) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return "ModelConfig({})".format(self.to_dict())
