# -*- coding: utf-8 -*-
"""Experiment configuration: schema, resolution order and echo.

Resolution order, later wins: schema defaults < config file < ``UDON_<KEY>``
environment variables < command-line overrides.
"""

import hashlib
import os
import re

from common.exceptions import ContractError
from common.utils import keyvalue
from networks.config import ModelConfig, PROJECTOR_KINDS
from .losses import LossFlags, REL_NORMS
from .samplers import LOSS_SOURCES, SAMPLER_KINDS

MODES = ('udon', 'baseline_cls_only', 'baseline_mlp', 'offline_distill_8', 'offline_distill_1')
OFFLINE_MODES = ('offline_distill_8', 'offline_distill_1')
OPTIMIZERS = ('adam',)
LR_SCHEDULES = ('constant', 'cosine')
ENV_PREFIX = 'UDON_'

_int = int
_float = float
_str = str
_bool = keyvalue.to_bool
_ints = keyvalue.to_int_list
_floats = keyvalue.to_float_list


def _choice(choices):
    def parse(value):
        if value not in choices:
            raise ContractError("'{}' is not one of {}".format(value, ", ".join(choices)))
        return value
    return parse


# key: (parser, default, help)
SCHEMA = {
    # data
    'data':                   (_str, '', "dataset file; empty means generate from the generator keys"),
    'domains':                (_int, 4, "number of generated domains"),
    'feature_dim':            (_int, 64, "generated feature dimension D_in"),
    'split_fractions':        (_floats, [0.70, 0.05, 0.10, 0.05, 0.10], "train,val_query,val_index,test_query,test_index"),
    'shared_dims':            (_int, 8, "width of the block shared by every domain"),
    'cue_dims':               (_int, 8, "width of the conflicting cue block"),
    'data_seed':              (_int, 0, "generator seed"),
    # model
    'backbone_hidden_dims':   (_ints, [256, 256], "hidden widths of the backbone MLP"),
    'backbone_out_dim':       (_int, 256, "backbone embedding dimension D"),
    'student_dim':            (_int, 64, "universal embedding dimension d"),
    'teacher_dim':            (_int, 256, "teacher embedding dimension D_t"),
    'projector_kind':         (_choice(PROJECTOR_KINDS), 'linear', "projection heads"),
    'classifier_temperature': (_float, 0.05, "normalized softmax temperature"),
    # run
    'mode':                   (_choice(MODES), 'udon', "training method"),
    'seed':                   (_int, 0, "seed of a single train run"),
    'seeds':                  (_ints, [0, 1, 2], "seeds used by ablate"),
    'steps':                  (_int, 1000, "optimizer steps; offline modes spend them over both phases"),
    'teacher_steps':          (_int, 0, "phase-1 share of 'steps' in offline modes; 0 means half"),
    'batch_size':             (_int, 128, "examples per clean batch B"),
    'eval_every':             (_int, 250, "validation period in steps; 0 disables"),
    'eval_split':             (_choice(('val', 'test')), 'val', "split of periodic evaluation"),
    'eval_k':                 (_int, 5, "k of modified mP@k"),
    'log_every':              (_int, 200, "progress log period in steps"),
    # sampler
    'sampler':                (_choice(SAMPLER_KINDS), 'dynamic', "domain sampler"),
    'refresh_period':         (_int, 50, "steps between dynamic sampler refreshes S"),
    'loss_source':            (_choice(LOSS_SOURCES), 'teacher_cls', "loss fed to the dynamic sampler"),
    'static_weights':         (_floats, [], "weights of the static_weights sampler"),
    'min_prob':               (_float, 0.0, "probability floor of the dynamic sampler"),
    'class_balanced':         (_bool, False, "class-balanced within-domain sampling"),
    # losses
    'no_logit_distill':       (_bool, False, "drop the logit distillation term"),
    'no_any_distill':         (_bool, False, "drop both distillation terms"),
    'no_student_ce':          (_bool, False, "drop the universal classification term"),
    'rel_norm':               (_choice(REL_NORMS), 'raw', "relational loss reduction"),
    'temperature':            (_float, 0.1, "logit distillation temperature T"),
    # optimizer
    'optimizer':              (_choice(OPTIMIZERS), 'adam', "optimizer"),
    'learning_rate':          (_float, 1e-3, "learning rate"),
    'lr_schedule':            (_choice(LR_SCHEDULES), 'constant', "learning rate schedule"),
    'beta1':                  (_float, 0.9, "Adam beta1"),
    'beta2':                  (_float, 0.999, "Adam beta2"),
    'adam_eps':               (_float, 1e-8, "Adam epsilon"),
}

# default benchmark: three balanced domains and one long-tail domain
DEFAULT_DOMAINS = {}
for _i, (_classes, _exponent, _base, _cue) in enumerate((
        (20, 0.0, 100, 'cue_discriminative'),
        (20, 0.0, 100, 'cue_noise'),
        (20, 0.0, 100, 'cue_discriminative'),
        (100, 1.2, 800, 'cue_noise'))):
    DEFAULT_DOMAINS.update({
        'domain.{}.num_classes'.format(_i): str(_classes),
        'domain.{}.class_size_exponent'.format(_i): str(_exponent),
        'domain.{}.samples_per_class_base'.format(_i): str(_base),
        'domain.{}.cue_mode'.format(_i): _cue,
        'domain.{}.noise_sigma'.format(_i): '0.5',
        'domain.{}.cue_scale'.format(_i): '1.5',
    })

DOMAIN_KEY = re.compile(r'^domain\.(\d+)\.(num_classes|class_size_exponent|samples_per_class_base|cue_mode|noise_sigma|cue_scale)$')


def env_name(key):
    return ENV_PREFIX + key.replace('.', '_').upper()


def _format(value):
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, list):
        return keyvalue.format_list(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


class ExperimentConfig(object):
    """Resolved, validated experiment configuration; keys readable as attributes."""

    def __init__(self, values):
        self.values = values
        self.validate()

    @classmethod
    def resolve(cls, file_values=None, overrides=None, environ=None):
        environ = os.environ if environ is None else environ
        raw = {key: spec[1] for key, spec in SCHEMA.items()}
        domain_keys = {}
        layers = [file_values or {}]
        for layer in layers + [overrides or {}]:
            for key in layer:
                if DOMAIN_KEY.match(key):
                    domain_keys[key] = True
                elif key not in SCHEMA:
                    raise ContractError("unknown config key '{}'".format(key))

        if not domain_keys:
            raw.update(DEFAULT_DOMAINS)
            domain_keys = dict.fromkeys(DEFAULT_DOMAINS, True)

        def _parse(key, value):
            parser = SCHEMA[key][0] if key in SCHEMA else _str
            try:
                return parser(value) if isinstance(value, str) else value
            except (ValueError, ContractError) as e:
                raise ContractError("bad value for '{}': {}".format(key, e))

        for key, value in (file_values or {}).items():
            raw[key] = _parse(key, value)
        for key in list(SCHEMA) + sorted(domain_keys):
            if env_name(key) in environ:
                raw[key] = _parse(key, environ[env_name(key)])
        for key, value in (overrides or {}).items():
            raw[key] = _parse(key, value)
        return cls(raw)

    @classmethod
    def from_file(cls, path, overrides=None, environ=None):
        return cls.resolve(keyvalue.read_file(path), overrides, environ)

    def __getattr__(self, key):
        values = self.__dict__.get('values')
        if values is not None and key in values:
            return values[key]
        raise AttributeError(key)

    def with_overrides(self, **changes):
        values = dict(self.values)
        values.update(changes)
        return ExperimentConfig(values)

    def validate(self):
        v = self.values
        if v['no_any_distill']:
            v['no_logit_distill'] = True
        if v['batch_size'] < 2:
            raise ContractError("batch_size must be >= 2")
        if v['steps'] < 1:
            raise ContractError("steps must be >= 1")
        if v['teacher_steps'] < 0:
            raise ContractError("teacher_steps must be >= 0")
        if v['mode'] in OFFLINE_MODES:
            teacher, student = self.offline_budget()
            if teacher < 1 or student < 1:
                raise ContractError("offline modes split 'steps' over two phases: teacher_steps={} leaves "
                                    "{} teacher and {} student steps".format(v['teacher_steps'], teacher, student))
        if v['temperature'] <= 0:
            raise ContractError("temperature must be > 0")
        if v['learning_rate'] <= 0:
            raise ContractError("learning_rate must be > 0")
        if v['refresh_period'] < 1:
            raise ContractError("refresh_period must be >= 1")
        if v['eval_k'] < 1:
            raise ContractError("eval_k must be >= 1")
        if not v['seeds']:
            raise ContractError("at least one seed is required")
        if v['sampler'] == 'static_weights' and not v['static_weights']:
            raise ContractError("sampler=static_weights needs static_weights")
        if v['mode'] in ('baseline_cls_only', 'baseline_mlp') and v['sampler'] == 'dynamic' \
                and v['loss_source'] == 'teacher_cls':
            raise ContractError("mode '{}' has no teacher heads; use loss_source=student_cls".format(v['mode']))
        if v['mode'] in ('baseline_cls_only', 'baseline_mlp') and v['no_student_ce']:
            raise ContractError("mode '{}' trains with the universal classification loss only".format(v['mode']))

    @property
    def has_teacher_heads(self):
        return self.values['mode'] == 'udon'

    @property
    def is_offline(self):
        return self.values['mode'] in OFFLINE_MODES

    def offline_budget(self):
        """(teacher phase steps, student phase steps); together they use exactly ``steps``."""
        steps = self.values['steps']
        teacher = self.values['teacher_steps'] or steps // 2
        return teacher, steps - teacher

    def generator_values(self):
        """Values understood by ``datasets.generator.generate_from_config``."""
        out = {key: _format(self.values[key]) for key in
               ('domains', 'feature_dim', 'split_fractions', 'shared_dims', 'cue_dims', 'data_seed')}
        for key, value in self.values.items():
            if DOMAIN_KEY.match(key):
                out[key] = _format(value)
        return out

    def model_config(self, input_dim, classes_per_domain, student_head=True, teacher_domains=None):
        """Network shape; ``teacher_domains`` defaults to what the mode needs."""
        if teacher_domains is None:
            teacher_domains = range(len(classes_per_domain)) if self.has_teacher_heads else []
        return ModelConfig(
            input_dim=input_dim,
            classes_per_domain=classes_per_domain,
            backbone_hidden_dims=self.backbone_hidden_dims,
            backbone_out_dim=self.backbone_out_dim,
            student_dim=self.student_dim,
            teacher_dim=self.teacher_dim,
            projector_kind=self.projector_kind,
            classifier_temperature=self.classifier_temperature,
            student_head=student_head,
            teacher_domains=teacher_domains,
            mlp_baseline=self.mode == 'baseline_mlp',
        )

    def loss_flags(self, has_teacher=None):
        if has_teacher is None:
            has_teacher = self.has_teacher_heads
        return LossFlags.from_ablation(
            no_logit_distill=self.no_logit_distill,
            no_any_distill=self.no_any_distill,
            no_student_ce=self.no_student_ce,
            rel_norm=self.rel_norm,
            temperature=self.temperature,
            has_teacher=has_teacher,
        )

    def echo(self):
        return keyvalue.format_lines({key: _format(value) for key, value in self.values.items()})

    def config_hash(self):
        return hashlib.sha1(self.echo().encode('utf-8')).hexdigest()

    def to_dict(self):
        return dict(self.values)
