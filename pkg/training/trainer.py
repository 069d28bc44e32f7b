# -*- coding: utf-8 -*-
"""The joint training loop: one clean single-domain batch per optimizer step."""

import csv
import logging
import math
import numpy as np

from autograd import Tape, backward, constant, gather_rows, stop_gradient
from common.exceptions import ContractError, DivergenceError
from evaluation.protocol import joint_index_eval
from networks import backbone_forward, init_params, logits, student_embed, teacher_embed
from networks.params import parameter_count, teacher_head_count
from .losses import TERMS, LossFlags, nsl_classification, total_loss
from .optim import Adam, named_gradients
from .samplers import SamplerState, SamplerTrace, make_batch

logger = logging.getLogger(__name__)

BATCH_STREAM = 0xBA7C
INIT_STREAM = 0x1717


class RunLog(object):
    """Append-only record of steps, sampler refreshes and evaluations."""

    STEP_COLUMNS = ('phase', 'step', 'domain') + TERMS + ('total', 'sampler_loss', 'probabilities')

    def __init__(self):
        self.steps = []
        self.refreshes = []
        self.evals = []

    @property
    def last_step(self):
        return self.steps[-1]['step'] if self.steps else 0

    def add_step(self, phase, step, domain, losses, sampler_loss):
        if step <= self.last_step:
            raise ContractError("run log steps must increase ({} after {})".format(step, self.last_step))
        record = {'phase': phase, 'step': step, 'domain': domain, 'sampler_loss': sampler_loss, 'probabilities': None}
        record.update(losses)
        self.steps.append(record)
        return record

    def add_refresh(self, step, probabilities):
        probabilities = [float(p) for p in probabilities]
        self.refreshes.append({'step': step, 'probabilities': probabilities})
        if self.steps and self.steps[-1]['step'] == step:
            self.steps[-1]['probabilities'] = probabilities

    def add_eval(self, step, report):
        self.evals.append({'step': step, 'report': report})

    def series(self, term, phase=None):
        return [(r['step'], r[term]) for r in self.steps
                if r.get(term) is not None and (phase is None or r['phase'] == phase)]

    def write_csv(self, path):
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f)
            writer.writerow(self.STEP_COLUMNS)
            for r in self.steps:
                row = []
                for column in self.STEP_COLUMNS:
                    value = r.get(column)
                    if column == 'probabilities':
                        value = ';'.join(repr(p) for p in value) if value else ''
                    elif isinstance(value, float):
                        value = repr(value)
                    elif value is None:
                        value = ''
                    row.append(value)
                writer.writerow(row)


class TrainingResult(object):
    """Networks produced by one run plus its logs."""

    def __init__(self, mode, seed, params, run_log, trace, teachers=None):
        self.mode = mode
        self.seed = seed
        self.params = params
        self.run_log = run_log
        self.trace = trace
        self.teachers = list(teachers or [])

    def parameter_counts(self):
        counts = {
            'model': parameter_count(self.params.config),
            'teacher_heads': teacher_head_count(self.params.config),
            'teachers': [parameter_count(t.config) for t in self.teachers],
        }
        counts['total'] = counts['model'] + sum(counts['teachers'])
        return counts


class Trainer(object):
    """Runs optimizer steps on ``params`` with batches chosen by ``sampler``.

    ``domains`` maps sampler slots to dataset domain ids (all domains by
    default). ``teacher_cache`` holds frozen teacher embeddings, one row per
    dataset example, used instead of the network's own teacher heads.
    """

    def __init__(self, params, dataset, flags, sampler, optimizer, seed, batch_size,
                 class_balanced=False, domains=None, teacher_cache=None, run_log=None,
                 trace=None, phase='joint', log_every=500):
        self.params = params
        self.dataset = dataset
        self.flags = flags
        self.sampler = sampler
        self.optimizer = optimizer
        self.batch_size = int(batch_size)
        self.class_balanced = class_balanced
        self.domains = list(range(dataset.num_domains)) if domains is None else list(domains)
        self.teacher_cache = constant(teacher_cache) if teacher_cache is not None else None
        self.run_log = run_log if run_log is not None else RunLog()
        self.trace = trace
        self.phase = phase
        self.log_every = int(log_every)
        entropy = [int(s) for s in seed] if isinstance(seed, (list, tuple)) else [int(seed)]
        self.rng = np.random.default_rng(np.random.SeedSequence(entropy + [BATCH_STREAM]))
        if len(self.domains) != sampler.num_domains:
            raise ContractError("sampler covers {} domains, trainer {}".format(sampler.num_domains, len(self.domains)))

    def _forward(self, bound, domain, batch):
        cfg = self.params.config
        e_u = l_u = e_t = l_t = None
        e_b = backbone_forward(bound, cfg, batch.features)
        if cfg.student_head:
            e_u = student_embed(bound, cfg, e_b)
            l_u = logits(bound, cfg, 'student', domain, e_u)
        if cfg.has_teacher(domain):
            e_t = teacher_embed(bound, cfg, domain, e_b)
            l_t = logits(bound, cfg, 'teacher', domain, e_t)
        elif self.teacher_cache is not None:
            e_t = gather_rows(self.teacher_cache, batch.indices)
        return e_u, l_u, e_t, l_t

    def _sampler_loss(self, bundle, labels, l_u, l_t):
        if self.sampler.loss_source == 'teacher_cls':
            if bundle.cls_teacher is not None:
                return bundle.cls_teacher.item()
            if l_t is None:
                raise ContractError("loss_source=teacher_cls needs a teacher head")
            return nsl_classification(stop_gradient(l_t), labels).item()
        if bundle.cls_student is not None:
            return bundle.cls_student.item()
        if l_u is None:
            raise ContractError("loss_source=student_cls needs a student head")
        return nsl_classification(stop_gradient(l_u), labels).item()

    def step(self, step):
        slot = self.sampler.next_domain()
        domain = self.domains[slot]
        batch = make_batch(self.dataset, domain, self.batch_size, self.rng, self.class_balanced)
        bound = self.params.bind()
        with Tape():
            e_u, l_u, e_t, l_t = self._forward(bound, domain, batch)
            bundle = total_loss(batch.labels, self.flags, l_u, e_u, l_t, e_t)
            losses = bundle.as_floats()
            sampler_loss = self._sampler_loss(bundle, batch.labels, l_u, l_t)
            bad = {k: v for k, v in losses.items() if v is not None and not math.isfinite(v)}
            if bad or not math.isfinite(sampler_loss):
                raise DivergenceError(step, domain, bad or {'sampler_loss': sampler_loss})
            grads = backward(bundle.total)
        self.optimizer.step(self.params.arrays, named_gradients(bound, grads))

        self.run_log.add_step(self.phase, step, domain, losses, sampler_loss)
        self.sampler.record_loss(slot, sampler_loss)
        if self.sampler.tick():
            probabilities = self.sampler.snapshot()
            self.run_log.add_refresh(step, probabilities)
            if self.trace is not None:
                self.trace.add(step, domain, probabilities)
        if self.log_every and step % self.log_every == 0:
            logger.info("[%s] step %d domain %d total=%.5f", self.phase, step, domain, losses['total'])
        return losses

    def run(self, steps, first_step=1, eval_every=0, evaluate=None):
        """Steps ``first_step .. first_step + steps - 1``; ``evaluate(step)`` every ``eval_every`` steps."""
        for step in range(first_step, first_step + steps):
            self.step(step)
            if evaluate is not None and eval_every and (step - first_step + 1) % eval_every == 0:
                report = evaluate(step)
                self.run_log.add_eval(step, report)
                logger.info("[%s] step %d eval %s", self.phase, step, report.summary())
        return self.run_log


def build_sampler(config, num_domains, seed, sizes, loss_source=None):
    return SamplerState(
        config.sampler, num_domains, seed=seed,
        refresh_period=config.refresh_period,
        loss_source=loss_source or config.loss_source,
        dataset_sizes=sizes,
        static_weights=config.static_weights or None,
        min_prob=config.min_prob,
    )


def build_optimizer(config, steps):
    return Adam(learning_rate=config.learning_rate, beta1=config.beta1, beta2=config.beta2,
                eps=config.adam_eps, schedule=config.lr_schedule, total_steps=steps)


def init_seed(seed, *stream):
    return np.random.SeedSequence([int(seed), INIT_STREAM] + [int(s) for s in stream])


def periodic_eval(config, dataset, seed, params, workers=1):
    if not config.eval_every or not params.config.student_head:
        return None

    def evaluate(step):
        return joint_index_eval(params, dataset, config.eval_split, k=config.eval_k, workers=workers,
                                metadata={'seed': seed, 'step': step, 'mode': config.mode})
    return evaluate


def train(config, seed, dataset, workers=1):
    """Online joint training (``udon``) or one of the classification-only baselines."""
    if config.is_offline:
        from .offline import train_offline_distill
        return train_offline_distill(config, seed, dataset, workers=workers)

    model_config = config.model_config(dataset.feature_dim, dataset.classes_per_domain)
    params = init_params(model_config, init_seed(seed))
    flags = config.loss_flags()
    sampler = build_sampler(config, dataset.num_domains, seed, dataset.train_sizes())
    trace = SamplerTrace(dataset.num_domains)
    trainer = Trainer(params, dataset, flags, sampler, build_optimizer(config, config.steps), seed,
                      config.batch_size, class_balanced=config.class_balanced, trace=trace,
                      phase=config.mode, log_every=config.log_every)
    logger.info("training mode=%s seed=%s params=%d steps=%d", config.mode, seed, params.count(), config.steps)
    trainer.run(config.steps, eval_every=config.eval_every,
                evaluate=periodic_eval(config, dataset, seed, params, workers))
    return TrainingResult(config.mode, seed, params, trainer.run_log, trace)


def classification_only_flags(teacher=True, student=False):
    return LossFlags(teacher_cls=teacher, student_cls=student, rel=False, log_distill=False)
