# -*- coding: utf-8 -*-
"""Two-phase offline distillation baselines.

Phase 1 trains frozen-to-be teachers with their classification loss only:
``offline_distill_8`` trains one specialist network per domain,
``offline_distill_1`` one network with a teacher head per domain. Phase 2
trains a fresh universal network with the universal classification loss plus
relational distillation against the cached, frozen teacher embeddings.

Both phases together take ``steps`` optimizer steps, the budget of an online
run; ``teacher_steps`` of them go to phase 1 and are shared out evenly between
the specialists.
"""

import logging
import numpy as np

from common.exceptions import ContractError
from evaluation.protocol import embed_examples, teacher_embedding_fn
from networks import init_params
from .losses import LossFlags
from .samplers import SamplerState, SamplerTrace
from .trainer import (
    RunLog, Trainer, TrainingResult, build_optimizer, build_sampler,
    classification_only_flags, init_seed, periodic_eval,
)

logger = logging.getLogger(__name__)


def specialist_steps(total, num_domains):
    """``total`` steps shared out between ``num_domains`` specialists, earlier domains first."""
    if total < num_domains:
        raise ContractError("teacher phase of {} steps cannot train {} specialists".format(total, num_domains))
    base, extra = divmod(total, num_domains)
    return [base + (1 if d < extra else 0) for d in range(num_domains)]


def train_specialists(config, seed, dataset, run_log):
    """One independent backbone with a single teacher head per domain."""
    teachers = []
    step = run_log.last_step + 1
    budget = specialist_steps(config.offline_budget()[0], dataset.num_domains)
    for domain, steps in enumerate(budget):
        model_config = config.model_config(dataset.feature_dim, dataset.classes_per_domain,
                                           student_head=False, teacher_domains=[domain])
        params = init_params(model_config, init_seed(seed, 1, domain))
        sampler = SamplerState('round_robin', 1, seed=seed, refresh_period=config.refresh_period)
        trainer = Trainer(params, dataset, classification_only_flags(), sampler,
                          build_optimizer(config, steps), [seed, domain], config.batch_size,
                          class_balanced=config.class_balanced, domains=[domain], run_log=run_log,
                          phase='teacher_{}'.format(domain), log_every=config.log_every)
        trainer.run(steps, first_step=step)
        step += steps
        teachers.append(params)
    return teachers


def train_multihead_teacher(config, seed, dataset, run_log, trace):
    """One backbone with N teacher heads, classification loss only."""
    model_config = config.model_config(dataset.feature_dim, dataset.classes_per_domain, student_head=False,
                                       teacher_domains=range(dataset.num_domains))
    params = init_params(model_config, init_seed(seed, 1))
    steps = config.offline_budget()[0]
    sampler = build_sampler(config, dataset.num_domains, seed, dataset.train_sizes(), loss_source='teacher_cls')
    trainer = Trainer(params, dataset, classification_only_flags(), sampler, build_optimizer(config, steps),
                      seed, config.batch_size, class_balanced=config.class_balanced, run_log=run_log,
                      trace=trace, phase='teacher', log_every=config.log_every)
    trainer.run(steps, first_step=run_log.last_step + 1)
    return [params]


def teacher_cache(teachers, dataset, workers=1):
    """Frozen teacher embedding of every train example, one row per dataset example."""
    embed_fn = teacher_embedding_fn(teachers)
    ids = dataset.indices('train')
    values = embed_examples(embed_fn, dataset, ids, workers)
    cache = np.zeros((len(dataset), values.shape[1]))
    cache[ids] = values
    return cache


def train_offline_distill(config, seed, dataset, workers=1):
    if not config.is_offline:
        raise ContractError("mode '{}' is not an offline distillation mode".format(config.mode))
    run_log = RunLog()
    trace = SamplerTrace(dataset.num_domains)
    if config.mode == 'offline_distill_8':
        teachers = train_specialists(config, seed, dataset, run_log)
    else:
        teachers = train_multihead_teacher(config, seed, dataset, run_log, trace)
    cache = teacher_cache(teachers, dataset, workers)
    logger.info("offline phase 1 done: %d teacher network(s), cache %s", len(teachers), cache.shape)

    model_config = config.model_config(dataset.feature_dim, dataset.classes_per_domain, teacher_domains=[])
    params = init_params(model_config, init_seed(seed))
    flags = LossFlags(teacher_cls=False, student_cls=not config.no_student_ce, rel=True, log_distill=False,
                      rel_norm=config.rel_norm, temperature=config.temperature)
    # sampler fed by the universal classification loss
    sampler = build_sampler(config, dataset.num_domains, seed, dataset.train_sizes(), loss_source='student_cls')
    steps = config.offline_budget()[1]
    trainer = Trainer(params, dataset, flags, sampler, build_optimizer(config, steps), seed,
                      config.batch_size, class_balanced=config.class_balanced, teacher_cache=cache,
                      run_log=run_log, trace=trace, phase='student', log_every=config.log_every)
    first = run_log.last_step + 1
    evaluate = periodic_eval(config, dataset, seed, params, workers)
    trainer.run(steps, first_step=first, eval_every=config.eval_every,
                evaluate=evaluate)
    return TrainingResult(config.mode, seed, params, run_log, trace, teachers=teachers)
