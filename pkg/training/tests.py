# -*- coding: utf-8 -*-

import csv
import json
import math
import os
import tempfile
import time
import unittest
from unittest import mock

import numpy as np
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import Client, SimpleTestCase, TestCase

from autograd import Tape, backward, constant, parameter, stop_gradient
from common.exceptions import ContractError, DivergenceError
from common.utils import keyvalue
from datasets.dataset import Dataset, split_tag
from datasets.generator import generate_from_config
from evaluation.protocol import joint_index_eval
from events.models import Event
from networks import backbone_forward, init_params, logits, parameter_count, student_embed, teacher_embed
from networks.params import teacher_head_count
from .ablation import AblationGrid, consolidate, preset_names, preset_overrides
from .config import ExperimentConfig, env_name
from .losses import LossFlags, combine_terms, logit_distill, nsl_classification, relational_distill, total_loss
from .models import Ablation, ExperimentRun
from .offline import specialist_steps, train_specialists
from .optim import Adam
from .samplers import SamplerState, make_batch
from .trainer import RunLog, Trainer, train

TINY_CONFIG = """
domains = 2
feature_dim = 32
data_seed = 1
domain.0.num_classes = 4
domain.0.samples_per_class_base = 16
domain.1.num_classes = 5
domain.1.class_size_exponent = 1.0
domain.1.samples_per_class_base = 20
domain.1.cue_mode = cue_noise
backbone_hidden_dims = 16
backbone_out_dim = 16
student_dim = 8
teacher_dim = 16
steps = 20
batch_size = 8
eval_every = 0
refresh_period = 5
log_every = 0
"""


def tiny_config(**overrides):
    return ExperimentConfig.resolve(keyvalue.parse_lines(TINY_CONFIG),
                                    {k: str(v) for k, v in overrides.items()}, environ={})


def tiny_dataset(config=None):
    return generate_from_config((config or tiny_config()).generator_values())


def unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def log_softmax_oracle(row):
    m = max(row)
    log_z = m + math.log(math.fsum(math.exp(v - m) for v in row))
    return [v - log_z for v in row]


class ClassificationLossTestCase(SimpleTestCase):

    def test_uniform_logits(self):
        self.assertAlmostEqual(nsl_classification(constant([[0.0, 0.0]]), [0]).item(), math.log(2.0), places=12)
        self.assertAlmostEqual(nsl_classification(constant(np.zeros((3, 7))), [0, 4, 6]).item(), math.log(7.0), places=12)

    def test_saturated(self):
        self.assertLess(nsl_classification(constant([[20.0, -20.0]]), [0]).item(), 1e-8)

    def test_scalar_oracle(self):
        rng = np.random.default_rng(0)
        values = rng.standard_normal((8, 5)) * 3.0
        labels = rng.integers(0, 5, size=8)
        expected = -math.fsum(log_softmax_oracle(list(values[i]))[labels[i]] for i in range(8)) / 8.0
        self.assertAlmostEqual(nsl_classification(constant(values), labels).item(), expected, places=12)

    def test_label_out_of_range(self):
        with self.assertRaises(ContractError):
            nsl_classification(constant(np.zeros((2, 3))), [0, 3])


class RelationalLossTestCase(SimpleTestCase):

    def test_equal_gram_matrices(self):
        e_u = unit_rows(np.random.default_rng(1), 6, 4)
        e_t = np.hstack([e_u, np.zeros((6, 3))])
        self.assertAlmostEqual(relational_distill(constant(e_u), constant(e_t)).item(), 0.0, places=12)

    def test_two_unit_entries(self):
        e_u = np.eye(2)
        e_t = np.array([[1.0, 0.0], [1.0, 0.0]])
        self.assertEqual(relational_distill(constant(e_u), constant(e_t)).item(), 2.0)
        self.assertEqual(relational_distill(constant(e_u), constant(e_t), rel_norm='mean').item(), 0.5)

    def test_scalar_oracle_and_teacher_gradient(self):
        rng = np.random.default_rng(2)
        u, t = unit_rows(rng, 5, 3), unit_rows(rng, 5, 6)
        expected = math.fsum((float(np.dot(u[i], u[j])) - float(np.dot(t[i], t[j]))) ** 2
                             for i in range(5) for j in range(5))
        e_u, e_t = parameter(u), parameter(t)
        with Tape():
            loss = relational_distill(e_u, stop_gradient(e_t))
            grads = backward(loss)
        self.assertAlmostEqual(loss.item(), expected, places=10)
        self.assertIn(e_u, grads)
        self.assertNotIn(e_t, grads)
        self.assertGreater(loss.item(), 0.0)

    def test_teacher_must_be_detached(self):
        with self.assertRaises(ContractError):
            relational_distill(parameter(np.eye(2)), parameter(np.eye(2)))

    def test_batch_mismatch(self):
        with self.assertRaises(ContractError):
            relational_distill(constant(np.eye(2)), constant(np.eye(3)))


class LogitDistillTestCase(SimpleTestCase):

    def test_identical_logits(self):
        l = np.random.default_rng(3).standard_normal((4, 6))
        self.assertAlmostEqual(logit_distill(constant(l), constant(l), 0.1).item(), 0.0, places=14)

    def test_two_class_closed_form(self):
        t = 0.1
        value = logit_distill(constant([[0.0, 0.0]]), constant([[0.0, t * math.log(3.0)]]), t).item()
        self.assertAlmostEqual(value, 0.5 * math.log(4.0 / 3.0), places=12)

    def test_scalar_oracle_and_teacher_gradient(self):
        rng = np.random.default_rng(4)
        l_u, l_t = rng.standard_normal((6, 5)), rng.standard_normal((6, 5))
        temperature = 0.5
        rows = []
        for i in range(6):
            p = log_softmax_oracle(list(l_u[i] / temperature))
            q = log_softmax_oracle(list(l_t[i] / temperature))
            rows.append(math.fsum(math.exp(a) * (a - b) for a, b in zip(p, q)))
        student, teacher = parameter(l_u), parameter(l_t)
        with Tape():
            loss = logit_distill(student, stop_gradient(teacher), temperature)
            grads = backward(loss)
        self.assertAlmostEqual(loss.item(), math.fsum(rows) / 6.0, places=10)
        self.assertGreaterEqual(loss.item(), 0.0)
        self.assertIn(student, grads)
        self.assertNotIn(teacher, grads)

    def test_temperature_must_be_positive(self):
        with self.assertRaises(ContractError):
            logit_distill(constant([[0.0, 1.0]]), constant([[0.0, 1.0]]), 0.0)


class TotalLossTestCase(SimpleTestCase):

    def test_unweighted_sum(self):
        flags = LossFlags()
        bundle = combine_terms(constant(0.7), constant(0.9), constant(0.1), constant(0.05), flags.enabled())
        self.assertAlmostEqual(bundle.total.item(), 1.75, places=12)

    def test_ablation_flags(self):
        flags = LossFlags.from_ablation(no_any_distill=True)
        self.assertEqual(flags.enabled(), {'cls_teacher': True, 'cls_student': True, 'rel': False, 'log_distill': False})
        bundle = combine_terms(constant(0.7), constant(0.9), constant(0.1), constant(0.05), flags.enabled())
        self.assertAlmostEqual(bundle.total.item(), 1.6, places=12)

        flags = LossFlags.from_ablation(no_student_ce=True)
        bundle = combine_terms(constant(0.7), constant(0.9), constant(0.1), constant(0.05), flags.enabled())
        self.assertAlmostEqual(bundle.total.item(), 0.85, places=12)

        self.assertFalse(LossFlags.from_ablation(no_logit_distill=True).log_distill)
        self.assertEqual(LossFlags.from_ablation(has_teacher=False).enabled(),
                         {'cls_teacher': False, 'cls_student': True, 'rel': False, 'log_distill': False})

    def test_all_disabled(self):
        flags = LossFlags(teacher_cls=False, student_cls=False, rel=False, log_distill=False)
        with self.assertRaises(ContractError):
            total_loss([0], flags, constant([[0.0, 0.0]]))


class GradientIsolationTestCase(SimpleTestCase):

    def setUp(self):
        config = tiny_config()
        self.model_config = config.model_config(32, [4, 5])
        self.params = init_params(self.model_config, 0)
        rng = np.random.default_rng(0)
        self.x = rng.standard_normal((8, 32))
        self.labels = rng.integers(0, 5, size=8)

    def _grads(self, flags, domain=1):
        cfg = self.model_config
        bound = self.params.bind()
        with Tape():
            e_b = backbone_forward(bound, cfg, self.x)
            e_u = student_embed(bound, cfg, e_b)
            e_t = teacher_embed(bound, cfg, domain, e_b)
            bundle = total_loss(self.labels, flags, logits(bound, cfg, 'student', domain, e_u), e_u,
                                logits(bound, cfg, 'teacher', domain, e_t), e_t)
            grads = backward(bundle.total)
        return bound, grads

    def test_distillation_terms_do_not_reach_the_teacher(self):
        flags = LossFlags(teacher_cls=False, student_cls=False, rel=True, log_distill=True)
        bound, grads = self._grads(flags)
        for name, tensor in bound.items():
            if name.startswith('teacher.'):
                self.assertNotIn(tensor, grads, name)
        self.assertIn(bound['student.proj.weight'], grads)
        self.assertIn(bound['student.cls.1.weight'], grads)

    def test_both_heads_reach_the_backbone(self):
        bound, grads = self._grads(LossFlags())
        self.assertGreater(np.abs(grads[bound['backbone.0.weight']]).sum(), 0.0)
        self.assertIn(bound['teacher.1.proj.weight'], grads)
        self.assertNotIn(bound['teacher.0.proj.weight'], grads)
        self.assertNotIn(bound['student.cls.0.weight'], grads)


class SamplerTestCase(SimpleTestCase):

    def test_record_loss(self):
        state = SamplerState('dynamic', 3)
        state.record_loss(0, 1.0)
        state.record_loss(0, 1.0)
        self.assertEqual(state.window_means()[0], 1.0)
        self.assertEqual(list(state.window_count), [2, 0, 0])
        with self.assertRaises(ContractError):
            state.record_loss(1, float('nan'))
        with self.assertRaises(ContractError):
            state.record_loss(1, -0.5)

    def test_interleaved_bookkeeping(self):
        rng = np.random.default_rng(0)
        state = SamplerState('dynamic', 4)
        sums, counts = [0.0] * 4, [0] * 4
        for _ in range(200):
            d, loss = int(rng.integers(0, 4)), float(rng.random() * 3)
            state.record_loss(d, loss)
            sums[d] += loss
            counts[d] += 1
        self.assertEqual(list(state.window_count), counts)
        np.testing.assert_allclose(state.window_sum, sums, rtol=1e-12)

    def test_refresh_normalizes_window_means(self):
        state = SamplerState('dynamic', 3)
        for d, loss in ((0, 2.0), (1, 1.0), (2, 1.0)):
            state.record_loss(d, loss)
        np.testing.assert_array_equal(state.refresh_probabilities(), [0.5, 0.25, 0.25])
        self.assertEqual(list(state.window_count), [0, 0, 0])

        state = SamplerState('dynamic', 4)
        for d in range(4):
            state.record_loss(d, 0.8)
        np.testing.assert_allclose(state.refresh_probabilities(), [0.25] * 4, atol=1e-15)

    def test_random_losses_against_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            n = int(rng.integers(2, 9))
            losses = rng.random(n) * 5 + 0.01
            state = SamplerState('dynamic', n)
            for d in range(n):
                state.record_loss(d, losses[d])
            probs = state.refresh_probabilities()
            total = math.fsum(losses)
            for d in range(n):
                self.assertAlmostEqual(probs[d], losses[d] / total, places=12)
            self.assertAlmostEqual(math.fsum(probs), 1.0, places=12)
            self.assertEqual(int(np.argmax(probs)), int(np.argmax(losses)))

    def test_scaling_invariance(self):
        losses = [0.3, 1.7, 0.9, 2.2]
        results = []
        for scale in (1.0, 4.0):
            state = SamplerState('dynamic', 4)
            for d, loss in enumerate(losses):
                state.record_loss(d, scale * loss)
            results.append(state.refresh_probabilities())
        np.testing.assert_array_equal(results[0], results[1])

    def test_argmax_ties_go_to_lowest_index(self):
        state = SamplerState('dynamic', 3)
        for d, loss in enumerate((1.0, 2.0, 2.0)):
            state.record_loss(d, loss)
        self.assertEqual(int(np.argmax(state.refresh_probabilities())), 1)

    def test_starved_domain_keeps_previous_mean(self):
        state = SamplerState('dynamic', 3)
        for d, loss in ((0, 2.0), (1, 1.0), (2, 1.0)):
            state.record_loss(d, loss)
        state.refresh_probabilities()
        state.record_loss(0, 1.0)
        np.testing.assert_allclose(state.refresh_probabilities(), [1.0 / 3] * 3, atol=1e-15)

    def test_no_history_keeps_uniform(self):
        state = SamplerState('dynamic', 4)
        np.testing.assert_array_equal(state.refresh_probabilities(), [0.25] * 4)

    def test_min_prob_floor(self):
        state = SamplerState('dynamic', 2, min_prob=0.2)
        state.record_loss(0, 1.0)
        state.record_loss(1, 0.0)
        probs = state.refresh_probabilities()
        self.assertAlmostEqual(probs.sum(), 1.0, places=12)
        self.assertGreater(probs[1], 0.0)

    def test_tick_refreshes_every_period(self):
        state = SamplerState('dynamic', 2, refresh_period=3)
        self.assertEqual([state.tick() for _ in range(7)], [False, False, True, False, False, True, False])
        self.assertEqual(state.refreshes, 2)
        rr = SamplerState('round_robin', 2, refresh_period=3)
        self.assertFalse(any(rr.tick() for _ in range(7)))

    def test_round_robin_cycle(self):
        state = SamplerState('round_robin', 3)
        self.assertEqual([state.next_domain() for _ in range(7)], [0, 1, 2, 0, 1, 2, 0])

    def test_degenerate_distribution(self):
        state = SamplerState('dynamic', 3)
        for d, loss in enumerate((1.0, 0.0, 0.0)):
            state.record_loss(d, loss)
        np.testing.assert_array_equal(state.refresh_probabilities(), [1.0, 0.0, 0.0])
        self.assertEqual({state.next_domain() for _ in range(1000)}, {0})

    def test_draw_frequencies(self):
        weights = [0.5, 0.3, 0.2]
        state = SamplerState('static_weights', 3, seed=7, static_weights=weights)
        draws = np.array([state.next_domain() for _ in range(100000)])
        frequencies = np.bincount(draws, minlength=3) / 100000.0
        self.assertLess(np.max(np.abs(frequencies - weights)), 0.01)

        sizes = SamplerState('dataset_size', 2, dataset_sizes=[30, 10])
        np.testing.assert_array_equal(sizes.probabilities, [0.75, 0.25])

    def test_draws_are_deterministic(self):
        first = SamplerState('static_weights', 4, seed=3, static_weights=[1, 2, 3, 4])
        second = SamplerState('static_weights', 4, seed=3, static_weights=[1, 2, 3, 4])
        self.assertEqual([first.next_domain() for _ in range(500)], [second.next_domain() for _ in range(500)])

    def test_contract_errors(self):
        with self.assertRaises(ContractError):
            SamplerState('curriculum', 2)
        with self.assertRaises(ContractError):
            SamplerState('static_weights', 2)
        with self.assertRaises(ContractError):
            SamplerState('dynamic', 2, min_prob=0.6)


class MakeBatchTestCase(SimpleTestCase):

    def setUp(self):
        self.dataset = tiny_dataset()

    def test_single_domain_with_replacement(self):
        pool = self.dataset.train_indices(1)
        batch = make_batch(self.dataset, 1, pool.size * 3, np.random.default_rng(0))
        self.assertEqual(len(batch), pool.size * 3)
        self.assertTrue(np.all(self.dataset.domain_ids[batch.indices] == 1))
        self.assertTrue(np.all(self.dataset.split_tags[batch.indices] == split_tag('train')))
        np.testing.assert_array_equal(batch.labels, self.dataset.class_ids[batch.indices])

    def test_class_frequencies(self):
        pool = self.dataset.train_indices(1)
        expected = np.bincount(self.dataset.class_ids[pool], minlength=5) / float(pool.size)
        batch = make_batch(self.dataset, 1, 50000, np.random.default_rng(1))
        observed = np.bincount(batch.labels, minlength=5) / 50000.0
        self.assertLess(np.max(np.abs(observed - expected)), 0.02)

    def test_class_balanced(self):
        batch = make_batch(self.dataset, 0, 50000, np.random.default_rng(2), class_balanced=True)
        observed = np.bincount(batch.labels, minlength=4) / 50000.0
        self.assertLess(np.max(np.abs(observed - 0.25)), 0.02)

    def test_empty_domain(self):
        dataset = Dataset(4, [2, 2], [0, 0, 1], [0, 1, 0], [split_tag('train')] * 2 + [split_tag('val_query')],
                          np.zeros((3, 4)))
        with self.assertRaises(ContractError):
            make_batch(dataset, 1, 4, np.random.default_rng(0))


class AdamTestCase(SimpleTestCase):

    def test_only_parameters_with_gradients_move(self):
        arrays = {'a': np.ones((2, 3)), 'b': np.ones((3,))}
        before = arrays['b'].copy()
        optimizer = Adam(learning_rate=1e-3)
        optimizer.step(arrays, {'a': np.full((2, 3), 0.5)})
        np.testing.assert_array_equal(arrays['b'], before)
        np.testing.assert_allclose(arrays['a'], 1.0 - 1e-3, rtol=1e-6)
        self.assertNotIn('b', optimizer.m)

    def test_cosine_schedule(self):
        optimizer = Adam(learning_rate=1.0, schedule='cosine', total_steps=10)
        self.assertEqual(optimizer.current_lr(), 1.0)
        optimizer.global_step = 10
        self.assertAlmostEqual(optimizer.current_lr(), 0.0, places=12)
        with self.assertRaises(ContractError):
            Adam(schedule='cosine')


class ExperimentConfigTestCase(SimpleTestCase):

    def test_defaults(self):
        config = ExperimentConfig.resolve(environ={})
        self.assertEqual((config.mode, config.sampler, config.loss_source), ('udon', 'dynamic', 'teacher_cls'))
        self.assertEqual((config.batch_size, config.refresh_period, config.temperature), (128, 50, 0.1))
        self.assertEqual((config.backbone_out_dim, config.student_dim, config.teacher_dim), (256, 64, 256))
        self.assertEqual(config.generator_values()['domain.3.num_classes'], '100')

    def test_resolution_order(self):
        file_values = {'steps': '100'}
        environ = {env_name('steps'): '200'}
        self.assertEqual(ExperimentConfig.resolve(file_values, environ={}).steps, 100)
        self.assertEqual(ExperimentConfig.resolve(file_values, environ=environ).steps, 200)
        self.assertEqual(ExperimentConfig.resolve(file_values, {'steps': '300'}, environ=environ).steps, 300)
        self.assertEqual(env_name('domain.1.cue_mode'), 'UDON_DOMAIN_1_CUE_MODE')

    def test_unknown_and_bad_values(self):
        with self.assertRaises(ContractError):
            ExperimentConfig.resolve({'stepz': '1'}, environ={})
        with self.assertRaises(ContractError):
            ExperimentConfig.resolve({'steps': 'many'}, environ={})
        with self.assertRaises(ContractError):
            ExperimentConfig.resolve({'mode': 'online'}, environ={})
        with self.assertRaises(ContractError):
            ExperimentConfig.resolve({'mode': 'baseline_cls_only'}, environ={})

    def test_no_any_distill_implies_no_logit_distill(self):
        config = tiny_config(no_any_distill='true')
        self.assertTrue(config.no_logit_distill)
        self.assertFalse(config.loss_flags().rel)

    def test_echo_round_trip(self):
        config = tiny_config(sampler='static_weights', static_weights='1,2')
        again = ExperimentConfig.resolve(keyvalue.parse_lines(config.echo()), environ={})
        self.assertEqual(again.config_hash(), config.config_hash())
        self.assertNotEqual(tiny_config(steps=21).config_hash(), tiny_config().config_hash())


class TrainerTestCase(SimpleTestCase):

    def setUp(self):
        self.config = tiny_config()
        self.dataset = tiny_dataset(self.config)

    def test_bit_identical_runs(self):
        first = train(self.config, 3, self.dataset)
        second = train(self.config, 3, self.dataset)
        self.assertTrue(first.params.equals(second.params))
        self.assertEqual([r['domain'] for r in first.run_log.steps], [r['domain'] for r in second.run_log.steps])
        self.assertFalse(first.params.equals(train(self.config, 4, self.dataset).params))

    def test_non_batch_teacher_heads_do_not_change(self):
        params = init_params(self.config.model_config(32, [4, 5]), 0)
        before = params.copy()
        trainer = Trainer(params, self.dataset, self.config.loss_flags(), SamplerState('round_robin', 2),
                          Adam(), 0, 8)
        trainer.step(1)
        for name in params.names():
            unchanged = np.array_equal(params[name], before[name])
            if name.startswith('teacher.1.') or name == 'student.cls.1.weight':
                self.assertTrue(unchanged, name)
            elif name.endswith('weight') and not name.startswith('backbone.'):
                self.assertFalse(unchanged, name)
        self.assertFalse(np.array_equal(params['backbone.0.weight'], before['backbone.0.weight']))

    def test_run_log_and_sampler_refreshes(self):
        result = train(self.config, 0, self.dataset)
        steps = [r['step'] for r in result.run_log.steps]
        self.assertEqual(steps, list(range(1, 21)))
        self.assertEqual([r['step'] for r in result.run_log.refreshes], [5, 10, 15, 20])
        self.assertEqual(len(result.trace.rows), 4)
        for refresh in result.run_log.refreshes:
            self.assertAlmostEqual(sum(refresh['probabilities']), 1.0, places=12)
        for record in result.run_log.steps:
            self.assertEqual(record['sampler_loss'], record['cls_teacher'])
            self.assertAlmostEqual(record['total'], sum(record[t] for t in ('cls_teacher', 'cls_student', 'rel', 'log_distill')), places=12)
        with self.assertRaises(ContractError):
            result.run_log.add_step('joint', 20, 0, {}, 1.0)

    def test_sampler_on_universal_loss(self):
        result = train(tiny_config(loss_source='student_cls'), 0, self.dataset)
        for record in result.run_log.steps:
            self.assertEqual(record['sampler_loss'], record['cls_student'])
        result = train(tiny_config(loss_source='student_cls', no_student_ce='true'), 0, self.dataset)
        for record in result.run_log.steps:
            self.assertIsNone(record['cls_student'])
            self.assertTrue(math.isfinite(record['sampler_loss']))

    def test_periodic_evaluation(self):
        result = train(tiny_config(eval_every=10), 0, self.dataset)
        self.assertEqual([e['step'] for e in result.run_log.evals], [10, 20])
        self.assertEqual(result.run_log.evals[0]['report'].metadata['split'], 'val')

    def test_baselines(self):
        cls_only = train(tiny_config(mode='baseline_cls_only', sampler='round_robin', loss_source='student_cls'), 0, self.dataset)
        self.assertEqual(cls_only.params.config.teacher_domains, [])
        self.assertEqual(cls_only.run_log.series('cls_teacher'), [])
        self.assertEqual([r['domain'] for r in cls_only.run_log.steps[:4]], [0, 1, 0, 1])
        mlp = train(tiny_config(mode='baseline_mlp', loss_source='student_cls'), 0, self.dataset)
        self.assertTrue(mlp.params.config.mlp_baseline)
        self.assertTrue(all(math.isfinite(v) for _, v in mlp.run_log.series('total')))

    def test_parameter_counts(self):
        udon = tiny_config().model_config(32, [4, 5])
        cls_only = tiny_config(mode='baseline_cls_only', loss_source='student_cls').model_config(32, [4, 5])
        self.assertEqual(parameter_count(udon) - parameter_count(cls_only), teacher_head_count(udon))

        config = ExperimentConfig.resolve(environ={})
        classes = [20, 20, 20, 100]
        online = parameter_count(config.model_config(64, classes))
        offline = parameter_count(config.model_config(64, classes, teacher_domains=[])) + sum(
            parameter_count(config.model_config(64, classes, student_head=False, teacher_domains=[d]))
            for d in range(4))
        self.assertGreaterEqual(offline, 2 * online)

    def test_divergence_names_the_step(self):
        params = init_params(self.config.model_config(32, [4, 5]), 0)
        params.arrays['backbone.0.weight'][:] = np.nan
        trainer = Trainer(params, self.dataset, self.config.loss_flags(), SamplerState('round_robin', 2), Adam(), 0, 8)
        with self.assertRaises(DivergenceError) as ctx:
            trainer.step(1)
        self.assertEqual(ctx.exception.step, 1)
        self.assertEqual(ctx.exception.to_dict()['status'], 'diverged')

    def test_smoke_loss_decreases(self):
        config = ExperimentConfig.resolve({'steps': '200', 'eval_every': '0', 'log_every': '0'}, environ={})
        dataset = generate_from_config(config.generator_values())
        series = [v for _, v in train(config, 0, dataset).run_log.series('cls_student')]
        self.assertEqual(len(series), 200)
        self.assertLess(np.mean(series[-10:]), np.mean(series[:10]))


class OfflineDistillTestCase(SimpleTestCase):

    def setUp(self):
        self.dataset = tiny_dataset()

    def test_specialists_are_frozen_during_distillation(self):
        config = tiny_config(mode='offline_distill_8', steps=10, teacher_steps=4)
        result = train(config, 1, self.dataset)
        self.assertEqual(len(result.teachers), 2)
        reference = train_specialists(config, 1, self.dataset, RunLog())
        for trained, fresh in zip(result.teachers, reference):
            self.assertTrue(trained.equals(fresh))
        phases = [r['phase'] for r in result.run_log.steps]
        self.assertEqual(phases, ['teacher_0'] * 2 + ['teacher_1'] * 2 + ['student'] * 6)
        self.assertEqual([r['step'] for r in result.run_log.steps], list(range(1, 11)))
        self.assertEqual(result.params.config.teacher_domains, [])
        self.assertIsNone(result.run_log.steps[-1]['cls_teacher'])
        self.assertIsNotNone(result.run_log.steps[-1]['rel'])
        counts = result.parameter_counts()
        self.assertEqual(counts['total'], counts['model'] + sum(counts['teachers']))

    def test_one_multi_head_teacher(self):
        result = train(tiny_config(mode='offline_distill_1', steps=10, teacher_steps=5), 0, self.dataset)
        self.assertEqual(len(result.teachers), 1)
        self.assertEqual(result.teachers[0].config.teacher_domains, [0, 1])
        self.assertFalse(result.teachers[0].config.student_head)
        self.assertEqual(result.run_log.last_step, 10)

    def test_offline_modes_share_the_online_step_budget(self):
        online = train(tiny_config(steps=9), 0, self.dataset)
        for mode, teacher_phases in (('offline_distill_1', ['teacher'] * 4),
                                     ('offline_distill_8', ['teacher_0'] * 2 + ['teacher_1'] * 2)):
            result = train(tiny_config(mode=mode, steps=9), 0, self.dataset)
            self.assertEqual(result.run_log.last_step, online.run_log.last_step, mode)
            self.assertEqual([r['phase'] for r in result.run_log.steps], teacher_phases + ['student'] * 5, mode)

    def test_step_budget_split(self):
        self.assertEqual(tiny_config(mode='offline_distill_1', steps=9).offline_budget(), (4, 5))
        self.assertEqual(tiny_config(mode='offline_distill_1', steps=9, teacher_steps=7).offline_budget(), (7, 2))
        self.assertEqual(specialist_steps(7, 3), [3, 2, 2])
        with self.assertRaises(ContractError):
            specialist_steps(1, 2)
        with self.assertRaises(ContractError):
            tiny_config(mode='offline_distill_1', steps=9, teacher_steps=9)
        with self.assertRaises(ContractError):
            tiny_config(mode='offline_distill_8', steps=1)


class AblationGridTestCase(SimpleTestCase):

    GRID = """
[grid]
config = base.conf
seeds = 0,1
cells = full, no_any_distill
steps = 10

[temperature_0.05]

[custom]
preset = uscrr
refresh_period = 7
"""

    def test_parse(self):
        grid = AblationGrid.parse(self.GRID)
        self.assertEqual(grid.config_path, 'base.conf')
        self.assertEqual(grid.seeds, [0, 1])
        self.assertEqual([name for name, _ in grid.cells], ['full', 'no_any_distill', 'temperature_0.05', 'custom'])
        self.assertEqual(grid.cell_overrides('temperature_0.05', 1), {'steps': '10', 'temperature': '0.05', 'seed': '1'})
        custom = grid.cell_overrides('custom', 0)
        self.assertEqual((custom['mode'], custom['sampler'], custom['refresh_period']), ('baseline_cls_only', 'round_robin', '7'))

    def test_bad_grids(self):
        with self.assertRaises(ContractError):
            AblationGrid.parse("[cells]\nfull = 1\n")
        with self.assertRaises(ContractError):
            AblationGrid.parse("[grid]\ncells = full, warp_drive\n")
        with self.assertRaises(ContractError):
            AblationGrid.parse("[grid]\nseeds = 0\n")

    def test_every_preset_resolves(self):
        for name in preset_names():
            ExperimentConfig.resolve(overrides=preset_overrides(name), environ={})

    def test_shipped_grid_resolves(self):
        from django.conf import settings
        grid = AblationGrid.from_file(os.path.join(settings.BASE_DIR, 'var', 'config', 'ablation.grid'))
        base = keyvalue.read_file(os.path.join(settings.BASE_DIR, grid.config_path))
        self.assertEqual(len(grid.cells), 8)
        for cell, _ in grid.cells:
            config = ExperimentConfig.resolve(base, grid.cell_overrides(cell, 0), environ={})
            self.assertEqual(config.seed, 0)
        self.assertEqual(ExperimentConfig.resolve(base, grid.cell_overrides('teachers_64d', 0), environ={}).teacher_dim, 64)

    def test_consolidate(self):
        rows = consolidate([
            ('full', 0, 'finished', {('mean', 'R@1'): 50.0, ('0', 'R@1'): 40.0}),
            ('full', 1, 'finished', {('mean', 'R@1'): 70.0, ('0', 'R@1'): 60.0}),
            ('full', 2, 'diverged', None),
        ])
        self.assertIn(['full', 2, 'diverged', '', '', ''], rows)
        self.assertIn(['full', 'mean', 'finished', 'mean', 'R@1', repr(60.0)], rows)
        self.assertIn(['full', 'mean', 'finished', '0', 'R@1', repr(50.0)], rows)
        self.assertIn(['full', 'std', 'finished', 'mean', 'R@1', repr(10.0)], rows)
        self.assertIn(['full', 'std', 'finished', '0', 'R@1', repr(10.0)], rows)

    def test_seed_std_matches_recomputation(self):
        rng = np.random.default_rng(11)
        entries = []
        for seed in range(3):
            entries.append(('full', seed, 'finished', {(d, m): float(rng.uniform(0, 100))
                                                       for d in ('0', '1', 'mean') for m in ('R@1', 'mP@5')}))
        rows = consolidate(entries)
        for domain in ('0', '1', 'mean'):
            for metric in ('R@1', 'mP@5'):
                seeds = [values[(domain, metric)] for _, _, _, values in entries]
                mean = math.fsum(seeds) / 3
                std = math.sqrt(math.fsum((v - mean) ** 2 for v in seeds) / 3)
                std_rows = [r for r in rows if r[1] == 'std' and (r[3], r[4]) == (domain, metric)]
                self.assertEqual(len(std_rows), 1)
                self.assertAlmostEqual(float(std_rows[0][5]), std, places=9)


class CommandTestCase(TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.config_path = os.path.join(self.tmp.name, 'tiny.conf')
        with open(self.config_path, 'w') as f:
            f.write(TINY_CONFIG)

    def tearDown(self):
        self.tmp.cleanup()

    def test_train_writes_artifacts(self):
        out = os.path.join(self.tmp.name, 'run')
        call_command('train', '--config', self.config_path, '--seed', '2', '--out-dir', out)
        for name in ('model.ckpt', 'run_log.csv', 'sampler_trace.csv', 'config.conf', 'params.json',
                     'metrics.csv', 'metrics.json'):
            self.assertTrue(os.path.exists(os.path.join(out, name)), name)

        run = ExperimentRun.objects.get()
        self.assertEqual((run.status, run.seed, run.steps_done), ('finished', 2, 20))
        self.assertEqual(run.checkpoint_path, os.path.join(os.path.abspath(out), 'model.ckpt'))
        self.assertEqual(set(run.summary['mean']), {'R@1', 'mP@5'})
        self.assertEqual(run.metrics.filter(split='test').count(), 6)
        self.assertEqual(ExperimentConfig.from_file(os.path.join(out, 'config.conf'), environ={}).config_hash(),
                         run.config_hash)
        with open(os.path.join(out, 'run_log.csv')) as f:
            self.assertEqual(len(list(csv.DictReader(f))), 20)

        # a reloaded checkpoint reproduces the final metrics exactly
        call_command('eval', '--checkpoint', run.checkpoint_path, '--data', self._dataset_file(run),
                     '--split', 'test', '--mode', 'joint', '--out-dir', os.path.join(self.tmp.name, 'eval'))
        with open(os.path.join(out, 'metrics.json')) as f:
            trained = json.load(f)
        with open(os.path.join(self.tmp.name, 'eval', 'eval_test_joint_student.json')) as f:
            reloaded = json.load(f)
        self.assertEqual(trained['domains'], reloaded['domains'])
        self.assertEqual(trained['mean'], reloaded['mean'])
        self.assertEqual(reloaded['metadata']['run_id'], run.run_id.hex)

        r = Client().get('/training/api/v1/runs/list')
        self.assertEqual(r.json()[0]['run_id'], run.run_id.hex)
        r = Client().get('/training/api/v1/runs/by-id/{}'.format(run.run_id.hex))
        self.assertEqual(len(r.json()['metrics']), 12)

    def _dataset_file(self, run):
        from datasets.formats import write_dataset
        path = os.path.join(self.tmp.name, 'tiny.udon')
        write_dataset(generate_from_config(ExperimentConfig(dict(run.config)).generator_values()), path)
        return path

    def test_bad_config_exits_2(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('train', '--config', self.config_path, '--set', 'mode=online')
        self.assertEqual(ctx.exception.returncode, 2)
        self.assertTrue(Event.objects.filter(type='ERROR', message__startswith='[Training/train]').exists())

    def test_divergence_exits_3(self):
        out = os.path.join(self.tmp.name, 'diverged')
        error = DivergenceError(7, 1, {'total': float('nan')})
        with mock.patch('training.runs.train', side_effect=error):
            with self.assertRaises(CommandError) as ctx:
                call_command('train', '--config', self.config_path, '--out-dir', out)
        self.assertEqual(ctx.exception.returncode, 3)
        with open(os.path.join(out, 'divergence.json')) as f:
            report = json.load(f)
        self.assertEqual((report['status'], report['step'], report['domain']), ('diverged', 7, 1))
        run = ExperimentRun.objects.get()
        self.assertEqual((run.status, run.diverged_step), ('diverged', 7))
        self.assertFalse(run.metrics.exists())

    def test_ablate(self):
        grid_path = os.path.join(self.tmp.name, 'small.grid')
        with open(grid_path, 'w') as f:
            f.write("[grid]\nconfig = tiny.conf\nseeds = 0\ncells = full, uscrr\nsteps = 6\n")
        out = os.path.join(self.tmp.name, 'ablation')
        call_command('ablate', '--grid', grid_path, '--out-dir', out)

        ablation = Ablation.objects.get()
        self.assertEqual(ablation.status, 'finished')
        self.assertEqual(sorted(r.cell for r in ablation.runs.all()), ['full', 'uscrr'])
        self.assertTrue(all(r.status == 'finished' for r in ablation.runs.all()))
        self.assertTrue(os.path.exists(os.path.join(out, 'data.udon')))
        with open(os.path.join(out, 'ablation.csv')) as f:
            rows = list(csv.DictReader(f))
        means = [(r['cell'], r['metric']) for r in rows if r['seed'] == 'mean' and r['domain'] == 'mean']
        self.assertEqual(sorted(means), [('full', 'R@1'), ('full', 'mP@5'), ('uscrr', 'R@1'), ('uscrr', 'mP@5')])
        self.assertEqual(ablation.runs.get(cell='uscrr').config['sampler'], 'round_robin')

        r = Client().get('/training/api/v1/ablations/by-id/{}'.format(ablation.id))
        self.assertEqual(r.json()['csv_path'], os.path.join(out, 'ablation.csv'))

    def test_ablate_keeps_going_when_a_cell_crashes(self):
        grid_path = os.path.join(self.tmp.name, 'small.grid')
        with open(grid_path, 'w') as f:
            f.write("[grid]\nconfig = tiny.conf\nseeds = 0\ncells = full, uscrr\nsteps = 6\n")
        out = os.path.join(self.tmp.name, 'ablation')

        def crash_cls_only(config, seed, dataset, workers=1):
            if config.mode == 'baseline_cls_only':
                raise ValueError("singular matrix")
            return train(config, seed, dataset, workers=workers)

        with mock.patch('training.runs.train', side_effect=crash_cls_only):
            call_command('ablate', '--grid', grid_path, '--out-dir', out)

        ablation = Ablation.objects.get()
        self.assertEqual(ablation.status, 'finished')
        self.assertEqual(ablation.runs.get(cell='full').status, 'finished')
        crashed = ablation.runs.get(cell='uscrr')
        self.assertEqual(crashed.status, 'error')
        self.assertIn('ValueError', crashed.summary['error'])
        self.assertTrue(Event.objects.filter(run=crashed, type='ERROR').exists())
        with open(os.path.join(out, 'ablation.csv')) as f:
            rows = list(csv.DictReader(f))
        self.assertIn({'cell': 'uscrr', 'seed': '0', 'status': 'error', 'domain': '', 'metric': '', 'value': ''}, rows)
        self.assertEqual({r['cell'] for r in rows if r['seed'] == 'mean'}, {'full'})

    def test_ablate_bad_grid_exits_2(self):
        grid_path = os.path.join(self.tmp.name, 'bad.grid')
        with open(grid_path, 'w') as f:
            f.write("[grid]\ncells = nonsense\n")
        with self.assertRaises(CommandError) as ctx:
            call_command('ablate', '--grid', grid_path, '--out-dir', self.tmp.name)
        self.assertEqual(ctx.exception.returncode, 2)


@unittest.skipUnless(os.environ.get('UDON_RUN_REPLICATION') == '1', "set UDON_RUN_REPLICATION=1 to run")
class ReplicationTestCase(SimpleTestCase):
    """Directional comparisons on the default benchmark, three seeds per cell."""

    SEEDS = (0, 1, 2)
    LONG_TAIL_DOMAIN = 3
    TIME_LIMIT = 600.0

    @classmethod
    def setUpClass(cls):
        super(ReplicationTestCase, cls).setUpClass()
        started = time.monotonic()
        path = os.path.join(settings.BASE_DIR, 'var', 'config', 'default.conf')
        quiet = {'eval_every': '0', 'log_every': '0'}
        base = ExperimentConfig.from_file(path, overrides=quiet, environ={})
        cls.dataset = generate_from_config(base.generator_values())
        cls.results = {}
        cells = ('full', 'no_any_distill', 'uscrr', 'no_dyn_sampler_rr', 'teachers_64d', 'offline_distill_1')
        for cell in cells:
            config = ExperimentConfig.from_file(path, overrides=dict(preset_overrides(cell), **quiet), environ={})
            reports = []
            for seed in cls.SEEDS:
                result = train(config, seed, cls.dataset)
                reports.append(joint_index_eval(result.params, cls.dataset, 'test'))
            cls.results[cell] = reports
        cls.elapsed = time.monotonic() - started

    def mean_r1(self, cell, domain=None):
        reports = self.results[cell]
        if domain is None:
            return 100.0 * np.mean([r.mean('R@1') for r in reports])
        return 100.0 * np.mean([r.per_domain[domain]['R@1'] for r in reports])

    def test_distillation_helps(self):
        self.assertGreaterEqual(self.mean_r1('full'), self.mean_r1('no_any_distill'))
        self.assertGreaterEqual(self.mean_r1('full'), self.mean_r1('uscrr') + 1.0)

    def test_dynamic_sampler_helps_the_long_tail_domain(self):
        self.assertGreaterEqual(self.mean_r1('full', self.LONG_TAIL_DOMAIN),
                                self.mean_r1('no_dyn_sampler_rr', self.LONG_TAIL_DOMAIN) + 1.0)

    def test_wide_teachers(self):
        self.assertGreaterEqual(self.mean_r1('full'), self.mean_r1('teachers_64d'))

    def test_online_beats_offline(self):
        self.assertGreaterEqual(self.mean_r1('full'), self.mean_r1('offline_distill_1'))

    def test_runs_within_ten_minutes(self):
        self.assertLess(self.elapsed, self.TIME_LIMIT)
