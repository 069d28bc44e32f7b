# -*- coding: utf-8 -*-

import numpy as np
from django.test import SimpleTestCase

from autograd import Tape, backward, constant, multiply, sum_all
from autograd.gradcheck import check_gradients
from common.exceptions import ContractError, DimensionError, FormatError
from . import (
    ModelConfig, backbone_forward, init_params, logits, parameter_count, student_embed,
    teacher_embed, teacher_head_count,
)
from .checkpoints import dumps_checkpoint, loads_checkpoint
from .params import parameter_layout


def small_config(**changes):
    values = dict(input_dim=6, classes_per_domain=[3, 4], backbone_hidden_dims=[5],
                  backbone_out_dim=8, student_dim=4, teacher_dim=8)
    values.update(changes)
    return ModelConfig(**values)


def _weighted_sum(y, weights):
    return sum_all(multiply(y, constant(weights)))


class ModelConfigTestCase(SimpleTestCase):

    def test_defaults(self):
        config = ModelConfig(input_dim=64, classes_per_domain=[20, 20, 20, 100])
        self.assertEqual((config.backbone_out_dim, config.student_dim, config.teacher_dim), (256, 64, 256))
        self.assertEqual(config.teacher_domains, [0, 1, 2, 3])

    def test_projection_cannot_expand(self):
        with self.assertRaises(ContractError):
            small_config(teacher_dim=16)
        with self.assertRaises(ContractError):
            small_config(student_dim=16)

    def test_needs_two_classes_and_a_head(self):
        with self.assertRaises(ContractError):
            small_config(classes_per_domain=[3, 1])
        with self.assertRaises(ContractError):
            small_config(student_head=False, teacher_domains=[])

    def test_lines_round_trip(self):
        config = small_config(projector_kind='mlp_one_hidden', teacher_domains=[1], mlp_baseline=True)
        self.assertEqual(ModelConfig.from_lines(config.to_lines()), config)


class ForwardTestCase(SimpleTestCase):

    def setUp(self):
        self.config = ModelConfig(input_dim=64, classes_per_domain=[20, 20, 20, 100])
        self.params = init_params(self.config, 0)
        self.features = np.random.default_rng(0).standard_normal((16, 64))

    def test_embeddings_have_unit_rows(self):
        bound = self.params.constants()
        e_b = backbone_forward(bound, self.config, self.features)
        e_u = student_embed(bound, self.config, e_b)
        e_t = teacher_embed(bound, self.config, 3, e_b)
        self.assertEqual(e_b.shape, (16, 256))
        self.assertEqual(e_u.shape, (16, 64))
        self.assertEqual(e_t.shape, (16, 256))
        for e in (e_b, e_u, e_t):
            np.testing.assert_allclose(np.linalg.norm(e.values, axis=1), 1.0, atol=1e-9)

    def test_teacher_dim_64(self):
        config = self.config.derive(teacher_dim=64)
        params = init_params(config, 0)
        bound = params.constants()
        e_t = teacher_embed(bound, config, 0, backbone_forward(bound, config, self.features))
        self.assertEqual(e_t.shape, (16, 64))

    def test_wrong_feature_dim(self):
        with self.assertRaises(DimensionError):
            backbone_forward(self.params.constants(), self.config, np.zeros((2, 63)))

    def test_teacher_domain_out_of_range(self):
        bound = self.params.constants()
        e_b = backbone_forward(bound, self.config, self.features)
        with self.assertRaises(ContractError):
            teacher_embed(bound, self.config, 4, e_b)

    def test_missing_teacher_head(self):
        config = self.config.derive(teacher_domains=[1])
        bound = init_params(config, 0).constants()
        e_b = backbone_forward(bound, config, self.features)
        with self.assertRaises(ContractError):
            teacher_embed(bound, config, 0, e_b)

    def test_linear_backbone(self):
        config = small_config(backbone_hidden_dims=[])
        params = init_params(config, 3)
        x = np.random.default_rng(1).standard_normal((4, 6))
        params.arrays['backbone.0.bias'][:] = 0.25
        expected = x.dot(params['backbone.0.weight']) + 0.25
        expected /= np.linalg.norm(expected, axis=1, keepdims=True)
        np.testing.assert_allclose(backbone_forward(params.constants(), config, x).values, expected, atol=1e-12)

    def test_forward_is_reproducible(self):
        again = init_params(self.config, 0)
        first = student_embed(self.params.constants(), self.config,
                              backbone_forward(self.params.constants(), self.config, self.features)).values
        second = student_embed(again.constants(), self.config,
                               backbone_forward(again.constants(), self.config, self.features)).values
        np.testing.assert_array_equal(first, second)

    def test_mlp_projector(self):
        config = small_config(projector_kind='mlp_one_hidden')
        names = [name for name, _, _ in parameter_layout(config)]
        self.assertIn('student.proj.ln.gain', names)
        self.assertIn('teacher.1.proj.out.weight', names)
        params = init_params(config, 0)
        bound = params.constants()
        e_u = student_embed(bound, config, backbone_forward(bound, config, np.ones((3, 6))))
        np.testing.assert_allclose(np.linalg.norm(e_u.values, axis=1), 1.0, atol=1e-9)


class LogitsTestCase(SimpleTestCase):

    def setUp(self):
        self.config = small_config()
        self.params = init_params(self.config, 5)

    def test_class_weight_direction_gives_max_logit(self):
        w = self.params['student.cls.1.weight']
        target = w[2] / np.linalg.norm(w[2])
        out = logits(self.params.constants(), self.config, 'student', 1, constant(target.reshape(1, -1))).values
        self.assertAlmostEqual(out[0, 2], 1.0 / self.config.classifier_temperature, places=9)
        self.assertEqual(int(np.argmax(out[0])), 2)

    def test_zero_classifier_weights_are_finite(self):
        self.params.arrays['teacher.0.cls.weight'][:] = 0.0
        e = constant(np.eye(8)[:2])
        out = logits(self.params.constants(), self.config, 'teacher', 0, e).values
        self.assertTrue(np.all(np.isfinite(out)))

    def test_row_scaling_keeps_argmax(self):
        rng = np.random.default_rng(9)
        e = rng.standard_normal((10, 4))
        e /= np.linalg.norm(e, axis=1, keepdims=True)
        before = logits(self.params.constants(), self.config, 'student', 1, constant(e)).values
        self.params.arrays['student.cls.1.weight'][:] *= np.array([[3.0], [0.5], [7.0], [1.25]])
        after = logits(self.params.constants(), self.config, 'student', 1, constant(e)).values
        np.testing.assert_array_equal(np.argmax(before, axis=1), np.argmax(after, axis=1))
        np.testing.assert_allclose(before, after, atol=1e-12)

    def test_dimension_mismatch(self):
        with self.assertRaises(DimensionError):
            logits(self.params.constants(), self.config, 'teacher', 0, constant(np.ones((2, 4))))
        with self.assertRaises(ContractError):
            logits(self.params.constants(), self.config, 'other', 0, constant(np.ones((2, 4))))

    def test_classifier_gradient(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            e = rng.standard_normal((3, 4))
            e /= np.linalg.norm(e, axis=1, keepdims=True)
            weights = rng.standard_normal((3, 4))
            config = self.config

            def fn(w):
                return _weighted_sum(logits({'student.cls.1.weight': w}, config, 'student', 1, constant(e)), weights)
            self.assertLess(check_gradients(fn, [rng.standard_normal((4, 4))]), 1e-4)

    def test_student_projection_gradient(self):
        params = self.params
        config = self.config
        for seed in range(5):
            rng = np.random.default_rng(seed)
            x = rng.standard_normal((3, 6))
            weights = rng.standard_normal((3, 4))

            def fn(w):
                bound = params.constants()
                bound['student.proj.weight'] = w
                return _weighted_sum(student_embed(bound, config, backbone_forward(bound, config, x)), weights)
            self.assertLess(check_gradients(fn, [rng.standard_normal((8, 4))]), 1e-4)


class ParamsTestCase(SimpleTestCase):

    def test_init_is_deterministic(self):
        config = small_config()
        self.assertTrue(init_params(config, 1).equals(init_params(config, 1)))
        self.assertFalse(init_params(config, 1).equals(init_params(config, 2)))

    def test_closed_form_count(self):
        config = ModelConfig(input_dim=64, classes_per_domain=[20, 20, 20, 100])
        backbone = 64 * 256 + 256 + 256 * 256 + 256 + 256 * 256 + 256
        student = 256 * 64 + 160 * 64
        teachers = 4 * 256 * 256 + 160 * 256
        self.assertEqual(parameter_count(config), backbone + student + teachers)
        self.assertEqual(init_params(config, 0).count(), parameter_count(config))
        self.assertEqual(teacher_head_count(config), teachers)

    def test_teacher_heads_are_the_only_difference(self):
        udon = ModelConfig(input_dim=64, classes_per_domain=[20, 20, 20, 100])
        cls_only = udon.derive(teacher_domains=[])
        self.assertEqual(parameter_count(udon) - parameter_count(cls_only), teacher_head_count(udon))

    def test_init_scale(self):
        config = ModelConfig(input_dim=100, classes_per_domain=[2, 2], backbone_hidden_dims=[100],
                             backbone_out_dim=100, student_dim=64, teacher_dim=64)
        w = init_params(config, 0)['backbone.1.weight']
        self.assertEqual(w.size, 10000)
        target = np.sqrt(6.0 / 200.0) / np.sqrt(3.0)
        self.assertLess(abs(w.std() - target) / target, 0.1)
        np.testing.assert_array_equal(init_params(config, 0)['backbone.1.bias'], 0.0)


class CheckpointTestCase(SimpleTestCase):

    def test_round_trip_is_bit_exact(self):
        params = init_params(small_config(projector_kind='mlp_one_hidden', teacher_domains=[0]), 4)
        data = dumps_checkpoint(params)
        loaded = loads_checkpoint(data)
        self.assertTrue(loaded.equals(params))
        self.assertEqual(loaded.config, params.config)
        self.assertEqual(dumps_checkpoint(loaded), data)

    def test_bad_magic(self):
        data = bytearray(dumps_checkpoint(init_params(small_config(), 0)))
        data[0:8] = b'NOTACKPT'
        with self.assertRaises(FormatError) as ctx:
            loads_checkpoint(bytes(data))
        self.assertEqual(ctx.exception.offset, 0)

    def test_truncated(self):
        data = dumps_checkpoint(init_params(small_config(), 0))
        with self.assertRaises(FormatError):
            loads_checkpoint(data[:-3])

    def test_trailing_bytes(self):
        data = dumps_checkpoint(init_params(small_config(), 0))
        with self.assertRaises(FormatError):
            loads_checkpoint(data + b'\x00')


class TeacherIsolationTestCase(SimpleTestCase):

    def test_other_teacher_heads_get_no_gradient(self):
        config = small_config()
        params = init_params(config, 0)
        bound = params.bind()
        x = np.random.default_rng(0).standard_normal((4, 6))
        with Tape():
            e_b = backbone_forward(bound, config, x)
            e_t = teacher_embed(bound, config, 0, e_b)
            grads = backward(sum_all(logits(bound, config, 'teacher', 0, e_t)))
        self.assertIn(bound['teacher.0.proj.weight'], grads)
        self.assertNotIn(bound['teacher.1.proj.weight'], grads)
        self.assertNotIn(bound['teacher.1.cls.weight'], grads)
