# -*- coding: utf-8 -*-

import math

import numpy as np
from django.test import SimpleTestCase

from common.exceptions import ContractError, DimensionError
from . import (
    Tape, Tensor, add, backward, constant, frobenius_sq_diff, gather_rows, gelu, kl_rows,
    layernorm_rows, log_softmax_rows, matmul, mean_all, multiply, parameter, relu,
    row_l2_normalize, scalar_scale, stop_gradient, subtract, sum_all, transpose,
)
from .gradcheck import check_gradients

GRADCHECK_SEEDS = range(20)
GRADCHECK_TOLERANCE = 1e-4


def _weighted_sum(y, weights):
    """Scalar with a generic gradient: sum(y * weights)."""
    return sum_all(multiply(y, constant(weights)))


def _away_from_zero(rng, shape, margin=0.1):
    x = rng.standard_normal(shape)
    return np.sign(x) * (margin + np.abs(x))


class GradientCheckTestCase(SimpleTestCase):

    def assertGradients(self, make_case):
        for seed in GRADCHECK_SEEDS:
            rng = np.random.default_rng(seed)
            fn, arrays = make_case(rng)
            error = check_gradients(fn, arrays)
            self.assertLess(error, GRADCHECK_TOLERANCE, "seed {}".format(seed))

    def test_matmul(self):
        def case(rng):
            w = rng.standard_normal((5, 3))
            return (lambda a, b: _weighted_sum(matmul(a, b), w)), [rng.standard_normal((5, 7)), rng.standard_normal((7, 3))]
        self.assertGradients(case)

    def test_add_and_row_broadcast(self):
        def case(rng):
            w = rng.standard_normal((4, 3))
            return (lambda a, b, c: _weighted_sum(add(add(a, b), c), w)), \
                [rng.standard_normal((4, 3)), rng.standard_normal((4, 3)), rng.standard_normal((1, 3))]
        self.assertGradients(case)

    def test_subtract(self):
        def case(rng):
            w = rng.standard_normal((3, 4))
            return (lambda a, b: _weighted_sum(subtract(a, b), w)), [rng.standard_normal((3, 4)), rng.standard_normal((3, 4))]
        self.assertGradients(case)

    def test_multiply_and_row_broadcast(self):
        def case(rng):
            w = rng.standard_normal((3, 4))
            return (lambda a, b, c: _weighted_sum(multiply(multiply(a, b), c), w)), \
                [rng.standard_normal((3, 4)), rng.standard_normal((3, 4)), rng.standard_normal((1, 4))]
        self.assertGradients(case)

    def test_scalar_scale_and_transpose(self):
        def case(rng):
            w = rng.standard_normal((4, 3))
            return (lambda a: _weighted_sum(transpose(scalar_scale(a, -2.5)), w)), [rng.standard_normal((3, 4))]
        self.assertGradients(case)

    def test_relu(self):
        def case(rng):
            w = rng.standard_normal((4, 6))
            return (lambda a: _weighted_sum(relu(a), w)), [_away_from_zero(rng, (4, 6))]
        self.assertGradients(case)

    def test_gelu(self):
        def case(rng):
            w = rng.standard_normal((4, 6))
            return (lambda a: _weighted_sum(gelu(a), w)), [2.0 * rng.standard_normal((4, 6))]
        self.assertGradients(case)

    def test_row_l2_normalize(self):
        def case(rng):
            w = rng.standard_normal((4, 8))
            return (lambda a: _weighted_sum(row_l2_normalize(a), w)), [rng.standard_normal((4, 8))]
        self.assertGradients(case)

    def test_log_softmax_rows(self):
        def case(rng):
            w = rng.standard_normal((3, 5))
            return (lambda a: _weighted_sum(log_softmax_rows(a), w)), [3.0 * rng.standard_normal((3, 5))]
        self.assertGradients(case)

    def test_layernorm_rows(self):
        def case(rng):
            w = rng.standard_normal((3, 6))
            return (lambda a: _weighted_sum(layernorm_rows(a), w)), [rng.standard_normal((3, 6))]
        self.assertGradients(case)

    def test_sum_and_mean(self):
        def case(rng):
            return (lambda a, b: add(sum_all(multiply(a, a)), mean_all(multiply(b, a)))), \
                [rng.standard_normal((3, 4)), rng.standard_normal((3, 4))]
        self.assertGradients(case)

    def test_frobenius_sq_diff(self):
        def case(rng):
            return frobenius_sq_diff, [rng.standard_normal((4, 4)), rng.standard_normal((4, 4))]
        self.assertGradients(case)

    def test_gather_rows(self):
        def case(rng):
            w = rng.standard_normal((5, 3))
            return (lambda a: _weighted_sum(gather_rows(a, [0, 2, 2, 1, 0]), w)), [rng.standard_normal((4, 3))]
        self.assertGradients(case)

    def test_kl_rows(self):
        def case(rng):
            w = rng.standard_normal((3, 1))
            return (lambda p, q: _weighted_sum(kl_rows(log_softmax_rows(p), log_softmax_rows(q)), w)), \
                [rng.standard_normal((3, 5)), rng.standard_normal((3, 5))]
        self.assertGradients(case)

    def test_composite_graph(self):
        def case(rng):
            def fn(x, w1, w2):
                e = row_l2_normalize(gelu(matmul(x, w1)))
                g = matmul(e, transpose(e))
                return add(frobenius_sq_diff(g, constant(np.eye(3))), mean_all(log_softmax_rows(matmul(e, w2))))
            return fn, [rng.standard_normal((3, 4)), rng.standard_normal((4, 4)), rng.standard_normal((4, 2))]
        self.assertGradients(case)


class OpValueTestCase(SimpleTestCase):

    def test_matmul_values(self):
        m = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(matmul(constant(np.eye(2)), constant(m)).values, m)
        np.testing.assert_array_equal(matmul(constant(m), constant([[0.0], [1.0]])).values, [[2.0], [4.0]])

    def test_matmul_shape_mismatch(self):
        with self.assertRaises(DimensionError) as ctx:
            matmul(constant(np.zeros((2, 3))), constant(np.zeros((2, 3))))
        self.assertEqual(ctx.exception.shapes, ((2, 3), (2, 3)))

    def test_broadcast_only_for_row_vectors(self):
        with self.assertRaises(DimensionError):
            add(constant(np.zeros((3, 2))), constant(np.zeros((3, 1))))
        with self.assertRaises(DimensionError):
            subtract(constant(np.zeros((3, 2))), constant(np.zeros((1, 2))))

    def test_row_l2_normalize_values(self):
        np.testing.assert_allclose(row_l2_normalize(constant([[3.0, 4.0]])).values, [[0.6, 0.8]], atol=1e-15)
        unit = np.array([[0.0, 1.0, 0.0]])
        np.testing.assert_array_equal(row_l2_normalize(constant(unit)).values, unit)

    def test_row_l2_normalize_degenerate_row(self):
        x = parameter(np.array([[0.0, 0.0], [3.0, 4.0]]))
        with Tape():
            y = row_l2_normalize(x)
            grads = backward(sum_all(y))
        self.assertTrue(np.all(np.isfinite(y.values)))
        np.testing.assert_array_equal(y.values[0], [0.0, 0.0])
        np.testing.assert_array_equal(grads[x][0], [0.0, 0.0])

    def test_log_softmax_values(self):
        np.testing.assert_allclose(log_softmax_rows(constant([[0.0, 0.0]])).values, [[-math.log(2), -math.log(2)]],
                                   rtol=0, atol=1e-15)
        out = log_softmax_rows(constant([[1000.0, 0.0]])).values
        self.assertTrue(np.all(np.isfinite(out)))
        self.assertAlmostEqual(out[0, 0], 0.0, places=12)
        self.assertAlmostEqual(out[0, 1], -1000.0, places=9)

    def test_log_softmax_against_scalar_oracle(self):
        rng = np.random.default_rng(7)
        x = 4.0 * rng.standard_normal((5, 6))
        out = log_softmax_rows(constant(x)).values
        for i in range(x.shape[0]):
            row = [float(v) for v in x[i]]
            top = max(row)
            log_z = top + math.log(math.fsum(math.exp(v - top) for v in row))
            for j, v in enumerate(row):
                self.assertAlmostEqual(out[i, j], v - log_z, delta=1e-12)
            self.assertAlmostEqual(math.fsum(math.exp(v) for v in out[i]), 1.0, delta=1e-12)

    def test_layernorm_rows_statistics(self):
        y = layernorm_rows(constant(np.random.default_rng(1).standard_normal((4, 16)))).values
        np.testing.assert_allclose(y.mean(axis=1), 0.0, atol=1e-12)
        np.testing.assert_allclose(y.var(axis=1), 1.0, atol=1e-3)

    def test_gather_rows_out_of_range(self):
        with self.assertRaises(ContractError):
            gather_rows(constant(np.zeros((2, 2))), [0, 2])

    def test_tensor_is_two_dimensional(self):
        self.assertEqual(Tensor([1.0, 2.0]).shape, (1, 2))
        self.assertEqual(Tensor(3.0).shape, (1, 1))
        with self.assertRaises(DimensionError):
            Tensor(np.zeros((2, 2, 2)))

    def test_no_tape_records_nothing(self):
        x = parameter(np.ones((2, 2)))
        y = matmul(x, x)
        self.assertIsNone(y.node)
        self.assertFalse(y.requires_grad)


class BackwardTestCase(SimpleTestCase):

    def test_sum_gives_ones(self):
        x = parameter(np.random.default_rng(0).standard_normal((3, 4)))
        with Tape():
            grads = backward(sum_all(x))
        np.testing.assert_array_equal(grads[x], np.ones((3, 4)))
        np.testing.assert_array_equal(x.grad, np.ones((3, 4)))

    def test_frobenius_of_identical_inputs_has_zero_gradient(self):
        a = parameter(np.random.default_rng(1).standard_normal((3, 3)))
        with Tape():
            grads = backward(frobenius_sq_diff(a, a))
        np.testing.assert_array_equal(grads[a], np.zeros((3, 3)))

    def test_non_scalar_loss_rejected(self):
        x = parameter(np.ones((2, 2)))
        with Tape():
            y = multiply(x, x)
            with self.assertRaises(ContractError):
                backward(y)

    def test_loss_outside_tape_rejected(self):
        x = parameter(np.ones((2, 2)))
        with self.assertRaises(ContractError):
            backward(sum_all(x))

    def test_stop_gradient(self):
        rng = np.random.default_rng(3)
        x = parameter(rng.standard_normal((2, 3)))
        y = parameter(rng.standard_normal((2, 3)))
        with Tape():
            detached = stop_gradient(x)
            grads = backward(sum_all(multiply(detached, y)))
        self.assertIsNone(detached.node)
        self.assertNotIn(x, grads)
        np.testing.assert_array_equal(grads[y], x.values)

    def test_stop_gradient_blocks_ancestors(self):
        rng = np.random.default_rng(4)
        w = parameter(rng.standard_normal((3, 3)))
        v = parameter(rng.standard_normal((3, 3)))
        with Tape():
            hidden = matmul(w, w)
            loss = add(sum_all(multiply(stop_gradient(hidden), v)), sum_all(v))
            grads = backward(loss)
        self.assertNotIn(w, grads)
        np.testing.assert_array_equal(grads[v], hidden.values + 1.0)

    def test_accumulation_matches_doubled_graph(self):
        rng = np.random.default_rng(5)
        values = rng.standard_normal((3, 3))
        weights = rng.standard_normal((3, 3))
        x1 = parameter(values)
        with Tape():
            g_twice = backward(add(_weighted_sum(gelu(x1), weights), _weighted_sum(gelu(x1), weights)))[x1]
        x2 = parameter(values)
        with Tape():
            g_doubled = backward(scalar_scale(_weighted_sum(gelu(x2), weights), 2.0))[x2]
        np.testing.assert_allclose(g_twice, g_doubled, rtol=1e-14, atol=1e-15)

    def test_replay_is_deterministic(self):
        def run():
            rng = np.random.default_rng(11)
            a = parameter(rng.standard_normal((4, 5)))
            b = parameter(rng.standard_normal((5, 2)))
            with Tape():
                loss = mean_all(log_softmax_rows(matmul(row_l2_normalize(a), b)))
                grads = backward(loss)
            return loss.item(), grads[a], grads[b]

        first, second = run(), run()
        self.assertEqual(first[0], second[0])
        np.testing.assert_array_equal(first[1], second[1])
        np.testing.assert_array_equal(first[2], second[2])

    def test_tape_records_in_order(self):
        x = parameter(np.ones((2, 2)))
        with Tape() as tape:
            y = relu(x)
            sum_all(y)
        self.assertEqual([n.op for n in tape.nodes], ['relu', 'sum_all'])
