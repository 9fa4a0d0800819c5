import sys
import os
PROJECT_HOME = os.path.abspath(os.path.join(os.path.dirname(__file__), '../../'))
sys.path.append(PROJECT_HOME)

import unittest
import numpy as np

from specsynth.exceptions import ShapeMismatch, DomainError, NonScalarRoot
from specsynth.tape import Tape, ArrayOps, numeric_gradient, value_of


def tape_value(fn, x):
    tape = Tape()
    return float(fn(tape, tape.variable(x)).value)


class TestTape(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(11)

    def assertGradient(self, fn, x, tol=1e-4):
        """tape gradient of a scalar function against central differences"""
        tape = Tape()
        node = tape.variable(x)
        grads = tape.backward(fn(tape, node))
        expected = numeric_gradient(lambda a: tape_value(fn, a), x)
        scale = max(1.0, float(np.abs(expected).max()))
        self.assertTrue(np.allclose(grads.wrt(node), expected, atol=tol * scale, rtol=tol),
                        '{} != {}'.format(grads.wrt(node), expected))

    def test_elementwise_primitives(self):
        c = self.rng.normal(size=(3, 4))
        for _ in range(5):
            x = self.rng.uniform(0.5, 2.0, size=(3, 4))
            self.assertGradient(lambda t, v: t.sum(t.mul(t.add(v, c), t.sub(v, 1.0))), x)
            self.assertGradient(lambda t, v: t.sum(t.div(c, v)), x)
            self.assertGradient(lambda t, v: t.sum(t.log(v)), x)
            self.assertGradient(lambda t, v: t.sum(t.sqrt(v)), x)
            self.assertGradient(lambda t, v: t.sum(t.exp(t.mul(v, 0.3))), x)
            self.assertGradient(lambda t, v: t.sum(t.mul(t.sigmoid(t.sub(v, c)), c)), x)
            self.assertGradient(lambda t, v: t.sum(t.softplus(t.sub(c, v))), x)
            self.assertGradient(lambda t, v: t.sum(t.log_sigmoid(t.sub(c, v))), x)

    def test_kinked_primitives_away_from_kinks(self):
        for _ in range(5):
            x = self.rng.uniform(0.2, 1.0, size=6) * self.rng.choice([-1.0, 1.0], size=6)
            other = x + self.rng.choice([-0.5, 0.5], size=6)
            self.assertGradient(lambda t, v: t.sum(t.mul(t.abs(v), 2.0)), x)
            self.assertGradient(lambda t, v: t.sum(t.mul(t.relu(v), np.arange(6.0))), x)
            self.assertGradient(lambda t, v: t.sum(t.maximum(v, other)), x)

    def test_broadcast_and_reductions(self):
        row = self.rng.normal(size=4)
        for _ in range(5):
            x = self.rng.normal(size=(3, 4))
            self.assertGradient(lambda t, v: t.sum(t.mul(t.add(v, row), t.mean(v, axis=0))), x)
            self.assertGradient(lambda t, v: t.sum(t.mul(t.sum(v, axis=1), np.arange(3.0))), x)
            self.assertGradient(lambda t, v: t.mean(t.mul(v, v)), x)

    def test_matmul_shapes(self):
        w = self.rng.normal(size=(4, 2))
        vec = self.rng.normal(size=4)
        for _ in range(5):
            x = self.rng.normal(size=(3, 4))
            self.assertGradient(lambda t, v: t.sum(t.mul(t.matmul(v, w), t.matmul(v, w))), x)
            self.assertGradient(lambda t, v: t.sum(t.sigmoid(t.matmul(v, vec))), x)
            self.assertGradient(lambda t, v: t.sum(t.matmul(t.transpose(v), t.matmul(v, vec))), x)
            y = self.rng.normal(size=4)
            self.assertGradient(lambda t, v: t.matmul(v, vec), y)
            self.assertGradient(lambda t, v: t.sum(t.matmul(v, w)), y)

    def test_slicing_and_concat(self):
        for _ in range(5):
            x = self.rng.normal(size=(4, 5))
            self.assertGradient(lambda t, v: t.sum(t.mul(t.columns(v, [0, 2, 2]), 3.0)), x)
            self.assertGradient(lambda t, v: t.sum(t.mul(t.rows(v, slice(1, 3)), t.rows(v, slice(2, 4)))), x)
            self.assertGradient(lambda t, v: t.sum(t.mul(t.concat([v, t.mul(v, v)], axis=1),
                                                         np.arange(10.0))), x)

    def test_block_softmax(self):
        offsets = np.array([0, 2, 5])
        weights = self.rng.normal(size=(3, 5))
        for _ in range(5):
            x = self.rng.normal(size=(3, 5))
            self.assertGradient(lambda t, v: t.sum(t.mul(t.block_softmax(v, offsets), weights)), x)
        probs = Tape().block_softmax(self.rng.normal(size=(3, 5)), offsets).value
        self.assertTrue(np.allclose(probs[:, :2].sum(axis=1), 1.0))
        self.assertTrue(np.allclose(probs[:, 2:].sum(axis=1), 1.0))

    def test_kron(self):
        other = self.rng.uniform(size=(4, 3))
        w = self.rng.uniform(size=4)
        target = self.rng.normal(size=6)
        for _ in range(5):
            x = self.rng.uniform(size=(4, 2))
            self.assertGradient(lambda t, v: t.sum(t.mul(t.kron_sum([v, other]), target)), x)
            self.assertGradient(lambda t, v: t.sum(t.mul(t.kron_sum([other, v], w), target)), x)
            self.assertGradient(lambda t, v: t.sum(t.mul(t.kron_rows([v, other]), target)), x)
            self.assertGradient(lambda t, v: t.sum(t.mul(t.kron_sum([x, other], v), target)), w)
        rows = Tape().kron_rows([x, other]).value
        self.assertTrue(np.allclose(rows.sum(axis=0), ArrayOps().kron_sum([x, other])))

    def test_kron_single_block(self):
        w = self.rng.uniform(size=4)
        target = self.rng.normal(size=3)
        for _ in range(5):
            x = self.rng.uniform(size=(4, 3))
            self.assertGradient(lambda t, v: t.sum(t.mul(t.kron_sum([v]), target)), x)
            self.assertGradient(lambda t, v: t.sum(t.mul(t.kron_sum([v], w), target)), x)
            self.assertGradient(lambda t, v: t.sum(t.mul(t.kron_sum([x], v), target)), w)
        tape = Tape()
        x = tape.variable(self.rng.uniform(size=(4, 3)))
        grads = tape.backward(tape.sum(tape.mul(tape.kron_sum([x]), target)))
        self.assertTrue(np.allclose(grads.wrt(x), np.tile(target, (4, 1))))

    def test_straight_through(self):
        tape = Tape()
        soft = tape.variable(self.rng.normal(size=(2, 3)))
        hard = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
        out = tape.straight_through(soft, hard)
        self.assertTrue(np.array_equal(out.value, hard))
        weights = self.rng.normal(size=(2, 3))
        grads = tape.backward(tape.sum(tape.mul(out, weights)))
        self.assertTrue(np.allclose(grads.wrt(soft), weights))
        with self.assertRaises(ShapeMismatch):
            tape.straight_through(soft, np.zeros((3, 3)))

    def test_operators_and_unused_nodes(self):
        tape = Tape()
        x = tape.variable(np.array([1.0, 2.0]))
        unused = tape.variable(np.array([5.0]))
        y = tape.sum((x * 3.0 - 1.0) / 2.0 + (-x))
        grads = tape.backward(y)
        self.assertTrue(np.allclose(grads.wrt(x), [0.5, 0.5]))
        self.assertTrue(np.array_equal(grads.wrt(unused), [0.0]))

    def test_errors(self):
        tape = Tape()
        x = tape.variable(np.array([1.0, 0.0]))
        with self.assertRaises(NonScalarRoot):
            tape.backward(x)
        with self.assertRaises(DomainError):
            tape.log(x)
        with self.assertRaises(DomainError):
            tape.div(1.0, x)
        with self.assertRaises(ShapeMismatch):
            tape.matmul(np.zeros((2, 3)), np.zeros((2, 3)))
        with self.assertRaises(ShapeMismatch):
            tape.add(np.zeros(2), np.zeros(3))
        with self.assertRaises(ShapeMismatch):
            tape.lift(Tape().variable(1.0))
        with self.assertRaises(DomainError):
            ArrayOps().div(1.0, np.array([0.0]))

    def test_array_ops_match_tape(self):
        ops = ArrayOps()
        tape = Tape()
        x = self.rng.uniform(0.5, 1.5, size=(3, 4))
        w = self.rng.normal(size=4)

        def fn(o, v):
            return o.sum(o.mul(o.sum(o.log(v), axis=1), o.sigmoid(o.matmul(v, w))))
        self.assertAlmostEqual(float(fn(ops, x)), float(value_of(fn(tape, tape.variable(x)))))


if __name__ == '__main__':
    unittest.main(verbosity=2)
