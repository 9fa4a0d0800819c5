import sys
import os
PROJECT_HOME = os.path.abspath(os.path.join(os.path.dirname(__file__), '../../'))
sys.path.append(PROJECT_HOME)

import shutil
import tempfile
import unittest
import numpy as np

from specsynth.exceptions import CorruptCheckpoint, SchemaHashMismatch, ShapeMismatch
from specsynth.generator import Generator, hard_one_hot
from specsynth.optim import Adam, cosine_lr
from specsynth.schema import EncodedTable, load_schema
from specsynth.tape import Tape

DATA = os.path.join(PROJECT_HOME, 'tests/data/')


class TestGenerator(unittest.TestCase):

    def setUp(self):
        self.schema = load_schema(os.path.join(DATA, 'toy_schema.json'))
        self.generator = Generator.init(self.schema, seed=1, noise_dim=4, hidden_dims=(8, 8), temperature=1.0)
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def test_layers(self):
        g = self.generator
        self.assertEqual(g.dims, (4, 8, 8, 9))
        self.assertEqual(g.params['W0'].shape, (4, 8))
        self.assertEqual(g.params['b2'].shape, (9,))
        with self.assertRaises(ShapeMismatch):
            Generator(self.schema, dict(g.params, W1=np.zeros((8, 7))), 4, (8, 8))
        with self.assertRaises(ValueError):
            Generator(self.schema, g.params, 4, (8, 8), temperature=0.0)

    def test_samples_are_one_hot_and_seeded(self):
        a = self.generator.sample(50, seed=5)
        b = self.generator.sample(50, seed=5)
        c = self.generator.sample(50, seed=6)
        self.assertEqual(a.n_rows, 50)
        self.assertTrue(a.is_valid())
        self.assertTrue(np.array_equal(a.data, b.data))
        self.assertFalse(np.array_equal(a.data, c.data))
        self.assertEqual(self.generator.sample(0, seed=5).n_rows, 0)

    def test_forward_is_hard_with_gradients(self):
        tape = Tape()
        rng = np.random.default_rng(0)
        batch, nodes = self.generator.forward(tape, self.generator.noise(32, rng), rng)
        self.assertTrue(EncodedTable(batch.value, self.schema).is_valid())
        weights = rng.normal(size=batch.shape)
        grads = tape.backward(tape.sum(tape.mul(batch, weights)))
        self.assertEqual(set(nodes), set(self.generator.params))
        self.assertGreater(np.abs(grads.wrt(nodes['W0'])).sum(), 0.0)
        self.assertGreater(np.abs(grads.wrt(nodes['b2'])).sum(), 0.0)

    def test_hard_one_hot(self):
        scores = np.array([[0.1, 0.5, 0.2, 3.0, -1.0]])
        self.assertEqual(hard_one_hot(scores, [0, 3, 5]).tolist(), [[0.0, 1.0, 0.0, 1.0, 0.0]])

    def test_copy_is_independent(self):
        other = self.generator.copy()
        other.params['W0'] += 1.0
        self.assertFalse(np.array_equal(other.params['W0'], self.generator.params['W0']))

    def test_checkpoint(self):
        path = os.path.join(self.tmp, 'generator.ckpt')
        self.generator.save(path)
        loaded = Generator.load(path, self.schema)
        for name, value in self.generator.params.items():
            self.assertTrue(np.array_equal(loaded.params[name], value))
        self.assertEqual(loaded.hidden_dims, (8, 8))
        self.assertTrue(np.array_equal(loaded.sample(20, 3).data, self.generator.sample(20, 3).data))
        self.assertEqual(loaded.to_bytes(), self.generator.to_bytes())

    def test_checkpoint_for_another_schema(self):
        adult = load_schema(os.path.join(DATA, 'adult_schema.json'))
        with self.assertRaises(SchemaHashMismatch):
            Generator.from_bytes(self.generator.to_bytes(), adult)

    def test_corrupt_checkpoints(self):
        blob = bytearray(self.generator.to_bytes())
        blob[200] ^= 0xFF
        with self.assertRaises(CorruptCheckpoint):
            Generator.from_bytes(bytes(blob), self.schema)
        with self.assertRaises(CorruptCheckpoint):
            Generator.from_bytes(self.generator.to_bytes()[:50], self.schema)
        with self.assertRaises(CorruptCheckpoint):
            Generator.from_bytes(b'not a checkpoint at all' * 10, self.schema)


class TestOptim(unittest.TestCase):

    def test_adam_moves_against_the_gradient(self):
        params = {'w': np.array([1.0, -1.0])}
        opt = Adam(lr=0.1)
        opt.step(params, {'w': np.array([2.0, -3.0])})
        # first bias corrected step has size lr in every coordinate
        self.assertTrue(np.allclose(params['w'], [0.9, -0.9]))
        opt.step(params, {})
        self.assertTrue(np.allclose(params['w'], [0.9, -0.9]))
        with self.assertRaises(ShapeMismatch):
            opt.step(params, {'w': np.zeros(3)})

    def test_adam_minimizes_a_quadratic(self):
        params = {'w': np.array([3.0, -2.0])}
        opt = Adam(lr=0.05)
        for _ in range(500):
            opt.step(params, {'w': 2.0 * params['w']})
        self.assertTrue(np.all(np.abs(params['w']) < 0.1))

    def test_cosine_lr(self):
        self.assertEqual(cosine_lr(0.1, 0, 100), 0.1)
        self.assertAlmostEqual(cosine_lr(0.1, 50, 100), 0.05)
        self.assertAlmostEqual(cosine_lr(0.1, 100, 100), 0.0)
        self.assertEqual(cosine_lr(0.1, 5, 0), 0.1)


if __name__ == '__main__':
    unittest.main(verbosity=2)
