import sys
import os
PROJECT_HOME = os.path.abspath(os.path.join(os.path.dirname(__file__), '../../'))
sys.path.append(PROJECT_HOME)

import unittest
import numpy as np

from specsynth.exceptions import AcceptanceTooLow
from specsynth.finetune import compile_program
from specsynth.generator import Generator
from specsynth.parser import parse
from specsynth.sampler import rejection_sample, accepted_rows
from specsynth.schema import load_schema
from specsynth.validate import validate

DATA = os.path.join(PROJECT_HOME, 'tests/data/')


class TestSampler(unittest.TestCase):

    def setUp(self):
        self.schema = load_schema(os.path.join(DATA, 'toy_schema.json'))
        self.generator = Generator.init(self.schema, 0, noise_dim=4, hidden_dims=(8,), temperature=1.0)

    def regularizers(self, *commands):
        source = 'SYNTHESIZE: Toy;\n' + ''.join('    {}\n'.format(c) for c in commands) + 'END;\n'
        return compile_program(validate(parse(source), self.schema), default=1.0)

    def test_plain_sample_without_rejectable_specs(self):
        regs = self.regularizers('ENFORCE: STATISTICAL: E[age] >= 40;')
        out = rejection_sample(self.generator, regs, 25, seed=4)
        self.assertTrue(np.array_equal(out.data, self.generator.sample(25, 4).data))

    def test_tautology_accepts_everything(self):
        regs = self.regularizers('ENFORCE: ROW CONSTRAINT: sex in {Male, Female};')
        out = rejection_sample(self.generator, regs, 30, seed=2, min_batch=0)
        self.assertTrue(np.array_equal(out.data, self.generator.sample(30, 2).data))

    def test_rows_pass_every_verifier(self):
        regs = self.regularizers('ENFORCE: ROW CONSTRAINT: sex == Female;',
                                 'ENFORCE: IMPLICATION: workclass == Gov IMPLIES salary in {"<=50K"};',
                                 'ENFORCE: STATISTICAL: E[age] >= 40;')
        out = rejection_sample(self.generator, regs, 50, seed=0, min_batch=200)
        self.assertEqual(out.n_rows, 50)
        self.assertTrue(out.is_valid())
        self.assertTrue(accepted_rows(out, [r for r in regs if r.rejectable]).all())
        self.assertTrue((out.indices()[:, 1] == 1).all())

    def test_unsatisfiable_constraint(self):
        regs = self.regularizers('ENFORCE: ROW CONSTRAINT: sex == Male AND sex == Female;')
        with self.assertRaises(AcceptanceTooLow):
            rejection_sample(self.generator, regs, 10, max_rounds=10, min_batch=20)
        out = rejection_sample(self.generator, regs, 10, max_rounds=2, min_batch=20, min_acceptance=0.0)
        self.assertEqual(out.n_rows, 0)
        self.assertEqual(out.data.shape, (0, self.schema.width))


if __name__ == '__main__':
    unittest.main(verbosity=2)
