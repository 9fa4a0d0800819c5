import sys
import os
PROJECT_HOME = os.path.abspath(os.path.join(os.path.dirname(__file__), '../../'))
sys.path.append(PROJECT_HOME)

import unittest
import numpy as np
from scipy import special

from specsynth.finetune import FinetuneConfig, compile_program, finetune
from specsynth.generator import Generator
from specsynth.marginals import marginal_workload, workload_tv, ALL_3WAY, WITH_LABEL
from specsynth.metrics import downstream_eval, fairness_metrics
from specsynth.parser import parse
from specsynth.pretrain import PretrainConfig, measure_targets, pretrain
from specsynth.privacy import PrivacyLedger, dp_pretrain
from specsynth.sampler import rejection_sample
from specsynth.schema import ColumnSpec, EncodedTable, Schema
from specsynth.validate import validate

# end to end training runs on small synthetic tables, each fits in seconds

NO_YES = ('no', 'yes')


def binary_schema(names):
    return Schema([ColumnSpec(n, 'categorical', categories=NO_YES) for n in names])


def independent_table(schema, probs, n, seed):
    rng = np.random.default_rng(seed)
    indices = (rng.random((n, len(probs))) < np.asarray(probs)).astype(np.int64)
    return EncodedTable.from_indices(schema, indices)


def program_of(*commands):
    return parse('SYNTHESIZE: Toy;\n{}\nEND;\n'.format('\n'.join('    ' + c for c in commands)))


def small_generator(schema, seed=0):
    return Generator.init(schema, seed, noise_dim=8, hidden_dims=(32,))


class TestMarginalFidelity(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.schema = binary_schema('abcde')
        cls.table = independent_table(cls.schema, [0.2, 0.35, 0.5, 0.65, 0.8], 10000, seed=1)
        cls.workload = marginal_workload(cls.schema, ALL_3WAY)
        cls.targets = measure_targets(cls.table, cls.workload)
        config = PretrainConfig(batch_size=2000, epochs=400, group_size=16, lr=0.01, seed=0)
        cls.generator, cls.history = pretrain(small_generator(cls.schema), cls.table, config, cls.workload)

    def test_pretraining_matches_marginals(self):
        self.assertEqual(len(self.history), 400)
        self.assertLess(self.history[-1][1], self.history[0][1])
        mean_tv, max_tv = workload_tv(self.generator.sample(100000, seed=5), self.targets)
        self.assertLess(mean_tv, 0.05)
        self.assertLess(max_tv, 0.1)

    def test_row_constraint(self):
        typed = validate(program_of('ENFORCE: ROW CONSTRAINT PARAM 20: a == yes;'), self.schema)
        regs = compile_program(typed)
        before = self.generator.sample(20000, seed=6)
        self.assertLess(regs[0].metric(before), 0.5)

        config = FinetuneConfig(epochs=300, batch_size=2000, lr=0.01, seed=0)
        generator, history = finetune(self.generator.copy(), regs, self.targets, self.table, config)
        self.assertEqual(len(history), 300)
        sample = generator.sample(20000, seed=7)
        self.assertGreaterEqual(regs[0].metric(sample), 0.99)

        # marginals without the constrained column stay close to the data
        untouched = [(spec, target) for spec, target in self.targets if 0 not in spec.feature_indices]
        self.assertEqual(len(untouched), 4)
        self.assertLess(workload_tv(sample, untouched)[0], 0.1)

        accepted = rejection_sample(generator, regs, 5000, seed=8, min_batch=5000)
        self.assertEqual(accepted.n_rows, 5000)
        self.assertEqual(regs[0].metric(accepted), 1.0)
        self.assertTrue(regs[0].satisfied(accepted))


class TestStatistical(unittest.TestCase):

    def setUp(self):
        self.schema = Schema([ColumnSpec('age', 'binned-numeric', bin_edges=(20.0, 30.0, 40.0, 50.0, 60.0)),
                              ColumnSpec('sex', 'categorical', categories=('Male', 'Female')),
                              ColumnSpec('x', 'categorical', categories=NO_YES),
                              ColumnSpec('y', 'categorical', categories=NO_YES)])
        rng = np.random.default_rng(2)
        n = 10000
        sex = rng.integers(2, size=n)
        age = np.where(sex == 0, rng.choice(4, size=n, p=[0.1, 0.2, 0.3, 0.4]),
                       rng.choice(4, size=n, p=[0.4, 0.3, 0.2, 0.1]))
        x = (rng.random(n) < np.where(sex == 0, 0.3, 0.6)).astype(np.int64)
        y = (rng.random(n) < 0.5).astype(np.int64)
        self.table = EncodedTable.from_indices(self.schema, np.stack([age, sex, x, y], axis=1))
        self.workload = marginal_workload(self.schema, ALL_3WAY)
        self.targets = measure_targets(self.table, self.workload)

    def test_residual_below_tolerance(self):
        config = PretrainConfig(batch_size=2000, epochs=300, group_size=16, lr=0.01, seed=0)
        generator, _ = pretrain(small_generator(self.schema), self.table, config, self.workload)
        typed = validate(program_of('ENFORCE: STATISTICAL: E[age] >= 45;',
                                    'ENFORCE: STATISTICAL: E[age|sex==Male] == E[age|sex==Female];'), self.schema)
        regs = compile_program(typed)
        self.assertGreater(regs[0].metric(self.table), 0.05)
        self.assertGreater(regs[1].metric(self.table), 0.05)

        config = FinetuneConfig(epochs=300, batch_size=2000, lr=0.01, seed=0)
        generator, history = finetune(generator, regs, self.targets, self.table, config)
        sample = generator.sample(20000, seed=3)
        for reg in regs:
            self.assertLess(reg.metric(sample), 0.05, reg.name)
            self.assertTrue(reg.satisfied(sample), reg.name)
        self.assertLess(history[-1]['loss_' + regs[1].name], history[0]['loss_' + regs[1].name])


class TestPrivatePretraining(unittest.TestCase):

    def test_noisy_marginals_stay_close(self):
        schema = binary_schema('abcd')
        table = independent_table(schema, [0.2, 0.4, 0.6, 0.8], 10000, seed=4)
        ledger = PrivacyLedger(5.0, 1e-9)
        config = PretrainConfig(batch_size=1000, epochs=50, group_size=16, lr=0.01, seed=0)
        generator, ledger, measurements = dp_pretrain(small_generator(schema), table, ledger, config,
                                                      max_rounds=12, spend_remainder=False)
        self.assertTrue(0 < len(ledger.rounds) <= 12)
        self.assertEqual(len(measurements), len(ledger.rounds))
        self.assertLessEqual(ledger.audit(), ledger.total_rho * (1.0 + 1e-9))
        self.assertLessEqual(ledger.spent, ledger.total_rho)

        exact = measure_targets(table, marginal_workload(schema, ALL_3WAY))
        mean_tv, _ = workload_tv(generator.sample(50000, seed=5), exact)
        self.assertLess(mean_tv, 0.15)


class TestDownstream(unittest.TestCase):
    """label y depends on a four level feature g and, with a fixed shift, on the protected s"""

    LOGITS = np.array([-2.4, -0.8, 0.8, 2.4])
    SHIFT = 1.0
    FAIRNESS = ('MINIMIZE: FAIRNESS PARAM 20: DEMOGRAPHIC_PARITY(protected=s, target=y, exclude_protected=false, '
                'lr=1, n_epochs=30, batch_size=4096);')

    @classmethod
    def setUpClass(cls):
        cls.schema = Schema([ColumnSpec('g', 'categorical', categories=('g1', 'g2', 'g3', 'g4')),
                             ColumnSpec('s', 'categorical', categories=NO_YES, roles=frozenset(['protected'])),
                             ColumnSpec('y', 'categorical', categories=NO_YES, roles=frozenset(['label']))])
        rng = np.random.default_rng(3)
        n = 20000
        g = rng.integers(4, size=n)
        s = rng.integers(2, size=n)
        y = (rng.random(n) < special.expit(cls.LOGITS[g] + cls.SHIFT * (2 * s - 1))).astype(np.int64)
        table = EncodedTable.from_indices(cls.schema, np.stack([g, s, y], axis=1))
        cls.train, cls.test = table.split(5, 0, seed=0)
        cls.workload = marginal_workload(cls.schema, WITH_LABEL)
        cls.targets = measure_targets(cls.train, cls.workload)
        config = PretrainConfig(batch_size=4096, epochs=600, group_size=16, lr=0.01, seed=0)
        cls.generator, _ = pretrain(small_generator(cls.schema), cls.train, config, cls.workload)
        cls.real_accuracy, _, predictions = downstream_eval(cls.train, cls.test, 'y')
        cls.real_gap = fairness_metrics(predictions, cls.test, 's', 'y')['dp']

    def evaluate(self, synthetic):
        accuracy, _, predictions = downstream_eval(synthetic, self.test, 'y')
        return accuracy, fairness_metrics(predictions, self.test, 's', 'y')['dp']

    def test_real_data_is_unfair(self):
        self.assertGreater(self.real_gap, 0.3)
        self.assertGreater(self.real_accuracy, 0.7)

    def test_demographic_parity_gap_halves(self):
        regs = compile_program(validate(program_of(self.FAIRNESS), self.schema))
        config = FinetuneConfig(epochs=150, batch_size=4096, lr=0.01, seed=0)
        generator, history = finetune(self.generator.copy(), regs, self.targets, self.train, config)
        self.assertEqual(len(history), 150)
        accuracy, gap = self.evaluate(generator.sample(20000, seed=9))
        self.assertLessEqual(gap, 0.5 * self.real_gap)
        self.assertGreaterEqual(accuracy, self.real_accuracy - 0.05)

    def test_stacked_specifications(self):
        typed = validate(program_of(self.FAIRNESS, 'ENFORCE: STATISTICAL PARAM 5: E[y] >= 0.6;',
                                    'ENFORCE: IMPLICATION: g == g3 IMPLIES y == yes;'), self.schema)
        self.assertEqual(typed.names, ['fairness_1', 'statistical_2', 'implication_3'])
        fairness, statistical, implication = regs = compile_program(typed)
        config = FinetuneConfig(epochs=150, batch_size=4096, lr=0.01, seed=0)
        generator, _ = finetune(self.generator.copy(), regs, self.targets, self.train, config)
        sample = rejection_sample(generator, regs, 20000, seed=10)
        self.assertEqual(sample.n_rows, 20000)
        self.assertTrue(implication.satisfied(sample))
        self.assertLessEqual(statistical.metric(sample), 0.05)
        _, gap = self.evaluate(sample)
        self.assertLessEqual(gap, 0.5 * self.real_gap)


if __name__ == '__main__':
    unittest.main(verbosity=2)
