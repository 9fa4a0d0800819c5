"""evaluation of synthetic tables: workload fidelity, specification checks, downstream accuracy and fairness

downstream numbers come from an internal L2-regularized logistic evaluator;
the gradient boosted protocol runs outside this package on the csvs written
by export_for_external_eval
"""
import os
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy import special
from sklearn.metrics import accuracy_score, balanced_accuracy_score

from specsynth.app import get_config, get_logger
from specsynth.exceptions import EmptyGroup, SingleClassTrain, SchemaHashMismatch, EmptyTable
from specsynth.marginals import workload_tv
from specsynth.reader import write_csv
from specsynth.utils import atomic_path, atomic_write, canonical_json

EVALUATOR_NOTE = 'downstream metrics use an internal logistic evaluator, not gradient boosted trees'


def _column(table, column):
    return column if isinstance(column, int) else table.schema.index(column)


def _rate(predictions, mask, what, strict):
    if not mask.any():
        if strict:
            raise EmptyGroup('no rows with {}'.format(what))
        return None
    return float(predictions[mask].mean())


def _gap(a, b):
    if a is None or b is None:
        return None
    return abs(a - b)


def fairness_metrics(predictions, table, protected, target, strict=False):
    """demographic parity, equalized odds and equality of opportunity distances

    a metric over an empty (group, label) cell is None, or EmptyGroup when strict
    """
    predictions = np.asarray(predictions, dtype=np.float64)
    indices = table.indices()
    s = indices[:, _column(table, protected)] == 1
    y = indices[:, _column(table, target)] == 1
    dp = _gap(_rate(predictions, ~s, 'protected=0', strict), _rate(predictions, s, 'protected=1', strict))
    gaps = []
    for label, cell in ((0, ~y), (1, y)):
        gaps.append(_gap(_rate(predictions, ~s & cell, 'protected=0, target={}'.format(label), strict),
                         _rate(predictions, s & cell, 'protected=1, target={}'.format(label), strict)))
    eo = None if None in gaps else max(gaps)
    return {'dp': dp, 'eo': eo, 'eoo': gaps[1]}


class LogisticEvaluator(object):
    """L2-regularized logistic regression fit with full batch gradient descent"""

    def __init__(self, reg=None, steps=None, lr=None):
        conf = get_config()
        self.reg = conf.get('EVAL_REG', 1e-3) if reg is None else reg
        self.steps = conf.get('EVAL_STEPS', 500) if steps is None else steps
        self.lr = conf.get('EVAL_LR', 0.5) if lr is None else lr
        self.weights = None

    @staticmethod
    def design(table, target):
        """one-hot blocks of every column but the target, then a bias column"""
        schema = table.schema
        cols = [np.arange(schema.block_offsets[i], schema.block_offsets[i + 1])
                for i in range(schema.n_features) if i != target]
        features = table.data[:, np.concatenate(cols)] if cols else np.zeros((table.n_rows, 0))
        return np.hstack([features, np.ones((table.n_rows, 1))])

    def fit(self, table, target):
        target = _column(table, target)
        y = (table.indices()[:, target] == 1).astype(np.float64)
        if table.n_rows == 0 or y.min() == y.max():
            raise SingleClassTrain('training labels of {} hold a single class'.format(table.schema.names[target]))
        X = self.design(table, target)
        w = np.zeros(X.shape[1])
        penalty = np.ones_like(w)
        penalty[-1] = 0.0
        for _ in range(self.steps):
            grad = X.T @ (special.expit(X @ w) - y) / len(y) + self.reg * penalty * w
            w -= self.lr * grad
        self.weights = w
        return self

    def predict(self, table, target):
        X = self.design(table, _column(table, target))
        return (X @ self.weights >= 0.0).astype(np.float64)


def accuracy_scores(predictions, labels):
    """accuracy and balanced accuracy, the latter averaged over the classes present"""
    labels = np.asarray(labels, dtype=np.float64)
    if not len(labels):
        return 0.0, 0.0
    predictions = np.asarray(predictions, dtype=np.float64)
    with warnings.catch_warnings():
        # single class labels: the absent class is left out of the average
        warnings.simplefilter('ignore', UserWarning)
        balanced = balanced_accuracy_score(labels, predictions)
    return float(accuracy_score(labels, predictions)), float(balanced)


def downstream_eval(train, test, target, evaluator=None):
    """(accuracy, balanced accuracy, predictions on test) of a model trained on `train`"""
    if test.n_rows == 0:
        raise EmptyTable('cannot evaluate on an empty test table')
    evaluator = LogisticEvaluator() if evaluator is None else evaluator
    evaluator.fit(train, target)
    predictions = evaluator.predict(test, target)
    labels = (test.indices()[:, _column(test, target)] == 1).astype(np.float64)
    accuracy, balanced = accuracy_scores(predictions, labels)
    return accuracy, balanced, predictions


@dataclass
class EvalReport:
    n_synthetic: int
    n_test: int
    tv_mean: float = None
    tv_max: float = None
    accuracy: float = None
    balanced_accuracy: float = None
    fairness: dict = field(default_factory=dict)
    specs: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)

    def to_row(self):
        row = {'n_synthetic': self.n_synthetic, 'n_test': self.n_test, 'tv_mean': self.tv_mean,
               'tv_max': self.tv_max, 'accuracy': self.accuracy, 'balanced_accuracy': self.balanced_accuracy}
        for key in ('dp', 'eo', 'eoo'):
            row['fairness_' + key] = self.fairness.get(key)
        for name, value in self.specs.items():
            row['spec_' + name] = value
        for name, value in self.seeds.items():
            row['seed_' + name] = value
        return row

    def to_frame(self):
        return pd.DataFrame([self.to_row()])

    def to_text(self):
        lines = ['# ' + EVALUATOR_NOTE, 'synthetic rows: {}'.format(self.n_synthetic),
                 'test rows: {}'.format(self.n_test)]
        for key, value in self.to_row().items():
            if key in ('n_synthetic', 'n_test'):
                continue
            lines.append('{}: {}'.format(key, _fmt(value)))
        return '\n'.join(lines) + '\n'

    def to_csv(self, path):
        with atomic_path(path) as tmp:
            self.to_frame().to_csv(tmp, index=False)


def _fmt(value):
    if value is None:
        return 'undefined'
    if isinstance(value, float):
        return '{:.4f}'.format(value)
    return str(value)


def evaluate(synthetic, test, targets=(), regularizers=(), reference=None, seeds=None):
    """report for one synthetic table against the held out test table

    targets are (spec, marginal) pairs of the real data; specification
    metrics use the regularizer verifiers on the synthetic table
    """
    logger = get_logger()
    report = EvalReport(synthetic.n_rows, test.n_rows, seeds=dict(seeds or {}))
    if targets and synthetic.n_rows:
        report.tv_mean, report.tv_max = workload_tv(synthetic, targets)
    for reg in regularizers:
        report.specs[reg.name] = reg.metric(synthetic, reference)
    schema = synthetic.schema
    label = schema.label_index
    if label is None or not schema.columns[label].binary:
        logger.info('metrics.py, no binary label column, skipping downstream evaluation')
        return report
    try:
        report.accuracy, report.balanced_accuracy, predictions = downstream_eval(synthetic, test, label)
    except (SingleClassTrain, EmptyTable) as e:
        logger.warning('metrics.py, downstream evaluation skipped: {}'.format(e))
        return report
    protected = [i for i in schema.protected_indices if schema.columns[i].binary]
    if protected:
        report.fairness = fairness_metrics(predictions, test, protected[0], label)
    return report


def summarize(reports):
    """mean and std of every numeric report column over repeated runs"""
    frame = pd.concat([r.to_frame() for r in reports], ignore_index=True)
    numeric = frame.select_dtypes(include=[np.number])
    return pd.DataFrame({'mean': numeric.mean(), 'std': numeric.std(ddof=0)})


def summary_text(summary):
    lines = ['# ' + EVALUATOR_NOTE]
    for name, row in summary.iterrows():
        lines.append('{}: {:.4f} +- {:.4f}'.format(name, row['mean'], row['std']))
    return '\n'.join(lines) + '\n'


def export_for_external_eval(train, test, directory, seeds=None, schema_hash=None):
    """decoded train and test csvs plus a manifest naming the seeds and the schema hash"""
    if schema_hash is not None and schema_hash != train.schema.hash():
        raise SchemaHashMismatch('export schema {} does not match checkpoint schema {}'.format(
            train.schema.hash(), schema_hash))
    os.makedirs(directory, exist_ok=True)
    paths = {'train': os.path.join(directory, 'train.csv'), 'test': os.path.join(directory, 'test.csv')}
    for key, table in (('train', train), ('test', test)):
        with atomic_path(paths[key]) as tmp:
            write_csv(table, tmp)
    manifest = {'schema_hash': train.schema.hash(), 'seeds': dict(seeds or {}),
                'rows': {'train': train.n_rows, 'test': test.n_rows},
                'label': None if train.schema.label_index is None else train.schema.names[train.schema.label_index]}
    paths['manifest'] = os.path.join(directory, 'manifest.json')
    atomic_write(paths['manifest'], canonical_json(manifest))
    return paths
