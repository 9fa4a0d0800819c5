"""marginal matching: the generator is trained against measured marginals only"""
from dataclasses import dataclass

import numpy as np
import pandas as pd

from specsynth.app import get_config, get_logger
from specsynth.exceptions import LengthMismatch
from specsynth.marginals import marginal, marginal_workload, MarginalSpec, MarginalVector, WITH_LABEL
from specsynth.optim import Adam, cosine_lr
from specsynth.tape import Tape
from specsynth.utils import atomic_path, batches


@dataclass
class PretrainConfig:
    batch_size: int = 15000
    epochs: int = 2000
    group_size: int = 16
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.group_size < 1:
            raise ValueError('batch size and group size must be at least 1')

    @classmethod
    def from_config(cls, conf=None, private=False, **overrides):
        conf = get_config() if conf is None else conf
        values = dict(batch_size=conf.get('DP_BATCH_SIZE' if private else 'PRETRAIN_BATCH_SIZE', 15000),
                      epochs=conf.get('DP_EPOCHS' if private else 'PRETRAIN_EPOCHS', 2000),
                      group_size=conf.get('MARGINAL_GROUP_SIZE', 16),
                      lr=conf.get('LEARNING_RATE', 1e-3),
                      betas=tuple(conf.get('ADAM_BETAS', (0.9, 0.999))),
                      eps=conf.get('ADAM_EPS', 1e-8),
                      seed=conf.get('SEED', 0))
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def measure_targets(table, workload):
    """normalized marginals of the real table, the only place pretraining reads rows"""
    return [(spec, marginal(table, spec)) for spec in workload]


def generated_marginal(tape, batch, spec, schema):
    blocks = [tape.columns(batch, schema.block(i)) for i in spec.feature_indices]
    return tape.mul(tape.kron_sum(blocks), 1.0 / batch.shape[0])


def marginal_loss(tape, batch, targets, schema):
    """sum of tv distances between the batch marginals and the targets"""
    terms = []
    for spec, target in targets:
        values = np.asarray(target.values)
        if len(values) != spec.domain_size:
            raise LengthMismatch('target of length {} for marginal of size {}'.format(len(values), spec.domain_size))
        diff = tape.sub(generated_marginal(tape, batch, spec, schema), values)
        terms.append(tape.mul(tape.sum(tape.abs(diff)), 0.5))
    loss = terms[0]
    for term in terms[1:]:
        loss = tape.add(loss, term)
    return loss


class Pretrainer(object):
    """fits a generator to (spec, marginal) targets with Adam and cosine annealing"""

    def __init__(self, generator, config):
        self.generator = generator
        self.config = config
        self.logger = get_logger()
        self.history = []

    def fit(self, targets, log_path=None):
        config = self.config
        if not targets:
            self.logger.warning('pretrain.py, no marginal targets, nothing to fit')
            return []
        rng = np.random.default_rng(config.seed)
        optimizer = Adam(config.lr, config.betas, config.eps)
        n_groups = -(-len(targets) // config.group_size)
        total = config.epochs * n_groups
        step = 0
        history = []
        for epoch in range(config.epochs):
            order = rng.permutation(len(targets))
            tv_sum = 0.0
            lr = config.lr
            for group in batches(order, config.group_size):
                lr = cosine_lr(config.lr, step, total)
                loss = self.step(optimizer, [targets[i] for i in group], rng, lr)
                tv_sum += loss
                step += 1
            mean_tv = tv_sum / len(targets)
            history.append((epoch, mean_tv, lr))
            if epoch % 100 == 0 or epoch == config.epochs - 1:
                self.logger.info('pretrain.py, epoch {} mean tv {:.4f} lr {:.2e}'.format(epoch, mean_tv, lr))
        self.history.extend(history)
        if log_path:
            write_history(history, log_path)
        return history

    def step(self, optimizer, group, rng, lr):
        """one update on a group of targets with fresh noise, returns the summed tv"""
        tape = Tape()
        z = self.generator.noise(self.config.batch_size, rng)
        batch, nodes = self.generator.forward(tape, z, rng)
        loss = marginal_loss(tape, batch, group, self.generator.schema)
        grads = tape.backward(loss)
        optimizer.step(self.generator.params, {name: grads.wrt(node) for name, node in nodes.items()}, lr)
        return float(loss.value)


def write_history(history, path):
    frame = pd.DataFrame(history, columns=['epoch', 'mean_tv', 'lr'])
    with atomic_path(path) as tmp:
        frame.to_csv(tmp, index=False)


def pretrain(generator, table, config, workload=None, log_path=None):
    """non-private pretraining on the 3-way marginals that involve the label"""
    if workload is None:
        workload = marginal_workload(table.schema, WITH_LABEL, get_config().get('WORKLOAD_DEGRADE', False))
    targets = measure_targets(table, workload)
    trainer = Pretrainer(generator, config)
    history = trainer.fit(targets, log_path)
    return generator, history


def write_targets(targets, schema, path):
    """(spec, marginal) targets as long csv rows: marginal, cell, value"""
    rows = []
    for spec, target in targets:
        label = spec.label(schema)
        rows.extend((label, j, float(v)) for j, v in enumerate(target.values))
    with atomic_path(path) as tmp:
        pd.DataFrame(rows, columns=['marginal', 'cell', 'value']).to_csv(tmp, index=False)


def read_targets(path, schema):
    frame = pd.read_csv(path)
    targets = []
    for label, group in frame.groupby('marginal', sort=False):
        spec = MarginalSpec.of(schema, sorted(schema.index(name) for name in label.split('+')))
        values = group.sort_values('cell')['value'].to_numpy(dtype=np.float64)
        if len(values) != spec.domain_size:
            raise LengthMismatch('target {} has {} cells, expected {}'.format(label, len(values), spec.domain_size))
        targets.append((spec, MarginalVector(values, True)))
    return targets
