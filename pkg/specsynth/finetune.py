"""fine-tuning: marginal matching plus weighted specification penalties"""
import itertools
from dataclasses import dataclass

import numpy as np
import pandas as pd

from specsynth.app import get_config, get_logger
from specsynth.constraints import compile_row_constraint, compile_implication, compile_statistical
from specsynth.downstream import compile_downstream
from specsynth.exceptions import ProgramError, SingleClassTrain
from specsynth.marginals import marginal_workload, workload_tv, WITH_LABEL, ALL_3WAY
from specsynth.metrics import downstream_eval
from specsynth.optim import Adam
from specsynth.pretrain import marginal_loss, measure_targets
from specsynth.schema import EncodedTable
from specsynth.tape import Tape, ArrayOps
from specsynth.utils import atomic_path
from specsynth.validate import TypedRow, TypedImplication, TypedStatistical


@dataclass
class FinetuneConfig:
    epochs: int = 200
    batch_size: int = 15000
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0

    @classmethod
    def from_config(cls, conf=None, **overrides):
        conf = get_config() if conf is None else conf
        values = dict(epochs=conf.get('FINETUNE_EPOCHS', 200),
                      batch_size=conf.get('FINETUNE_BATCH_SIZE', 15000),
                      lr=conf.get('LEARNING_RATE', 1e-3),
                      betas=tuple(conf.get('ADAM_BETAS', (0.9, 0.999))),
                      eps=conf.get('ADAM_EPS', 1e-8),
                      seed=conf.get('SEED', 0))
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def resolve_weights(program, lambdas=None, default=None):
    """weight per specification name: --lambda, then PARAM, then DEFAULT_SPEC_WEIGHT"""
    lambdas = dict(lambdas or {})
    default = get_config().get('DEFAULT_SPEC_WEIGHT', 1.0) if default is None else default
    unknown = sorted(set(lambdas) - set(program.names))
    if unknown:
        raise ProgramError('no specification named {}, known: {}'.format(', '.join(unknown),
                                                                          ', '.join(program.names)))
    weights = {}
    for spec in program.specs:
        if spec.name in lambdas:
            weight = float(lambdas[spec.name])
        elif spec.weight is not None:
            weight = spec.weight
        else:
            weight = float(default)
        if weight < 0:
            raise ProgramError('weight of {} must not be negative, got {}'.format(spec.name, weight))
        weights[spec.name] = weight
    return weights


def compile_program(program, lambdas=None, default=None):
    weights = resolve_weights(program, lambdas, default)
    out = []
    for spec in program.specs:
        weight = weights[spec.name]
        if isinstance(spec, TypedRow):
            out.append(compile_row_constraint(spec, program.schema, weight))
        elif isinstance(spec, TypedImplication):
            out.append(compile_implication(spec, program.schema, weight))
        elif isinstance(spec, TypedStatistical):
            out.append(compile_statistical(spec, program.schema, weight))
        else:
            out.append(compile_downstream(spec, program.schema, weight))
    return out


class FineTuner(object):
    """minimizes the marginal loss plus the weighted penalties with fresh noise every epoch"""

    def __init__(self, generator, regularizers, targets, reference, config):
        self.generator = generator
        self.regularizers = list(regularizers)
        self.targets = list(targets)
        self.reference = reference
        self.config = config
        self.logger = get_logger()

    def objective(self, tape, batch):
        """total loss node, marginal loss node and the loss node of every weighted penalty"""
        if self.targets:
            marginal_part = marginal_loss(tape, batch, self.targets, self.generator.schema)
        else:
            marginal_part = tape.constant(0.0)
        total = marginal_part
        losses = {}
        for reg in self.regularizers:
            if reg.weight == 0:
                continue
            losses[reg.name] = reg.loss(tape, batch, self.reference)
            total = tape.add(total, tape.mul(losses[reg.name], reg.weight))
        return total, marginal_part, losses

    def step(self, optimizer, rng):
        tape = Tape()
        z = self.generator.noise(self.config.batch_size, rng)
        batch, nodes = self.generator.forward(tape, z, rng)
        total, marginal_part, losses = self.objective(tape, batch)
        grads = tape.backward(total)
        optimizer.step(self.generator.params, {name: grads.wrt(node) for name, node in nodes.items()})
        sample = EncodedTable(batch.value, self.generator.schema)
        row = {'loss': float(total.value), 'marginal_loss': float(marginal_part.value)}
        for reg in self.regularizers:
            if reg.name in losses:
                row['loss_' + reg.name] = float(losses[reg.name].value)
            else:
                row['loss_' + reg.name] = float(reg.loss(ArrayOps(), batch.value, self.reference))
            row['metric_' + reg.name] = reg.metric(sample, self.reference)
        return row

    def fit(self, log_path=None):
        config = self.config
        rng = np.random.default_rng(config.seed)
        optimizer = Adam(config.lr, config.betas, config.eps)
        history = []
        for epoch in range(config.epochs):
            row = self.step(optimizer, rng)
            row = dict(epoch=epoch, **row)
            history.append(row)
            if epoch % 10 == 0 or epoch == config.epochs - 1:
                self.logger.info('finetune.py, epoch {} loss {:.4f} marginal loss {:.4f}'.format(
                    epoch, row['loss'], row['marginal_loss']))
        if log_path:
            write_log(history, log_path)
        return history


def write_log(history, path):
    with atomic_path(path) as tmp:
        pd.DataFrame(history).to_csv(tmp, index=False)


def finetune(generator, regularizers, targets, reference, config, log_path=None):
    tuner = FineTuner(generator, regularizers, targets, reference, config)
    return generator, tuner.fit(log_path)


def default_workload(schema):
    mode = WITH_LABEL if schema.label_index is not None else ALL_3WAY
    return marginal_workload(schema, mode, get_config().get('WORKLOAD_DEGRADE', False))


def tune_weights(generator, program, table, grids, config=None, k=None, all_folds=None, seed=0, workload=None,
                 targets=None):
    """fine-tune a copy of the generator for every weight combination on every validated fold

    each fold fine-tunes against the remaining rows and scores a sample of
    the held out size against the held out rows.  With fixed `targets`
    (noisy marginals of a private run) `table` is a generated reference
    sample, no marginal is measured and every fold scores against `targets`
    """
    conf = get_config()
    logger = get_logger()
    config = FinetuneConfig.from_config() if config is None else config
    k = conf.get('TUNE_FOLDS', 5) if k is None else k
    all_folds = conf.get('TUNE_ALL_FOLDS', False) if all_folds is None else all_folds
    workload = default_workload(table.schema) if workload is None else workload
    names = [n for n in program.names if n in grids]
    unknown = sorted(set(grids) - set(program.names))
    if unknown:
        raise ProgramError('no specification named {}'.format(', '.join(unknown)))
    if any(len(grids[n]) == 0 for n in names):
        raise ProgramError('every tuned specification needs at least one candidate weight')
    label = table.schema.label_index
    rows = []
    for fold in (range(k) if all_folds else [0]):
        rest, held = table.split(k, fold, seed)
        if targets is None:
            fold_targets = measure_targets(rest, workload)
            held_targets = measure_targets(held, workload)
        else:
            fold_targets = held_targets = targets
        for combo in itertools.product(*[grids[n] for n in names]):
            lambdas = dict(zip(names, combo))
            candidate = generator.copy()
            regularizers = compile_program(program, lambdas)
            FineTuner(candidate, regularizers, fold_targets, rest, config).fit()
            sample = candidate.sample(held.n_rows, seed + fold)
            row = {'fold': fold}
            row.update({'lambda_' + n: v for n, v in lambdas.items()})
            row['tv_mean'], row['tv_max'] = workload_tv(sample, held_targets)
            row['accuracy'] = None
            if label is not None and table.schema.columns[label].binary:
                try:
                    row['accuracy'] = downstream_eval(sample, held, label)[0]
                except SingleClassTrain as e:
                    logger.warning('finetune.py, fold {} {}: {}'.format(fold, lambdas, e))
            for reg in regularizers:
                row['metric_' + reg.name] = reg.metric(sample, rest)
            logger.info('finetune.py, tuned fold {} weights {}'.format(fold, lambdas))
            rows.append(row)
    return pd.DataFrame(rows)
