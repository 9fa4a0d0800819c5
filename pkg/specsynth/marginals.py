"""marginals over one-hot tables

a marginal over features S is the per-row Kronecker product of the selected
one-hot blocks summed over rows; cells are ordered row-major over S, so for
binary (A, B) the cells are (0,0), (0,1), (1,0), (1,1)
"""
import itertools
import string
from dataclasses import dataclass

import numpy as np

from specsynth.app import get_logger
from specsynth.exceptions import EmptyTable, LengthMismatch, MissingLabel, WorkloadTooSmall, SchemaError

ALL_3WAY = 'all-3way'
WITH_LABEL = '3way-with-label'


@dataclass(frozen=True)
class MarginalSpec:
    feature_indices: tuple
    domain_size: int

    @classmethod
    def of(cls, schema, indices):
        indices = tuple(int(i) for i in indices)
        if not indices or list(indices) != sorted(set(indices)):
            raise SchemaError('marginal features {} must be distinct and ascending'.format(indices))
        if indices[0] < 0 or indices[-1] >= schema.n_features:
            raise SchemaError('marginal features {} outside schema of {} columns'.format(indices, schema.n_features))
        return cls(indices, int(np.prod([schema.columns[i].size for i in indices])))

    def label(self, schema):
        return '+'.join(schema.columns[i].name for i in self.feature_indices)


@dataclass
class MarginalVector:
    values: np.ndarray
    normalized: bool = True

    def __len__(self):
        return len(self.values)

    def clamped(self):
        """non-negative, renormalized copy; an all-zero vector becomes uniform"""
        v = np.clip(np.asarray(self.values, dtype=np.float64), 0.0, None)
        total = v.sum()
        if total <= 0.0:
            return MarginalVector(np.full(len(v), 1.0 / len(v)), True)
        return MarginalVector(v / total, True)


def kron_subscripts(n_blocks, weighted=False):
    letters = string.ascii_lowercase[:n_blocks]
    inputs = ['Z' + c for c in letters]
    if weighted:
        inputs.append('Z')
    return ','.join(inputs) + '->' + letters


def kron_sum(blocks, weights=None):
    """sum over rows of w_n * (b1_n kron b2_n kron ...), flattened row-major"""
    operands = list(blocks)
    if weights is not None:
        operands.append(weights)
    out = np.einsum(kron_subscripts(len(blocks), weights is not None), *operands, optimize=True)
    return out.reshape(-1)


def marginal(table, spec, normalize=True):
    if normalize and table.n_rows == 0:
        raise EmptyTable('cannot normalize a marginal of an empty table')
    blocks = [table.data[:, table.schema.block(i)] for i in spec.feature_indices]
    counts = kron_sum(blocks)
    if normalize:
        return MarginalVector(counts / table.n_rows, True)
    return MarginalVector(counts, False)


def marginal_workload(schema, mode=WITH_LABEL, degrade=False):
    """lexicographically ordered workload of marginal specs

    with-label mode puts the label in one slot of every triple; with fewer
    than three features `degrade` falls back to the largest marginals that fit
    """
    logger = get_logger()
    k = schema.n_features
    label = schema.label_index
    if mode == WITH_LABEL and label is None:
        raise MissingLabel('workload {} needs a column with the label role'.format(mode))
    width = 3
    if k < 3:
        if not degrade:
            raise WorkloadTooSmall('workload {} needs at least 3 columns, schema has {}'.format(mode, k))
        width = k
        logger.warning('marginals.py, workload degraded to {}-way marginals for {} columns'.format(width, k))
    if mode == WITH_LABEL:
        others = [i for i in range(k) if i != label]
        combos = [tuple(sorted(c + (label,))) for c in itertools.combinations(others, width - 1)]
    elif mode == ALL_3WAY:
        combos = list(itertools.combinations(range(k), width))
    else:
        raise SchemaError('unknown workload mode {}'.format(mode))
    return [MarginalSpec.of(schema, c) for c in sorted(set(combos))]


def tv_distance(a, b):
    a = np.asarray(getattr(a, 'values', a), dtype=np.float64)
    b = np.asarray(getattr(b, 'values', b), dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch('marginals of length {} and {} cannot be compared'.format(len(a), len(b)))
    return 0.5 * float(np.abs(a - b).sum())


def workload_tv(table, targets):
    """(mean, max) tv distance of the table's marginals against (spec, vector) targets"""
    distances = [tv_distance(marginal(table, spec), target) for spec, target in targets]
    if not distances:
        return 0.0, 0.0
    return float(np.mean(distances)), float(np.max(distances))
