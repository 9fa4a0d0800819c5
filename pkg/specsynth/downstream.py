"""downstream objectives through an unrolled logistic surrogate

every evaluation trains a fresh logistic model on the generated batch with
gradient steps written out as tape primitives, so the statistic measured on
the reference table is differentiable in the generator parameters
"""
import numpy as np

from specsynth.constraints import CompiledRegularizer, action_sign
from specsynth.exceptions import EmptyProtectedGroup
from specsynth.program import EQUALIZED_ODDS, EQUALITY_OF_OPPORTUNITY, DOWNSTREAM_ACCURACY
from specsynth.schema import EncodedTable
from specsynth.tape import ArrayOps, value_of
from specsynth.validate import POSITIVE


def feature_columns(schema, features):
    cols = [np.arange(schema.block_offsets[i], schema.block_offsets[i + 1]) for i in features]
    return np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)


def design(ops, data, schema, features):
    """one-hot feature blocks followed by a bias column"""
    n = value_of(data).shape[0]
    return ops.concat([ops.columns(data, feature_columns(schema, features)), np.ones((n, 1))], axis=1)


def target_vector(ops, data, schema, target):
    """1 where the target column takes its positive class"""
    select = np.zeros(schema.width)
    select[schema.block_offsets[target] + POSITIVE] = 1.0
    return ops.matmul(data, select)


def train_surrogate(ops, X, y, config):
    """n_epochs of logistic regression steps from zero weights

    the gradient X^T (sigmoid(X psi) - y) / n is spelled out, full batch when
    the data fits one batch and fixed order mini-batches otherwise
    """
    n, d = value_of(X).shape
    if n <= config.batch_size:
        parts = [(X, y, n)]
    else:
        parts = []
        for lo in range(0, n, config.batch_size):
            rows = slice(lo, min(lo + config.batch_size, n))
            parts.append((ops.rows(X, rows), ops.rows(y, rows), rows.stop - rows.start))
    parts = [(Xb, ops.transpose(Xb), yb, m) for Xb, yb, m in parts]
    psi = ops.constant(np.zeros(d))
    for _ in range(config.n_epochs):
        for Xb, Xt, yb, m in parts:
            residual = ops.sub(ops.sigmoid(ops.matmul(Xb, psi)), yb)
            grad = ops.mul(ops.matmul(Xt, residual), config.lr / m)
            psi = ops.sub(psi, grad)
    return psi


def group_mean(ops, values, mask, what):
    count = int(mask.sum())
    if count == 0:
        raise EmptyProtectedGroup('reference table has no rows with {}'.format(what))
    return ops.mul(ops.sum(ops.mul(values, mask.astype(np.float64))), 1.0 / count)


def group_gap(ops, values, s, cell=None, label=''):
    a = ~s if cell is None else ~s & cell
    b = s if cell is None else s & cell
    return ops.abs(ops.sub(group_mean(ops, values, a, 'protected=0' + label),
                           group_mean(ops, values, b, 'protected=1' + label)))


def fairness_gap(ops, kind, predictions, y, s):
    """parity distance of predictions across the protected groups"""
    if kind == EQUALITY_OF_OPPORTUNITY:
        return group_gap(ops, predictions, s, y, ', target=1')
    if kind == EQUALIZED_ODDS:
        return ops.maximum(group_gap(ops, predictions, s, ~y, ', target=0'),
                           group_gap(ops, predictions, s, y, ', target=1'))
    return group_gap(ops, predictions, s)


def reference_arrays(spec, reference):
    indices = reference.indices()
    y = indices[:, spec.target] == POSITIVE
    s = None if spec.protected is None else indices[:, spec.protected] == POSITIVE
    return y, s


def surrogate_statistic(ops, spec, schema, batch, reference):
    """soft statistic of a surrogate trained on `batch`, measured on `reference`

    fairness kinds return the gap of sigmoid predictions, the utility kind
    returns the negated cross entropy
    """
    if reference is None:
        reference = EncodedTable(value_of(batch), schema)
    psi = train_surrogate(ops, design(ops, batch, schema, spec.features),
                          target_vector(ops, batch, schema, spec.target), spec.surrogate)
    logits = ops.matmul(design(ArrayOps(), reference.data, schema, spec.features), psi)
    y, s = reference_arrays(spec, reference)
    if spec.kind == DOWNSTREAM_ACCURACY:
        ce = ops.mean(ops.sub(ops.softplus(logits), ops.mul(y.astype(np.float64), logits)))
        return ops.mul(ce, -1.0)
    return fairness_gap(ops, spec.kind, ops.sigmoid(logits), y, s)


def hard_statistic(spec, table, reference=None):
    """gap of thresholded predictions, or accuracy for the utility kind"""
    ops = ArrayOps()
    reference = table if reference is None else reference
    schema = table.schema
    psi = train_surrogate(ops, design(ops, table.data, schema, spec.features),
                          target_vector(ops, table.data, schema, spec.target), spec.surrogate)
    logits = design(ops, reference.data, schema, spec.features) @ psi
    predictions = (logits >= 0.0).astype(np.float64)
    y, s = reference_arrays(spec, reference)
    if spec.kind == DOWNSTREAM_ACCURACY:
        return float(np.mean(predictions == y)) if len(y) else 0.0
    return float(fairness_gap(ops, spec.kind, predictions, y, s))


def compile_downstream(spec, schema, weight):
    sign = action_sign(spec.action)

    def loss_builder(ops, batch, reference):
        return ops.mul(surrogate_statistic(ops, spec, schema, batch, reference), sign)

    def verifier(table, reference):
        return hard_statistic(spec, table, reference)
    return CompiledRegularizer(spec.name, spec.category, weight, loss_builder, verifier)
