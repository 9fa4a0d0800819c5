"""specifications compiled to differentiable penalties

every builder takes an ops backend, a Tape while fine-tuning and ArrayOps
when verifying hard samples, so loss and verifier share one definition.
Row and implication penalties are mean violation counts; statistical
comparisons are relaxed with hinge and absolute differences, AND adds child
losses and OR multiplies them.
"""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from specsynth.app import get_config, get_logger
from specsynth.exceptions import DomainError
from specsynth.program import Const, Feature, Logic, MAXIMIZE
from specsynth.tape import ArrayOps, value_of
from specsynth.validate import Predicate, Conj, TypedStat, negate

ROW = 'row_constraint'
IMPLICATION = 'implication'
STATISTICAL = 'statistical'


@dataclass
class CompiledRegularizer:
    """one weighted penalty and its tape-free verifier

    `loss_builder(ops, batch, reference)` returns a scalar, `verifier(table,
    reference)` a per-row bool array when `rejectable` and a scalar metric
    otherwise
    """
    name: str
    kind: str
    weight: float
    loss_builder: Callable
    verifier: Callable
    rejectable: bool = False
    tolerance: Optional[float] = None

    def loss(self, ops, batch, reference=None):
        return self.loss_builder(ops, batch, reference)

    def verify(self, table, reference=None):
        return self.verifier(table, reference)

    def metric(self, table, reference=None):
        """constraint satisfaction rate for rejectable specs, the verifier value otherwise"""
        out = self.verify(table, reference)
        if self.rejectable:
            return float(np.mean(out)) if len(out) else 1.0
        return float(out)

    def satisfied(self, table, reference=None):
        value = self.metric(table, reference)
        if self.rejectable:
            return value == 1.0
        if self.tolerance is None:
            return True
        return value <= self.tolerance


def column_mask(schema, predicate):
    mask = np.zeros(schema.width)
    offset = int(schema.block_offsets[predicate.column])
    for j in predicate.allowed:
        mask[offset + j] = 1.0
    return mask


def row_mask(ops, expr, batch, schema):
    """per row truth value of a typed row expression, exactly 0 or 1 on one-hot input"""
    if isinstance(expr, Predicate):
        return ops.matmul(batch, column_mask(schema, expr))
    left = row_mask(ops, expr.left, batch, schema)
    right = row_mask(ops, expr.right, batch, schema)
    if isinstance(expr, Conj):
        return ops.mul(left, right)
    return ops.sub(ops.add(left, right), ops.mul(left, right))


def hard_rows(table, expr):
    return row_mask(ArrayOps(), expr, table.data, table.schema) > 0.5


def compile_row_constraint(spec, schema, weight):
    violated = negate(spec.expr, schema)

    def loss_builder(ops, batch, reference):
        return ops.mean(row_mask(ops, violated, batch, schema))

    def verifier(table, reference):
        return hard_rows(table, spec.expr)
    return CompiledRegularizer(spec.name, ROW, weight, loss_builder, verifier, rejectable=True)


def compile_implication(spec, schema, weight):
    """penalizes rows where the left side holds and the right side does not"""
    not_rhs = negate(spec.rhs, schema)

    def loss_builder(ops, batch, reference):
        both = ops.mul(row_mask(ops, spec.lhs, batch, schema), row_mask(ops, not_rhs, batch, schema))
        return ops.mean(both)

    def verifier(table, reference):
        return ~hard_rows(table, spec.lhs) | hard_rows(table, spec.rhs)
    return CompiledRegularizer(spec.name, IMPLICATION, weight, loss_builder, verifier, rejectable=True)


# statistical operators

def conditional_marginal(ops, batch, schema, features, condition=None, eps=None):
    """normalized marginal over `features` restricted to rows where `condition` holds"""
    eps = get_config().get('STAT_EPSILON', 1e-12) if eps is None else eps
    blocks = [ops.columns(batch, schema.block(i)) for i in features]
    if condition is None:
        n = value_of(batch).shape[0]
        return ops.mul(ops.kron_sum(blocks), 1.0 / n)
    weights = row_mask(ops, condition, batch, schema)
    total = ops.sum(weights)
    if float(value_of(total)) < 1.0:
        get_logger().warning('constraints.py, DegenerateCondition, condition holds for {:.3f} rows of the batch'
                             .format(float(value_of(total))))
    return ops.div(ops.kron_sum(blocks, weights), ops.add(total, eps))


def term_values(term, schema, features):
    """f evaluated on every cell of the marginal over `features`, row-major"""
    grids = np.meshgrid(*[schema.columns[i].values() for i in features], indexing='ij')
    values = {schema.columns[i].name: g.reshape(-1) for i, g in zip(features, grids)}

    def evaluate(node):
        if isinstance(node, Feature):
            return values[node.name]
        if isinstance(node, Const):
            return node.value
        left, right = evaluate(node.left), evaluate(node.right)
        if node.op == '+':
            return left + right
        if node.op == '-':
            return left - right
        if node.op == '*':
            return left * right
        if np.any(np.asarray(right) == 0.0):
            raise DomainError('division by zero inside a statistical operator')
        return left / right
    size = int(np.prod([schema.columns[i].size for i in features])) if features else 1
    return np.broadcast_to(np.asarray(evaluate(term), dtype=np.float64), (size,)).copy()


def stat_value(ops, kind, f, p, eps=None):
    """E, VAR, STD or ENTROPY of values `f` under probabilities `p`"""
    eps = get_config().get('STAT_EPSILON', 1e-12) if eps is None else eps
    if kind == 'ENTROPY':
        levels, inverse = np.unique(f, return_inverse=True)
        group = np.zeros((len(f), len(levels)))
        group[np.arange(len(f)), inverse] = 1.0
        q = ops.matmul(p, group)
        return ops.mul(ops.sum(ops.mul(q, ops.log(ops.add(q, eps)))), -1.0)
    mean = ops.sum(ops.mul(p, f))
    if kind == 'E':
        return mean
    diff = ops.sub(f, mean)
    var = ops.sum(ops.mul(p, ops.mul(diff, diff)))
    if kind == 'VAR':
        return var
    return ops.sqrt(ops.add(var, eps))


def stat_term(ops, node, batch, schema):
    """value of an arithmetic statistical expression"""
    if isinstance(node, Const):
        return ops.constant(node.value)
    if isinstance(node, TypedStat):
        features = node.features
        p = conditional_marginal(ops, batch, schema, features, node.condition)
        return stat_value(ops, node.kind, term_values(node.term, schema, features), p)
    left = stat_term(ops, node.left, batch, schema)
    right = stat_term(ops, node.right, batch, schema)
    return {'+': ops.add, '-': ops.sub, '*': ops.mul, '/': ops.div}[node.op](left, right)


def relation_loss(ops, op, a, b, margin):
    if op == '==':
        return ops.abs(ops.sub(a, b))
    if op == '!=':
        return ops.hinge(ops.sub(margin, ops.abs(ops.sub(a, b))))
    if op in ('>', '>='):
        a, b = b, a
    diff = ops.sub(a, b)
    if op in ('<', '>'):
        diff = ops.add(diff, margin)
    return ops.hinge(diff)


def stat_loss(ops, node, batch, schema, margin=None):
    margin = get_config().get('STAT_MARGIN', 1e-6) if margin is None else margin
    if isinstance(node, Logic):
        left = stat_loss(ops, node.left, batch, schema, margin)
        right = stat_loss(ops, node.right, batch, schema, margin)
        return ops.add(left, right) if node.op == 'AND' else ops.mul(left, right)
    a = stat_term(ops, node.left, batch, schema)
    b = stat_term(ops, node.right, batch, schema)
    return relation_loss(ops, node.op, a, b, margin)


def stat_residual(node, table, margin=None):
    """violation of each comparison scaled by the magnitude of its sides; AND takes the max, OR the min"""
    ops = ArrayOps()
    margin = get_config().get('STAT_MARGIN', 1e-6) if margin is None else margin
    if isinstance(node, Logic):
        left = stat_residual(node.left, table, margin)
        right = stat_residual(node.right, table, margin)
        return max(left, right) if node.op == 'AND' else min(left, right)
    a = float(stat_term(ops, node.left, table.data, table.schema))
    b = float(stat_term(ops, node.right, table.data, table.schema))
    loss = float(relation_loss(ops, node.op, a, b, margin))
    return loss / max(1.0, abs(a), abs(b))


def compile_statistical(spec, schema, weight, tolerance=None):
    tolerance = get_config().get('STAT_TOLERANCE', 0.05) if tolerance is None else tolerance
    expr = spec.expr

    def loss_builder(ops, batch, reference):
        return stat_loss(ops, expr, batch, schema)

    def verifier(table, reference):
        return stat_residual(expr, table)
    return CompiledRegularizer(spec.name, STATISTICAL, weight, loss_builder, verifier, tolerance=tolerance)


def action_sign(action):
    return -1.0 if action == MAXIMIZE else 1.0

