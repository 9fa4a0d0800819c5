"""resolve a parsed program against a schema

row predicates become sets of allowed category or bin indices per column;
numeric thresholds on binned columns must fall on bin edges. `>` and `>=`
select the bins whose left edge is at least the threshold, `<` and `<=` the
bins whose right edge is at most the threshold.
"""
from dataclasses import dataclass
from typing import Optional, Tuple

from specsynth.app import get_config
from specsynth.exceptions import (UnknownFeature, UnknownCategory, TypeMismatch, BinBoundary,
                                  ProtectedColumnMissing, NonBinaryTarget, MissingLabel, UnknownColumn,
                                  ProgramSyntaxError)
from specsynth.program import (Compare, InSet, And, Or, Feature, Const, Arith, StatOp, Rel, Logic,
                               RowConstraint, Implication, Statistical, Downstream, DPCommand,
                               command_names, FAIRNESS_KINDS)
from specsynth.schema import format_number

# positive class of a binary target or protected column
POSITIVE = 1


@dataclass(frozen=True)
class SurrogateConfig:
    """inner training of the logistic surrogate behind a downstream objective"""
    lr: float = 0.1
    n_epochs: int = 15
    batch_size: int = 256

    def __post_init__(self):
        if self.n_epochs < 1 or self.batch_size < 1:
            raise ProgramSyntaxError('surrogate needs n_epochs >= 1 and batch_size >= 1')
        if not self.lr > 0:
            raise ProgramSyntaxError('surrogate lr must be positive')

    @classmethod
    def from_config(cls, lr=None, n_epochs=None, batch_size=None):
        conf = get_config()
        return cls(lr=float(conf.get('SURROGATE_LR', 0.1) if lr is None else lr),
                   n_epochs=int(conf.get('SURROGATE_EPOCHS', 15) if n_epochs is None else n_epochs),
                   batch_size=int(conf.get('SURROGATE_BATCH_SIZE', 256) if batch_size is None else batch_size))


@dataclass(frozen=True)
class Predicate:
    """row holds when column `column` takes one of `allowed`"""
    column: int
    allowed: frozenset


@dataclass(frozen=True)
class Conj:
    left: object
    right: object


@dataclass(frozen=True)
class Disj:
    left: object
    right: object


@dataclass(frozen=True)
class TypedStat:
    kind: str
    term: object
    features: Tuple[int, ...]
    condition: object = None


@dataclass
class TypedRow:
    name: str
    action: str
    weight: Optional[float]
    expr: object


@dataclass
class TypedImplication:
    name: str
    action: str
    weight: Optional[float]
    lhs: object
    rhs: object


@dataclass
class TypedStatistical:
    name: str
    action: str
    weight: Optional[float]
    expr: object


@dataclass
class TypedDownstream:
    name: str
    action: str
    weight: Optional[float]
    category: str
    kind: str
    target: int
    features: Tuple[int, ...]
    protected: Optional[int] = None
    surrogate: SurrogateConfig = None


@dataclass
class TypedProgram:
    source: str
    schema: object
    dp: Optional[DPCommand]
    specs: list

    @property
    def names(self):
        return [s.name for s in self.specs]

    def spec(self, name):
        for s in self.specs:
            if s.name == name:
                return s
        raise KeyError(name)


def negate(expr, schema):
    """negation pushed to the leaves: complements of allowed sets, De Morgan for AND and OR"""
    if isinstance(expr, Predicate):
        size = schema.columns[expr.column].size
        return Predicate(expr.column, frozenset(range(size)) - expr.allowed)
    if isinstance(expr, Conj):
        return Disj(negate(expr.left, schema), negate(expr.right, schema))
    return Conj(negate(expr.left, schema), negate(expr.right, schema))


def holds(expr, indices):
    """boolean evaluation on one row of category indices"""
    if isinstance(expr, Predicate):
        return int(indices[expr.column]) in expr.allowed
    if isinstance(expr, Conj):
        return holds(expr.left, indices) and holds(expr.right, indices)
    return holds(expr.left, indices) or holds(expr.right, indices)


DOWNSTREAM_ARGS = frozenset(['target', 'features', 'protected', 'exclude_protected', 'lr', 'n_epochs', 'batch_size'])


def flag(value, default, span=None):
    """boolean argument written as true/false or 1/0"""
    if value is None:
        return default
    if isinstance(value, str):
        if value.lower() not in ('true', 'false'):
            raise TypeMismatch('expected true or false, got {}'.format(value), span)
        return value.lower() == 'true'
    return bool(value)


class Validator(object):

    def __init__(self, schema, exclude_protected=None):
        self.schema = schema
        if exclude_protected is None:
            exclude_protected = get_config().get('SURROGATE_EXCLUDE_PROTECTED', False)
        self.exclude_protected = exclude_protected

    def column_index(self, name, span=None):
        try:
            return self.schema.index(name)
        except UnknownColumn:
            raise UnknownFeature('unknown feature {}'.format(name), span)

    # row expressions

    def row(self, expr):
        if isinstance(expr, And):
            return Conj(self.row(expr.left), self.row(expr.right))
        if isinstance(expr, Or):
            return Disj(self.row(expr.left), self.row(expr.right))
        i = self.column_index(expr.feature, expr.span)
        column = self.schema.columns[i]
        if isinstance(expr, InSet):
            allowed = frozenset(self.value_index(column, v, expr.span) for v in expr.values)
            if expr.negated:
                allowed = frozenset(range(column.size)) - allowed
            return Predicate(i, allowed)
        return Predicate(i, self.compare(column, expr.op, expr.value, expr.span))

    def compare(self, column, op, value, span):
        if op in ('==', '!='):
            hit = {self.value_index(column, value, span)}
            if op == '!=':
                return frozenset(range(column.size)) - hit
            return frozenset(hit)
        if not column.binned:
            raise TypeMismatch('order comparison {} on categorical column {}'.format(op, column.name), span)
        threshold = self.number(column, value, span)
        edges = column.bin_edges
        for lo, hi in zip(edges[:-1], edges[1:]):
            if lo < threshold < hi:
                raise BinBoundary('threshold {} splits bin [{}, {}) of {}'.format(
                    format_number(threshold), format_number(lo), format_number(hi), column.name), span)
        if op in ('>', '>='):
            return frozenset(j for j in range(column.size) if edges[j] >= threshold)
        return frozenset(j for j in range(column.size) if edges[j + 1] <= threshold)

    def number(self, column, value, span):
        if isinstance(value, float):
            return value
        try:
            return float(value)
        except ValueError:
            raise TypeMismatch('column {} compares against numbers, got {!r}'.format(column.name, value), span)

    def value_index(self, column, value, span):
        if column.binned:
            j = int(column.bin_indices([self.number(column, value, span)])[0])
            if j < 0:
                raise UnknownCategory('{} is outside the bins of {}'.format(format_number(value), column.name), span)
            return j
        text = format_number(value) if isinstance(value, float) else value
        try:
            return column.categories.index(text)
        except ValueError:
            raise UnknownCategory('{!r} is not a category of {}'.format(text, column.name), span)

    # statistical expressions

    def stat(self, expr):
        if isinstance(expr, (Rel, Logic)):
            return type(expr)(expr.op, self.stat(expr.left), self.stat(expr.right), expr.span)
        if isinstance(expr, Arith):
            return Arith(expr.op, self.stat(expr.left), self.stat(expr.right), expr.span)
        if isinstance(expr, Const):
            return expr
        if isinstance(expr, StatOp):
            names = sorted(set(self.term_features(expr.term)), key=self.column_index)
            features = tuple(self.column_index(n, expr.span) for n in names)
            if not features:
                raise TypeMismatch('{} needs at least one feature'.format(expr.kind), expr.span)
            condition = None if expr.condition is None else self.row(expr.condition)
            return TypedStat(expr.kind, expr.term, features, condition)
        raise TypeMismatch('feature {} outside a statistical operator'.format(getattr(expr, 'name', expr)),
                           getattr(expr, 'span', None))

    def term_features(self, term):
        if isinstance(term, Feature):
            self.column_index(term.name, term.span)
            return [term.name]
        if isinstance(term, Arith):
            return self.term_features(term.left) + self.term_features(term.right)
        return []

    # downstream objectives

    def downstream(self, command, name):
        schema = self.schema
        unknown = sorted(k for k, _ in command.args if k not in DOWNSTREAM_ARGS)
        if unknown:
            raise TypeMismatch('unknown argument {} of {}, expected one of {}'.format(
                ', '.join(unknown), name, ', '.join(sorted(DOWNSTREAM_ARGS))), command.span)
        target = command.arg('target')
        if target is None:
            if schema.label_index is None:
                raise MissingLabel('{} needs a target argument or a label column'.format(name))
            target = schema.label_index
        else:
            target = self.column_index(target, command.span)
        if not schema.columns[target].binary:
            raise NonBinaryTarget('target {} of {} is not binary'.format(schema.columns[target].name, name),
                                  command.span)
        protected = None
        if command.category == 'fairness':
            protected = command.arg('protected')
            if protected is None:
                indices = schema.protected_indices
                if not indices:
                    raise ProtectedColumnMissing('{} needs a protected column'.format(name), command.span)
                protected = indices[0]
            else:
                protected = self.column_index(protected, command.span)
            if not schema.columns[protected].binary:
                raise ProtectedColumnMissing('protected column {} of {} is not binary'.format(
                    schema.columns[protected].name, name), command.span)
        features = command.arg('features', 'all')
        if features == 'all':
            features = range(schema.n_features)
        elif isinstance(features, (tuple, str)):
            names = features if isinstance(features, tuple) else (features,)
            features = [self.column_index(f, command.span) for f in names]
        else:
            raise TypeMismatch('features of {} must be all, a column or a set of columns'.format(name), command.span)
        features = [i for i in features if i != target]
        exclude = flag(command.arg('exclude_protected'), self.exclude_protected, command.span)
        if protected is not None and exclude:
            features = [i for i in features if i != protected]
        surrogate = SurrogateConfig.from_config(lr=command.arg('lr'), n_epochs=command.arg('n_epochs'),
                                                batch_size=command.arg('batch_size'))
        return TypedDownstream(name, command.action, command.weight, command.category, command.kind,
                               target, tuple(sorted(features)), protected, surrogate)

    def program(self, program):
        specs = []
        for command, name in command_names(program):
            if isinstance(command, RowConstraint):
                specs.append(TypedRow(name, command.action, command.weight, self.row(command.expr)))
            elif isinstance(command, Implication):
                specs.append(TypedImplication(name, command.action, command.weight,
                                              self.row(command.lhs), self.row(command.rhs)))
            elif isinstance(command, Statistical):
                expr = self.stat(command.expr)
                if not isinstance(expr, (Rel, Logic)):
                    raise TypeMismatch('statistical command needs a comparison', command.span)
                specs.append(TypedStatistical(name, command.action, command.weight, expr))
            elif isinstance(command, Downstream):
                specs.append(self.downstream(command, name))
        return TypedProgram(program.source, self.schema, program.dp, specs)


def validate(program, schema, exclude_protected=None):
    return Validator(schema, exclude_protected).program(program)


def is_fairness(spec):
    return isinstance(spec, TypedDownstream) and spec.kind in FAIRNESS_KINDS
