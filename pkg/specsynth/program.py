"""syntax tree of specification programs

spans are carried on every node but ignored by equality, so a program parsed
from formatted text compares equal to the original
"""
from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

ENFORCE = 'ENFORCE'
ENSURE = 'ENSURE'
MINIMIZE = 'MINIMIZE'
MAXIMIZE = 'MAXIMIZE'
ACTIONS = (ENFORCE, ENSURE, MINIMIZE, MAXIMIZE)

DEMOGRAPHIC_PARITY = 'demographic_parity'
EQUALIZED_ODDS = 'equalized_odds'
EQUALITY_OF_OPPORTUNITY = 'equality_of_opportunity'
DOWNSTREAM_ACCURACY = 'downstream_accuracy'
FAIRNESS_KINDS = (DEMOGRAPHIC_PARITY, EQUALIZED_ODDS, EQUALITY_OF_OPPORTUNITY)
UTILITY_KINDS = (DOWNSTREAM_ACCURACY,)

COMPARISONS = ('==', '!=', '<', '<=', '>', '>=')
STAT_OPS = ('E', 'VAR', 'STD', 'ENTROPY')


@dataclass(frozen=True)
class Span:
    line: int
    column: int
    end_line: Optional[int] = None
    end_column: Optional[int] = None


def _span():
    return field(default=None, compare=False, repr=False)


Value = Union[str, float]


# row expressions

@dataclass(frozen=True)
class Compare:
    feature: str
    op: str
    value: Value
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class InSet:
    feature: str
    values: Tuple[Value, ...]
    negated: bool = False
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class And:
    left: object
    right: object
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Or:
    left: object
    right: object
    span: Optional[Span] = _span()


# statistical expressions

@dataclass(frozen=True)
class Feature:
    name: str
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Const:
    value: float
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Arith:
    op: str
    left: object
    right: object
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class StatOp:
    kind: str
    term: object
    condition: object = None
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Rel:
    op: str
    left: object
    right: object
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Logic:
    op: str
    left: object
    right: object
    span: Optional[Span] = _span()


# commands

@dataclass(frozen=True)
class DPCommand:
    epsilon: float
    delta: float
    action: str = ENSURE
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class RowConstraint:
    action: str
    expr: object
    weight: Optional[float] = None
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Implication:
    action: str
    lhs: object
    rhs: object
    weight: Optional[float] = None
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Statistical:
    action: str
    expr: object
    weight: Optional[float] = None
    span: Optional[Span] = _span()


@dataclass(frozen=True)
class Downstream:
    """fairness or utility objective, args keep their source order"""
    action: str
    category: str
    kind: str
    args: Tuple[Tuple[str, object], ...] = ()
    weight: Optional[float] = None
    span: Optional[Span] = _span()

    def arg(self, key, default=None):
        for k, v in self.args:
            if k == key:
                return v
        return default


@dataclass(frozen=True)
class SpecProgram:
    source: str
    commands: Tuple[object, ...] = ()
    span: Optional[Span] = _span()

    @property
    def dp(self):
        for c in self.commands:
            if isinstance(c, DPCommand):
                return c
        return None

    @property
    def specifications(self):
        return [c for c in self.commands if not isinstance(c, DPCommand)]


def command_kind(command):
    if isinstance(command, RowConstraint):
        return 'row_constraint'
    if isinstance(command, Implication):
        return 'implication'
    if isinstance(command, Statistical):
        return 'statistical'
    if isinstance(command, Downstream):
        return command.category
    return 'differential_privacy'


def command_names(program):
    """`<kind>_<position>` for every command, position counted from 1 over all commands"""
    return [(c, '{}_{}'.format(command_kind(c), i)) for i, c in enumerate(program.commands, start=1)]
