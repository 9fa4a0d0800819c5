"""parser and canonical formatter for specification programs

keywords are case-insensitive; `LINE CONSTRAINT` is accepted for
`ROW CONSTRAINT` and the privacy command takes its arguments either after a
colon or in parentheses. `format_program` always writes the colon form.
Precedence from tight to loose: comparisons, AND, OR; IMPLIES only separates
the two sides of an implication command.
"""
import re

from lark import Lark, Transformer, v_args
from lark.exceptions import UnexpectedInput, UnexpectedEOF, VisitError

from specsynth.exceptions import ProgramError, ProgramSyntaxError, MissingEnd, DuplicateDP, MisplacedDP
from specsynth.program import (Span, Compare, InSet, And, Or, Feature, Const, Arith, StatOp, Rel, Logic,
                               DPCommand, RowConstraint, Implication, Statistical, Downstream, SpecProgram,
                               FAIRNESS_KINDS, UTILITY_KINDS)
from specsynth.schema import format_number

GRAMMAR = r"""
start: header command* end?

header: SYNTHESIZE ":" source ";"
?source: NAME -> name_value
       | STRING -> string_value
end: END ";"

?command: row_command
        | implication_command
        | statistical_command
        | fairness_command
        | utility_command
        | dp_command

row_command: ACTION ":" ROW_CONSTRAINT param ":" row_or ";"
implication_command: ACTION ":" IMPLICATION param ":" row_or IMPLIES row_or ";"
statistical_command: ACTION ":" STATISTICAL param ":" stat_or ";"
fairness_command: ACTION ":" FAIRNESS param ":" NAME "(" [kwargs] ")" ";"
utility_command: ACTION ":" UTILITY param ":" NAME "(" [kwargs] ")" ";"
dp_command: ACTION ":" DIFFERENTIAL_PRIVACY ":" kwargs ";"
          | ACTION ":" DIFFERENTIAL_PRIVACY "(" kwargs ")" ";"

param: [PARAM signed_number]

kwargs: kwarg ("," kwarg)*
kwarg: NAME EQ kwvalue
?kwvalue: literal
        | value_set

?row_or: row_and
       | row_or OR row_and -> or_expr
?row_and: row_atom
        | row_and AND row_atom -> and_expr
?row_atom: comparison
         | membership
         | "(" row_or ")"

comparison: NAME CMP_OP literal
membership: NAME IN value_set -> in_set
          | NAME NOT IN value_set -> not_in_set
value_set: "{" [literal ("," literal)*] "}"
?literal: NAME -> name_value
        | STRING -> string_value
        | signed_number

signed_number: ADD_OP? NUMBER

?stat_or: stat_and
        | stat_or OR stat_and -> logic_or
?stat_and: stat_rel
         | stat_and AND stat_rel -> logic_and
?stat_rel: arith CMP_OP arith -> rel
         | "(" stat_or ")"

?arith: product
      | arith ADD_OP product -> binary
?product: unary
        | product MUL_OP unary -> binary
?unary: atom
      | ADD_OP unary -> negate
?atom: NUMBER -> const
     | STAT_OP "[" fterm ["|" row_or] "]" -> stat_op
     | "(" arith ")"

?fterm: fproduct
      | fterm ADD_OP fproduct -> binary
?fproduct: funary
         | fproduct MUL_OP funary -> binary
?funary: fatom
       | ADD_OP funary -> negate
?fatom: NAME -> feature
      | NUMBER -> const
      | "(" fterm ")"

STAT_OP.3: /(E|VAR|STD|ENTROPY)(?=\s*\[)/i
SYNTHESIZE.2: /SYNTHESIZE\b/i
END.2: /END\b/i
ACTION.2: /(ENFORCE|ENSURE|MINIMIZE|MAXIMIZE)\b/i
ROW_CONSTRAINT.2: /(ROW|LINE)\s+CONSTRAINT\b/i
IMPLICATION.2: /IMPLICATION\b/i
STATISTICAL.2: /STATISTICAL\b/i
FAIRNESS.2: /FAIRNESS\b/i
UTILITY.2: /UTILITY\b/i
DIFFERENTIAL_PRIVACY.2: /DIFFERENTIAL\s+PRIVACY\b/i
PARAM.2: /PARAM\b/i
IMPLIES.2: /IMPLIES\b/i
AND.2: /AND\b/i
OR.2: /OR\b/i
NOT.2: /NOT\b/i
IN.2: /IN\b/i

CMP_OP: /==|!=|<=|>=|<|>/
EQ: "="
ADD_OP: /[+-]/
MUL_OP: /[*\/]/
NAME: /[A-Za-z_][A-Za-z0-9_]*/
NUMBER: /(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?/
STRING: /"[^"\n]*"|'[^'\n]*'/
COMMENT: /#[^\n]*/

%import common.WS
%ignore WS
%ignore COMMENT
"""

KEYWORDS = frozenset(['SYNTHESIZE', 'END', 'ENFORCE', 'ENSURE', 'MINIMIZE', 'MAXIMIZE', 'IMPLICATION',
                      'STATISTICAL', 'FAIRNESS', 'UTILITY', 'PARAM', 'IMPLIES', 'AND', 'OR', 'NOT', 'IN'])
_NAME = re.compile(r'[A-Za-z_][A-Za-z0-9_]*\Z')

_parser = None


def get_parser():
    global _parser
    if _parser is None:
        _parser = Lark(GRAMMAR, parser='earley', lexer='basic', propagate_positions=True, maybe_placeholders=True)
    return _parser


def _span_of(meta):
    if getattr(meta, 'empty', True):
        return None
    return Span(meta.line, meta.column, meta.end_line, meta.end_column)


def _token_span(token):
    return Span(token.line, token.column, token.end_line, token.end_column)


def _number(token):
    text = str(token)
    if text.lower() in ('inf', 'infinity'):
        return float('inf')
    return float(text)


@v_args(meta=True)
class ProgramBuilder(Transformer):
    """lark tree to SpecProgram"""

    def start(self, meta, children):
        header = children[0]
        commands = [c for c in children[1:] if not isinstance(c, _End)]
        has_end = any(isinstance(c, _End) for c in children)
        program = SpecProgram(header[0], tuple(commands), header[1])
        return program, has_end

    def header(self, meta, children):
        return children[1], _span_of(meta)

    def end(self, meta, children):
        return _End()

    def name_value(self, meta, children):
        return str(children[0])

    def string_value(self, meta, children):
        return str(children[0])[1:-1]

    def signed_number(self, meta, children):
        value = _number(children[-1])
        if len(children) == 2 and str(children[0]) == '-':
            value = -value
        return value

    def param(self, meta, children):
        values = [c for c in children if isinstance(c, float)]
        return values[0] if values else None

    # row expressions

    def comparison(self, meta, children):
        feature, op, value = children
        return Compare(str(feature), str(op), value, _span_of(meta))

    def in_set(self, meta, children):
        return InSet(str(children[0]), children[2], False, _span_of(meta))

    def not_in_set(self, meta, children):
        return InSet(str(children[0]), children[3], True, _span_of(meta))

    def value_set(self, meta, children):
        return tuple(c for c in children if c is not None)

    def and_expr(self, meta, children):
        return And(children[0], children[2], _span_of(meta))

    def or_expr(self, meta, children):
        return Or(children[0], children[2], _span_of(meta))

    # statistical expressions

    def const(self, meta, children):
        return Const(_number(children[0]), _span_of(meta))

    def feature(self, meta, children):
        return Feature(str(children[0]), _span_of(meta))

    def binary(self, meta, children):
        left, op, right = children
        return Arith(str(op), left, right, _span_of(meta))

    def negate(self, meta, children):
        op, operand = children
        if str(op) == '+':
            return operand
        if isinstance(operand, Const):
            return Const(-operand.value, _span_of(meta))
        return Arith('*', Const(-1.0), operand, _span_of(meta))

    def stat_op(self, meta, children):
        kind, term, condition = children
        return StatOp(str(kind).upper(), term, condition, _span_of(meta))

    def rel(self, meta, children):
        left, op, right = children
        return Rel(str(op), left, right, _span_of(meta))

    def logic_and(self, meta, children):
        return Logic('AND', children[0], children[2], _span_of(meta))

    def logic_or(self, meta, children):
        return Logic('OR', children[0], children[2], _span_of(meta))

    # commands

    def kwargs(self, meta, children):
        return tuple(children)

    def kwarg(self, meta, children):
        key, _, value = children
        return str(key).lower(), value

    def row_command(self, meta, children):
        action, _, weight, expr = children
        return RowConstraint(str(action).upper(), expr, weight, _span_of(meta))

    def implication_command(self, meta, children):
        action, _, weight, lhs, _, rhs = children
        return Implication(str(action).upper(), lhs, rhs, weight, _span_of(meta))

    def statistical_command(self, meta, children):
        action, _, weight, expr = children
        return Statistical(str(action).upper(), expr, weight, _span_of(meta))

    def _downstream(self, meta, children, category, kinds):
        action, _, weight, name, args = children
        kind = str(name).lower()
        if kind not in kinds:
            raise ProgramSyntaxError('unknown {} objective {}, expected one of {}'.format(
                category, name, ', '.join(k.upper() for k in kinds)), _token_span(name))
        return Downstream(str(action).upper(), category, kind, args or (), weight, _span_of(meta))

    def fairness_command(self, meta, children):
        return self._downstream(meta, children, 'fairness', FAIRNESS_KINDS)

    def utility_command(self, meta, children):
        return self._downstream(meta, children, 'utility', UTILITY_KINDS)

    def dp_command(self, meta, children):
        action, _, args = children
        values = dict(args)
        span = _span_of(meta)
        unknown = set(values) - {'epsilon', 'delta'}
        if unknown or 'epsilon' not in values or 'delta' not in values:
            raise ProgramSyntaxError('differential privacy takes EPSILON and DELTA', span)
        try:
            epsilon = _number(values['epsilon']) if isinstance(values['epsilon'], str) else float(values['epsilon'])
            delta = float(values['delta'])
        except (TypeError, ValueError):
            raise ProgramSyntaxError('EPSILON and DELTA must be numbers', span)
        return DPCommand(epsilon, delta, str(action).upper(), span)


class _End(object):
    pass


def _eof_span(text):
    lines = text.split('\n')
    return Span(len(lines), len(lines[-1]) + 1)


def parse(text):
    """program text to SpecProgram, raises ProgramSyntaxError, MissingEnd, DuplicateDP or MisplacedDP"""
    try:
        tree = get_parser().parse(text)
    except UnexpectedEOF as e:
        raise MissingEnd('program ends before END;', _eof_span(text)) if _lacks_end(text) else \
            ProgramSyntaxError('unexpected end of program, expected {}'.format(_expected(e)), _eof_span(text))
    except UnexpectedInput as e:
        raise ProgramSyntaxError('unexpected input {!r}'.format(_near(text, e)), Span(e.line, e.column))
    try:
        program, has_end = ProgramBuilder().transform(tree)
    except VisitError as e:
        if isinstance(e.orig_exc, ProgramError):
            raise e.orig_exc
        raise
    if not has_end:
        raise MissingEnd('program does not end with END;', _eof_span(text))
    check_dp(program)
    return program


def _lacks_end(text):
    return re.search(r'\bEND\s*;', text, re.IGNORECASE) is None


def _expected(e):
    expected = sorted(getattr(e, 'expected', None) or [])
    return ', '.join(str(x) for x in expected) or 'more input'


def _near(text, e):
    pos = getattr(e, 'pos_in_stream', None)
    if pos is None:
        return ''
    return text[pos:pos + 20].split('\n')[0]


def check_dp(program):
    dp_positions = [i for i, c in enumerate(program.commands) if isinstance(c, DPCommand)]
    if len(dp_positions) > 1:
        raise DuplicateDP('a program may ensure differential privacy only once',
                          program.commands[dp_positions[1]].span)
    if dp_positions and dp_positions[0] != 0:
        raise MisplacedDP('differential privacy must be the first command',
                          program.commands[dp_positions[0]].span)


def parse_file(path):
    with open(path, encoding='utf-8') as f:
        return parse(f.read())


# formatting

ROW_PREC = {Or: 1, And: 2}
LOGIC_PREC = {'OR': 1, 'AND': 2}
ARITH_PREC = {'+': 4, '-': 4, '*': 5, '/': 5}


def format_value(value):
    if isinstance(value, tuple):
        return '{' + ', '.join(format_value(v) for v in value) + '}'
    if isinstance(value, float):
        return format_number(value)
    if _NAME.match(value) and value.upper() not in KEYWORDS and value.lower() not in ('inf', 'infinity'):
        return value
    quote = "'" if '"' in value else '"'
    return quote + value + quote


def _row_prec(expr):
    return ROW_PREC.get(type(expr), 3)


def format_row(expr):
    if isinstance(expr, Compare):
        return '{} {} {}'.format(expr.feature, expr.op, format_value(expr.value))
    if isinstance(expr, InSet):
        return '{} {} {}'.format(expr.feature, 'not in' if expr.negated else 'in', format_value(expr.values))
    prec = _row_prec(expr)
    keyword = 'AND' if isinstance(expr, And) else 'OR'
    left = format_row(expr.left)
    right = format_row(expr.right)
    if _row_prec(expr.left) < prec:
        left = '(' + left + ')'
    if _row_prec(expr.right) <= prec:
        right = '(' + right + ')'
    return '{} {} {}'.format(left, keyword, right)


def _stat_prec(expr):
    if isinstance(expr, Logic):
        return LOGIC_PREC[expr.op]
    if isinstance(expr, Rel):
        return 3
    if isinstance(expr, Arith):
        return ARITH_PREC[expr.op]
    if isinstance(expr, Const) and expr.value < 0:
        return 6
    return 7


def format_stat(expr):
    if isinstance(expr, Const):
        return format_number(expr.value)
    if isinstance(expr, Feature):
        return expr.name
    if isinstance(expr, StatOp):
        inner = format_stat(expr.term)
        if expr.condition is not None:
            inner += ' | ' + format_row(expr.condition)
        return '{}[{}]'.format(expr.kind, inner)
    prec = _stat_prec(expr)
    left = format_stat(expr.left)
    right = format_stat(expr.right)
    if _stat_prec(expr.left) < prec:
        left = '(' + left + ')'
    if _stat_prec(expr.right) <= prec:
        right = '(' + right + ')'
    return '{} {} {}'.format(left, expr.op, right)


def _param(weight):
    return '' if weight is None else ' PARAM {}'.format(format_number(weight))


def format_command(command):
    if isinstance(command, DPCommand):
        return '{}: DIFFERENTIAL PRIVACY: EPSILON={}, DELTA={};'.format(
            command.action, format_number(command.epsilon), format_number(command.delta))
    if isinstance(command, RowConstraint):
        return '{}: ROW CONSTRAINT{}: {};'.format(command.action, _param(command.weight), format_row(command.expr))
    if isinstance(command, Implication):
        return '{}: IMPLICATION{}: {} IMPLIES {};'.format(
            command.action, _param(command.weight), format_row(command.lhs), format_row(command.rhs))
    if isinstance(command, Statistical):
        return '{}: STATISTICAL{}: {};'.format(command.action, _param(command.weight), format_stat(command.expr))
    args = ', '.join('{}={}'.format(k, format_value(v)) for k, v in command.args)
    return '{}: {}{}: {}({});'.format(command.action, command.category.upper(), _param(command.weight),
                                      command.kind.upper(), args)


def format_program(program):
    lines = ['SYNTHESIZE: {};'.format(format_value(program.source))]
    lines.extend('    ' + format_command(c) for c in program.commands)
    lines.append('END;')
    return '\n'.join(lines) + '\n'
