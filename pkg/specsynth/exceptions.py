"""errors raised by the synthesizer

ValidationError and its subclasses describe bad input (schema, csv, program,
checkpoint); the command line exits with 2 for them and 1 for everything else.
"""


class SynthError(Exception):
    pass


class ValidationError(SynthError):
    pass


# schema and data ingestion

class SchemaError(ValidationError):
    pass


class UnknownColumn(ValidationError):
    pass


class OutOfDomainValue(ValidationError):

    def __init__(self, row, column, cell):
        self.row = row
        self.column = column
        self.cell = cell
        super(OutOfDomainValue, self).__init__(
            'row {}: value {!r} is outside the domain of column {}'.format(row, cell, column))


class RaggedRow(ValidationError):

    def __init__(self, row, expected, found):
        self.row = row
        super(RaggedRow, self).__init__(
            'row {}: expected {} cells, found {}'.format(row, expected, found))


class EmptyTable(SynthError):
    pass


class MissingLabel(ValidationError):
    pass


class WorkloadTooSmall(ValidationError):
    pass


class LengthMismatch(SynthError):
    pass


# automatic differentiation

class ShapeMismatch(SynthError):
    pass


class DomainError(SynthError):
    pass


class NonScalarRoot(SynthError):
    pass


# checkpoints

class SchemaHashMismatch(ValidationError):
    pass


class CorruptCheckpoint(ValidationError):
    pass


# privacy accounting

class InvalidBudget(ValidationError):
    pass


class BudgetExhausted(SynthError):
    pass


# program language

class ProgramError(ValidationError):
    """error in a specification program, located by span when known"""

    def __init__(self, message, span=None):
        self.span = span
        if span is not None:
            message = '{} (line {}, column {})'.format(message, span.line, span.column)
        super(ProgramError, self).__init__(message)


class ProgramSyntaxError(ProgramError):
    pass


class MissingEnd(ProgramSyntaxError):
    pass


class DuplicateDP(ProgramError):
    pass


class MisplacedDP(ProgramError):
    pass


class UnknownFeature(ProgramError):
    pass


class UnknownCategory(ProgramError):
    pass


class TypeMismatch(ProgramError):
    pass


class BinBoundary(ProgramError):
    pass


class ProtectedColumnMissing(ProgramError):
    pass


class NonBinaryTarget(ProgramError):
    pass


# fine tuning, sampling and evaluation

class EmptyProtectedGroup(SynthError):
    pass


class AcceptanceTooLow(SynthError):

    def __init__(self, rate):
        self.rate = rate
        super(AcceptanceTooLow, self).__init__('acceptance rate {:.2e} is too low to fill the sample'.format(rate))


class EmptyGroup(SynthError):
    pass


class SingleClassTrain(SynthError):
    pass


class StageError(SynthError):
    """failure inside one pipeline stage, keeps the stage name for the exit message"""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super(StageError, self).__init__('stage {} failed: {}'.format(stage, cause))
