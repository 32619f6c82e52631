"""Exception and warning types shared across the package."""


class SofthornError(Exception):
    """Base class for all package errors."""


class FrozenError(SofthornError):
    """Mutation attempted on a frozen knowledge base."""


class WeightDomainError(SofthornError):
    """Negative weight on a relation that requires nonnegative facts."""


class UnknownSymbolError(SofthornError):
    """Reference to an entity, domain, or constant that was never interned."""


class ParseError(SofthornError):
    """Syntax error in rule-language source."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = ""
        if line is not None:
            loc = f" at line {line}" + (f", column {column}" if column is not None else "")
        super().__init__(message + loc)


class ArityError(ParseError):
    """Atom with an argument count other than two."""


class ValidationError(SofthornError):
    """Base class for program-validation failures."""


class ChainError(ValidationError):
    """Rule body does not form a variable chain from head arg1 to head arg2."""

    def __init__(self, message, variable=None):
        self.variable = variable
        super().__init__(message)


class BuiltinPositionError(ValidationError):
    """The entropy builtin appears anywhere other than the final body atom."""


class UnknownPredicateError(ValidationError):
    """Body predicate resolves to neither facts, rules, nor a builtin."""


class NoBaseCaseError(SofthornError):
    """Recursive predicate has no non-recursive rule to ground the unrolling."""


class ConfigError(SofthornError):
    """Invalid configuration value (depth, weight, optimizer setting, ...)."""


class OracleBudgetError(SofthornError):
    """Proof enumeration exceeded its budget."""


class NormalizationError(SofthornError):
    """Input vector violates a required normalization."""


class EmptySupportError(SofthornError):
    """Softmax requested over an empty structural support."""


class DivergenceError(SofthornError):
    """Training loss became non-finite."""

    def __init__(self, message, epoch=None):
        self.epoch = epoch
        super().__init__(message)


class SplitError(SofthornError):
    """Dataset split cannot be satisfied (e.g. too few examples in a class)."""


class IngestError(SofthornError):
    """Malformed line in an input file."""

    def __init__(self, message, line=None):
        self.line = line
        loc = f" at line {line}" if line is not None else ""
        super().__init__(message + loc)


class NumericalError(SofthornError):
    """Linear-algebra failure (singular kernel matrix, ...)."""


class OffSupportWarning(UserWarning):
    """Cross-entropy target falls outside the structural support."""
