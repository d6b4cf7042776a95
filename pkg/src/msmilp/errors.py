"""Exception hierarchy shared by all solver modules."""


class MsmilpError(Exception):
    """Base class for every error raised by this package."""


class ParseError(MsmilpError):
    """Malformed instance file or field.

    ``line`` and ``column`` point into the source text when known.
    """

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f"line {line}"
            if column is not None:
                where += f", column {column}"
            where += ": "
        super().__init__(where + message)


class DimensionError(MsmilpError):
    pass


class AssumptionError(MsmilpError):
    """An instance violates boundedness or integer-linking requirements."""


class NumericOverflow(MsmilpError):
    """Rational magnitudes grew past the configured limit."""


class NodeLimit(MsmilpError):
    pass


class TreeIncomplete(MsmilpError):
    pass


class UnboundedError(MsmilpError):
    pass


class IterationLimit(MsmilpError):
    pass


class InfeasibleMaster(MsmilpError):
    pass


class CapExceeded(MsmilpError):
    pass


class UnboundedBoxError(MsmilpError):
    pass


class DegenerateVertexError(MsmilpError):
    pass


class ContractError(MsmilpError):
    """A documented precondition was violated by the caller."""
