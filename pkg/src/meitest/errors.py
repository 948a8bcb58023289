"""Exception hierarchy shared by the statistical modules and the CLI."""


class MeiError(Exception):
    """Base class for every error raised by this package."""


class InputError(MeiError, ValueError):
    """Malformed or inconsistent input data (CLI exit code 2)."""


class ConfigError(MeiError, ValueError):
    """Invalid configuration or column mapping (CLI exit code 2)."""


class TableParseError(InputError):
    """Row-level validation failures collected while parsing a table.

    ``row_errors`` holds ``(line_number, message)`` pairs in file order.
    """

    def __init__(self, row_errors):
        self.row_errors = list(row_errors)
        head = "; ".join(f"line {ln}: {msg}" for ln, msg in self.row_errors[:5])
        more = len(self.row_errors) - 5
        if more > 0:
            head += f"; ... ({more} more)"
        super().__init__(f"{len(self.row_errors)} invalid row(s): {head}")


class StatisticalError(MeiError):
    """A statistical degeneracy that prevents a test from being computed (exit 3)."""


class InsufficientInstruments(StatisticalError):
    pass


class DegenerateDenominator(StatisticalError):
    pass


class DegenerateVariance(StatisticalError):
    pass


class SingularDesign(StatisticalError):
    pass


class AlignmentError(StatisticalError):
    pass


class NumericError(StatisticalError):
    pass
