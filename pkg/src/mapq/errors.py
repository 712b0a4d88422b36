"""Exception types shared by the library and the command-line tool."""


class MapqError(Exception):
    """Base class for all library errors."""

    exit_code = 2


class ModelError(MapqError, ValueError):
    """Invalid model description (bad rates, generator rows, capacity, ...).

    Carries the list of individual problems so callers can report all of
    them at once.
    """

    exit_code = 1

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class NumericalError(MapqError, ArithmeticError):
    """A numerical step failed (root tracking, singular solve, divergence)."""

    exit_code = 2
