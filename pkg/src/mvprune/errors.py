"""Exception hierarchy shared across the package.

Every error carries a stable machine-readable ``code`` so callers (CLI,
bindings) can map failures without parsing messages.
"""


class MvpruneError(Exception):
    """Base error with a stable ``code`` identifier."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class ValidationError(MvpruneError):
    """Domain invariant violated.

    Codes: DIM_MISMATCH, NONFINITE_VALUE, DUPLICATE_LABEL, K_OUT_OF_RANGE,
    CONFIG_INVALID, SELECTION_MISMATCH.
    """


class FormatError(MvpruneError):
    """On-disk data could not be parsed. Codes: MALFORMED, IO_ERROR."""


class OracleFailure(MvpruneError):
    """Reward oracle raised or returned a non-finite value."""

    def __init__(self, message: str):
        super().__init__("ORACLE_FAILURE", message)


class NoSolution(MvpruneError):
    """A calibration target cannot be bracketed."""

    def __init__(self, message: str):
        super().__init__("NO_SOLUTION", message)


class InfeasibleBudget(MvpruneError):
    """No candidate allocation satisfies the token budget."""

    def __init__(self, message: str):
        super().__init__("INFEASIBLE_BUDGET", message)
