"""Exception hierarchy shared across the package."""


class HmfrontError(Exception):
    """Base class for all package errors."""


class DataError(HmfrontError):
    """Malformed or non-finite input data."""


class InsufficientDataError(DataError):
    """Too few observations to estimate the requested statistics."""


class ShapeError(HmfrontError):
    """Dimension mismatch between weights, moments or objective vectors."""


class ParameterError(HmfrontError):
    """Invalid configuration or method parameter."""


class SolverError(HmfrontError):
    """An optimization subproblem failed in a way the caller cannot recover."""


class MultistartError(SolverError):
    """Every start of a multistart solve failed.

    Carries the per-start statuses so the caller can report them.
    """

    def __init__(self, statuses):
        self.statuses = tuple(statuses)
        super().__init__(
            "all %d starts failed: %s" % (len(self.statuses), ", ".join(self.statuses))
        )


class CorrectorStallError(SolverError):
    """Corrector found a descent certificate but no acceptable step."""


class MeasureUndefinedError(HmfrontError):
    """A front-quality measure was requested on too small a point set."""


class ConfigError(ParameterError):
    """Invalid CLI configuration document or flag combination."""
