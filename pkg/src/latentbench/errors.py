"""Exception hierarchy shared across the package."""


class LatentBenchError(Exception):
    """Base class for every error raised by latentbench."""


class InvalidInput(LatentBenchError, ValueError):
    """Arguments violate an operation's preconditions."""


class MalformedFile(LatentBenchError):
    """A file does not follow its declared on-disk format."""


class NonFiniteValue(MalformedFile):
    """A parsed matrix contains NaN or Inf.

    ``row`` and ``col`` are zero-based positions of the first offending entry.
    """

    def __init__(self, message, row=None, col=None):
        super().__init__(message)
        self.row = row
        self.col = col


class NumericalFailure(LatentBenchError, ArithmeticError):
    """An algorithm hit a numerically invalid state (e.g. non-PSD kernel)."""


class UnsupportedOperation(LatentBenchError):
    """A fitted model lacks the requested capability."""


class TrainingFailure(LatentBenchError):
    """Iterative training diverged."""

    def __init__(self, message, epoch=None, fold=None):
        super().__init__(message)
        self.epoch = epoch
        self.fold = fold


class UndefinedMetric(LatentBenchError, ValueError):
    """A metric is mathematically undefined for the given input."""
