"""
Exception hierarchy shared by all replenlab modules.

Every error raised on purpose derives from :class:`ReplenlabError` so the
command line can turn it into a one-line diagnostic.
"""


class ReplenlabError(Exception):
    """ base class of all replenlab errors. """


class UsageError(ReplenlabError):
    """ invalid configuration or command line usage. """


class DomainError(ReplenlabError, ValueError):
    """ argument outside of its valid domain. """


class SizeError(DomainError):
    """ instance too large for an exhaustive method. """


class InfeasibleError(DomainError):
    """ selection instance whose loss budget cannot be met.

    :param min_loss: the minimum attainable total loss (cents).
    :param budget: the loss budget of the instance (cents).
    """

    def __init__(self, min_loss, budget):
        self.min_loss = min_loss
        self.budget = budget
        super().__init__(
            "infeasible selection: minimum attainable loss {} exceeds budget {:.2f}".format(
                min_loss, budget
            )
        )


class ParseError(ReplenlabError):
    """ malformed input file, the message names the file and line. """

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        super().__init__("{}:{}: {}".format(path, lineno, message))


class WriteError(ReplenlabError, OSError):
    """ failure writing an artifact. """


class ShapeError(ReplenlabError, ValueError):
    """ array widths do not match the configured shapes. """


class NumericError(ReplenlabError, ArithmeticError):
    """ non-finite values where finite ones are required.

    :param sample: optional description of the offending sample.
    """

    def __init__(self, message, sample=None):
        self.sample = sample
        if sample is not None:
            message = "{} (sample: {!r})".format(message, sample)
        super().__init__(message)


class TrainingDiverged(NumericError):
    """ loss became NaN during training. """


class DataError(ReplenlabError, ValueError):
    """ training data violates the model contract. """


class ModelFormatError(ReplenlabError):
    """ model container with an unknown format or version. """


class StageError(ReplenlabError):
    """ a pipeline stage failed or misses a prerequisite artifact. """

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__("stage {!r} failed: {}".format(stage, cause))


class WorkerCrashed(ReplenlabError):
    """ distributed simulation lost more workers than allowed. """


class CalibrationWarning(UserWarning):
    """ turnover target not bracketed by the alpha endpoints. """


class LabelingWarning(UserWarning):
    """ a labeling epoch fell back to the min-loss selection. """


class RewardWarning(UserWarning):
    """ simulation reward could not be computed for a sample. """


class PanelWarning(UserWarning):
    """ demand file without a row for some (sku, day); the gaps read as zero demand. """
