"""Exception hierarchy.

Every error raised deliberately by the package derives from ``LamppError``.
The ``exit_code`` attribute is what the command-line front end returns.
"""


class LamppError(Exception):
    exit_code = 4


class ValidationError(LamppError, ValueError):
    """Bad input: malformed tables, vocabularies, files or arguments."""

    exit_code = 2


class ProviderError(LamppError, RuntimeError):
    """The token-probability service misbehaved."""

    exit_code = 3


class InvariantViolation(LamppError, AssertionError):
    exit_code = 4


# prior-core
class DegenerateScore(ValidationError):
    pass


class IncompleteGrid(ValidationError):
    pass


class DegenerateRow(ValidationError):
    pass


class EmptyEnvironment(ValidationError):
    pass


class BadLambda(ValidationError):
    pass


class EmptyVocab(ValidationError):
    pass


class UnknownLabel(ValidationError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


# lm-bridge
class TemplateError(ValidationError):
    pass


class ScoringUnavailable(ProviderError):
    pass


class ProtocolViolation(ProviderError):
    pass


# segmentation
class OracleTooLarge(ValidationError):
    pass


class SegmentMismatch(ValidationError):
    pass


# navigation
class Exhausted(ValidationError):
    pass


class NoEpisodes(ValidationError):
    pass


# video
class DegeneratePosterior(ValidationError):
    def __init__(self, message, action=None):
        super().__init__(message)
        self.action = action


class PriorTooWeak(ValidationError):
    pass


class EmptySequence(ValidationError):
    pass


class VideoMismatch(ValidationError):
    pass


class NothingToHoldOut(ValidationError):
    pass


# reports
class ReportMismatch(ValidationError):
    pass
