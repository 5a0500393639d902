"""Exception classes raised across the toolkit.

Every error derives from :class:`TriggerError` so the CLI can report a single
machine-parsable line ``<ClassName>: <message>`` and exit nonzero.
"""


class TriggerError(Exception):
    pass


# corpus
class MalformedLine(TriggerError):
    pass


class OffsetMismatch(TriggerError):
    pass


class EmptyCorpus(TriggerError):
    pass


class MissingFile(TriggerError):
    pass


# autodiff
class ShapeMismatch(TriggerError):
    pass


class InvalidRate(TriggerError):
    pass


class NotScalarLoss(TriggerError):
    pass


# model
class IndexOutOfRange(TriggerError, IndexError):
    pass


class EmptySequence(TriggerError):
    pass


class CheckpointError(TriggerError):
    pass


# training
class DimensionMismatch(TriggerError):
    pass


class MalformedEntry(TriggerError):
    pass


class NonFiniteGradient(TriggerError):
    pass


class EmptyTrainSet(TriggerError):
    pass


# evaluation
class LengthMismatch(TriggerError):
    pass


class UnmappedLabel(TriggerError):
    pass


class VocabularyMismatch(TriggerError):
    pass


# cli / config
class ConfigError(TriggerError):
    pass
