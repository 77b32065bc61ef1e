"""Exception hierarchy shared by all notevec modules."""


class NotevecError(Exception):
    """Base class for every error raised by this package."""


# midi ingestion
class MidiError(NotevecError):
    pass


class MalformedHeader(MidiError):
    pass


class TruncatedChunk(MidiError):
    pass


class UnsupportedFormat(MidiError):
    pass


class EmptySequence(NotevecError):
    pass


# corpus
class EmptyCorpus(NotevecError):
    pass


class UntransposablePiece(NotevecError):
    pass


class PitchOutOfRange(NotevecError, ValueError):
    pass


class CorpusFormatError(NotevecError):
    pass


# seqmodel
class IndexOutOfVocabulary(NotevecError, IndexError):
    pass


class SequenceTooShort(NotevecError):
    pass


class CheckpointError(NotevecError):
    pass


# tsne
class DegenerateRow(NotevecError):
    pass


class DuplicatePoints(NotevecError):
    pass


class NonFiniteGradient(NotevecError):
    def __init__(self, iteration):
        super().__init__(f"non-finite t-SNE gradient at iteration {iteration}")
        self.iteration = iteration


# analysis
class ZeroVector(NotevecError, ValueError):
    pass


class UnknownToken(NotevecError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class KTooLarge(NotevecError, ValueError):
    pass


class LengthMismatch(NotevecError, ValueError):
    pass


class WrongDimensionality(NotevecError, ValueError):
    pass
