"""Token datasets built from melodies: control, transposed x12 and interval."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

from .errors import CorpusFormatError, EmptyCorpus, EmptySequence, PitchOutOfRange, UntransposablePiece
from .midi import MAX_PITCH, MIN_PITCH, PitchSequence

log = logging.getLogger(__name__)

VARIANTS = ("control", "db12", "interval")
NOTE_VARIANTS = ("control", "db12")
OCTAVE = 12


@dataclass(frozen=True)
class Vocabulary:
    """Sorted distinct token values and their inverse index map."""

    tokens: tuple
    index_of: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tokens = tuple(int(t) for t in self.tokens)
        if list(tokens) != sorted(set(tokens)):
            raise ValueError("vocabulary tokens must be distinct and ascending")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "index_of", {t: i for i, t in enumerate(tokens)})

    @classmethod
    def from_sequences(cls, sequences):
        return cls(sorted({int(t) for seq in sequences for t in seq}))

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index_of

    def encode(self, seq):
        return [self.index_of[t] for t in seq]

    def decode(self, indices):
        return [self.tokens[i] for i in indices]


@dataclass(frozen=True)
class TrainingCorpus:
    variant: str
    sequences: list
    vocabulary: Vocabulary

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        size = len(self.vocabulary)
        # interval pieces of two notes give length-1 sequences: kept for the
        # vocabulary, they simply contribute no training pairs
        min_len = 1 if self.variant == "interval" else 2
        for seq in self.sequences:
            if len(seq) < min_len:
                raise ValueError(f"sequence shorter than {min_len} in {self.variant} corpus")
            if any(not 0 <= i < size for i in seq):
                raise ValueError("sequence index outside vocabulary")

    @property
    def is_note_variant(self):
        return self.variant in NOTE_VARIANTS

    def token_sequences(self):
        return [self.vocabulary.decode(seq) for seq in self.sequences]


def _indexed(variant, token_seqs):
    vocab = Vocabulary.from_sequences(token_seqs)
    return TrainingCorpus(variant, [vocab.encode(s) for s in token_seqs], vocab)


def _require_pieces(pieces):
    pieces = list(pieces)
    if not pieces:
        raise EmptyCorpus("no pieces given")
    return pieces


def build_control(pieces):
    pieces = _require_pieces(pieces)
    return _indexed("control", [list(p.pitches) for p in pieces])


def transpose(piece, shift):
    """Shift every pitch by ``shift`` semitones, folding by an octave if out of range."""
    if not -127 <= shift <= 127:
        raise ValueError(f"shift {shift} outside [-127, 127]")
    lo, hi = min(piece.pitches), max(piece.pitches)
    if hi + shift > MAX_PITCH:
        shift -= OCTAVE
    elif lo + shift < MIN_PITCH:
        shift += OCTAVE
    if hi + shift > MAX_PITCH or lo + shift < MIN_PITCH:
        raise UntransposablePiece(
            f"{piece.source_id or 'piece'} (range {lo}-{hi}) cannot be shifted by {shift} within 0-127"
        )
    return PitchSequence([p + shift for p in piece.pitches], source_id=piece.source_id)


def build_db12(pieces):
    """Each piece in all twelve transpositions (shift 0 plus shifts 1..11).

    Pieces that cannot take every shift are left out entirely so that the
    sequence count stays twelve times the number of pieces kept.
    """
    pieces = _require_pieces(pieces)
    token_seqs = []
    for piece in pieces:
        try:
            shifted = [transpose(piece, s) for s in range(OCTAVE)]
        except UntransposablePiece as exc:
            log.warning("skipping from db12: %s", exc)
            continue
        token_seqs.extend(list(p.pitches) for p in shifted)
    if not token_seqs:
        raise EmptyCorpus("no transposable pieces")
    return _indexed("db12", token_seqs)


def to_intervals(piece):
    pitches = list(piece.pitches if isinstance(piece, PitchSequence) else piece)
    if len(pitches) < 2:
        raise EmptySequence("need at least 2 pitches to form an interval")
    return [b - a for a, b in zip(pitches, pitches[1:])]


def from_intervals(intervals, start):
    """Rebuild pitches from intervals; an empty interval list gives ``[start]``."""
    pitches = [int(start)]
    for step in intervals:
        pitches.append(pitches[-1] + int(step))
    bad = [p for p in pitches if not MIN_PITCH <= p <= MAX_PITCH]
    if bad:
        raise PitchOutOfRange(f"reconstructed pitch {bad[0]} outside [0, 127]")
    return pitches


def build_interval(pieces):
    pieces = _require_pieces(pieces)
    return _indexed("interval", [to_intervals(p) for p in pieces])


BUILDERS = {"control": build_control, "db12": build_db12, "interval": build_interval}


def build(variant, pieces):
    try:
        builder = BUILDERS[variant]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}") from None
    return builder(pieces)


# -- text serialization ----------------------------------------------------
#
#   #variant=<control|db12|interval>
#   60 62 67 65
#   ...

def dumps_sequences(variant, token_seqs):
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    lines = [f"#variant={variant}"]
    lines += [" ".join(str(int(t)) for t in seq) for seq in token_seqs]
    return "\n".join(lines) + "\n"


def loads_sequences(text):
    """Parse the corpus text format into ``(variant, token sequences)``."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or not lines[0].startswith("#variant="):
        raise CorpusFormatError("first line must be '#variant=<name>'")
    variant = lines[0][len("#variant="):]
    if variant not in VARIANTS:
        raise CorpusFormatError(f"unknown variant {variant!r}")
    seqs = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            seqs.append([int(tok) for tok in line.split(" ")])
        except ValueError:
            raise CorpusFormatError(f"line {lineno}: expected space-separated integers") from None
    return variant, seqs


def dumps_corpus(corpus):
    return dumps_sequences(corpus.variant, corpus.token_sequences())


def loads_corpus(text):
    variant, seqs = loads_sequences(text)
    return _indexed(variant, seqs)


def save_corpus(corpus, path):
    Path(path).write_text(dumps_corpus(corpus), encoding="utf-8")


def load_corpus(path):
    return loads_corpus(Path(path).read_text(encoding="utf-8"))


def save_pieces(pieces, path):
    Path(path).write_text(dumps_sequences("control", [p.pitches for p in pieces]), encoding="utf-8")


def load_pieces(path):
    """Read a pitch file (control-format corpus) back as PitchSequences."""
    path = Path(path)
    variant, seqs = loads_sequences(path.read_text(encoding="utf-8"))
    if variant != "control":
        raise CorpusFormatError(f"{path}: expected raw pitches (#variant=control), got {variant}")
    return [PitchSequence(s, source_id=f"{path.name}:{i + 2}") for i, s in enumerate(seqs)]
