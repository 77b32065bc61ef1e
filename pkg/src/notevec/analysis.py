"""Neighbour reports, pitch naming, projector exports and SVG scatter plots."""

import re
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from .errors import KTooLarge, LengthMismatch, PitchOutOfRange, UnknownToken, WrongDimensionality, ZeroVector

PITCH_CLASSES = ("C", "C♯", "D", "D♯", "E", "F", "F♯", "G", "G♯", "A", "A♯", "B")
_NAME_RE = re.compile(r"^([A-Ga-g])(♯|#)?(\d{1,2})$")


def note_name(pitch):
    """MIDI pitch to name with octave = pitch // 12, so 60 is "C5"."""
    if isinstance(pitch, bool) or not isinstance(pitch, (int, np.integer)) or not 0 <= pitch <= 127:
        raise PitchOutOfRange(f"pitch {pitch!r} outside [0, 127]")
    octave, pc = divmod(int(pitch), 12)
    return f"{PITCH_CLASSES[pc]}{octave}"


def parse_note_name(name):
    """Inverse of :func:`note_name`; ``#`` is accepted for ``♯``."""
    m = _NAME_RE.match(name.strip())
    if m:
        letter, sharp, octave = m.groups()
        pc_name = letter.upper() + ("♯" if sharp else "")
        if pc_name in PITCH_CLASSES:
            pitch = int(octave) * 12 + PITCH_CLASSES.index(pc_name)
            if 0 <= pitch <= 127:
                return pitch
    raise ValueError(
        f"cannot parse note name {name!r}; valid names are "
        f"{', '.join(PITCH_CLASSES)} followed by an octave 0-10 (C0 .. G10), e.g. C5 for pitch 60"
    )


def token_label(token, variant):
    if variant == "interval":
        return str(int(token))
    return note_name(int(token))


def parse_token(text, variant):
    """Query text to a token value: note names or integers for note variants."""
    text = text.strip()
    if re.fullmatch(r"[+-]?\d+", text):
        return int(text)
    if variant == "interval":
        raise ValueError(f"interval queries must be signed integers, got {text!r}")
    return parse_note_name(text)


def cosine_distance(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine distance is undefined for a zero vector")
    return float(min(2.0, max(0.0, 1.0 - float(a @ b) / (na * nb))))


@dataclass(frozen=True)
class NeighborReport:
    query_token: int
    neighbors: tuple  # ((token, distance), ...), nearest first


def nearest_neighbors(embeddings, query_token, k=10):
    """The k tokens closest to ``query_token`` by cosine distance.

    Ties are broken by ascending token value.
    """
    vocab = embeddings.vocabulary
    if query_token not in vocab:
        raise UnknownToken(f"token {query_token!r} is not in the vocabulary")
    V = len(vocab)
    if not 1 <= k <= V - 1:
        raise KTooLarge(f"k={k} must lie in [1, {V - 1}]")
    rows = np.asarray(embeddings.rows, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ZeroVector(f"embedding of token {vocab.tokens[zero[0]]} is the zero vector")
    q = vocab.index_of[query_token]
    unit = rows / norms[:, None]
    dist = np.clip(1.0 - unit @ unit[q], 0.0, 2.0)
    candidates = [(float(dist[i]), tok) for i, tok in enumerate(vocab.tokens) if i != q]
    candidates.sort()
    return NeighborReport(query_token, tuple((tok, d) for d, tok in candidates[:k]))


def report_table(embeddings, variant, query_token, k=10):
    """Plain-text neighbour table: Total, Selection, then k (name, Cos) rows."""
    report = nearest_neighbors(embeddings, query_token, k)
    rows = [(token_label(t, variant), f"{d:.3f}") for t, d in report.neighbors]
    head = "Interval" if variant == "interval" else "Note"
    width = max([len(head), len("Selection:")] + [len(name) for name, _ in rows]) + 2
    lines = [
        f"{'Total:':<{width}}{len(embeddings)}",
        f"{'Selection:':<{width}}{token_label(query_token, variant)}",
        f"{head:<{width}}Cos",
    ]
    lines += [f"{name:<{width}}{d}" for name, d in rows]
    return "\n".join(lines) + "\n"


def report_csv(embeddings, variant, query_token, k=10):
    report = nearest_neighbors(embeddings, query_token, k)
    lines = ["rank,token,name,cosine_distance"]
    for rank, (t, d) in enumerate(report.neighbors, start=1):
        lines.append(f"{rank},{t},{token_label(t, variant)},{d:.3f}")
    return "\n".join(lines) + "\n"


# -- projector TSV ---------------------------------------------------------

def _fmt(value):
    # shortest repr that round-trips at the array's own precision
    return str(value)


def export_projector(rows, labels, tokens=None):
    """Vectors TSV and metadata TSV in the embedding-projector layout.

    The metadata file has a ``label<TAB>token`` header so projector tools
    read it as a labelled table.
    """
    rows = np.asarray(rows)
    if not np.issubdtype(rows.dtype, np.floating):
        rows = rows.astype(np.float64)
    labels = list(labels)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise LengthMismatch("nothing to export: embedding matrix is empty")
    if len(labels) != rows.shape[0]:
        raise LengthMismatch(f"{len(labels)} labels for {rows.shape[0]} rows")
    tokens = list(tokens) if tokens is not None else list(range(len(labels)))
    if len(tokens) != len(labels):
        raise LengthMismatch("token count differs from label count")
    vectors = "".join("\t".join(_fmt(v) for v in row) + "\n" for row in rows)
    meta = ["label\ttoken"] + [f"{lab}\t{tok}" for lab, tok in zip(labels, tokens)]
    return vectors, "\n".join(meta) + "\n"


def import_projector(vectors_text, metadata_text, dtype=np.float32):
    rows = [[float(v) for v in line.split("\t")] for line in vectors_text.splitlines()]
    meta = metadata_text.splitlines()
    if not meta or meta[0] != "label\ttoken":
        raise ValueError("metadata header must be 'label<TAB>token'")
    labels, tokens = zip(*(line.split("\t") for line in meta[1:])) if len(meta) > 1 else ((), ())
    if len(labels) != len(rows):
        raise LengthMismatch(f"{len(labels)} labels for {len(rows)} vectors")
    return np.array(rows, dtype=dtype), list(labels), [int(t) for t in tokens]


# -- SVG -------------------------------------------------------------------

_SVG_SIZE = 640
_MARGIN = 40


def plot_projection(projection, highlight=None, neighbors=(), title=None):
    """Render a 2-D projection as an SVG scatter with text labels.

    ``highlight`` names the query label; ``neighbors`` lists labels drawn as
    its neighbourhood.  Output is byte-stable for identical input.
    """
    if projection.dims != 2:
        raise WrongDimensionality("only 2-D projections can be plotted")
    labels = [str(l) for l in projection.labels]
    known = set(labels)
    for name in ([highlight] if highlight is not None else []) + list(neighbors):
        if str(name) not in known:
            raise UnknownToken(f"cannot highlight {name!r}: not a projected token")
    neighbors = {str(n) for n in neighbors}

    Y = np.asarray(projection.Y, dtype=np.float64)
    lo, hi = Y.min(axis=0), Y.max(axis=0)
    span = np.where(hi - lo > 0, hi - lo, 1.0)
    inner = _SVG_SIZE - 2 * _MARGIN
    xs = _MARGIN + (Y[:, 0] - lo[0]) / span[0] * inner
    ys = _SVG_SIZE - _MARGIN - (Y[:, 1] - lo[1]) / span[1] * inner
    if Y.shape[0] == 1 or np.all(hi - lo == 0):
        xs = np.full(Y.shape[0], _SVG_SIZE / 2)
        ys = np.full(Y.shape[0], _SVG_SIZE / 2)

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_SVG_SIZE}" '
        f'height="{_SVG_SIZE}" viewBox="0 0 {_SVG_SIZE} {_SVG_SIZE}">',
        f'<rect x="0" y="0" width="{_SVG_SIZE}" height="{_SVG_SIZE}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{_SVG_SIZE / 2:.2f}" y="20.00" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="14">{escape(title)}</text>')
    if highlight is not None:
        q = labels.index(str(highlight))
        for i, lab in enumerate(labels):
            if lab in neighbors:
                out.append(f'<line x1="{xs[q]:.2f}" y1="{ys[q]:.2f}" x2="{xs[i]:.2f}" '
                           f'y2="{ys[i]:.2f}" stroke="#f4a261" stroke-width="0.8"/>')
    for i, lab in enumerate(labels):
        if highlight is not None and lab == str(highlight):
            fill, r, cls = "#d62828", 5, "query"
        elif lab in neighbors:
            fill, r, cls = "#f77f00", 4, "neighbor"
        else:
            fill, r, cls = "#457b9d", 3, "point"
        out.append(f'<circle class="{cls}" cx="{xs[i]:.2f}" cy="{ys[i]:.2f}" r="{r}" fill="{fill}"/>')
        out.append(f'<text x="{xs[i] + 5:.2f}" y="{ys[i] - 5:.2f}" font-family="sans-serif" '
                   f'font-size="9">{escape(lab)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
