"""Standard MIDI File reading, reduced to monophonic pitch sequences.

Only the subset needed for melody extraction is decoded: note on/off
messages are paired into :class:`NoteEvent` objects, everything else
(meta, sysex, controllers) is skipped over.  A minimal writer is included
so fixture files can be produced and round-tripped.
"""

import struct
from collections import defaultdict, deque
from dataclasses import dataclass, field
from pathlib import Path

from .errors import EmptySequence, MalformedHeader, TruncatedChunk, UnsupportedFormat

MIN_PITCH = 0
MAX_PITCH = 127

# data byte count for channel voice messages, keyed by high nibble
_CHANNEL_DATA_LEN = {0x8: 2, 0x9: 2, 0xA: 2, 0xB: 2, 0xC: 1, 0xD: 1, 0xE: 2}


@dataclass(frozen=True, order=True)
class NoteEvent:
    pitch: int
    onset_tick: int
    duration_tick: int

    def __post_init__(self):
        if not MIN_PITCH <= self.pitch <= MAX_PITCH:
            raise ValueError(f"pitch {self.pitch} outside [0, 127]")
        if self.onset_tick < 0:
            raise ValueError("onset_tick must be non-negative")
        if self.duration_tick < 1:
            raise ValueError("duration_tick must be >= 1")


@dataclass(frozen=True)
class PitchSequence:
    """An ordered monophonic melody.

    ``chords_dropped`` records whether :func:`to_monophonic` had to discard
    simultaneous notes to produce it.
    """

    pitches: tuple
    source_id: str = ""
    chords_dropped: bool = field(default=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "pitches", tuple(int(p) for p in self.pitches))
        if len(self.pitches) < 2:
            raise EmptySequence(
                f"{self.source_id or 'sequence'}: need at least 2 pitches, got {len(self.pitches)}"
            )
        for p in self.pitches:
            if not MIN_PITCH <= p <= MAX_PITCH:
                raise ValueError(f"pitch {p} outside [0, 127]")

    def __len__(self):
        return len(self.pitches)

    def __iter__(self):
        return iter(self.pitches)


def _read_vlq(data, pos, end):
    value = 0
    for _ in range(4):
        if pos >= end:
            raise TruncatedChunk("variable-length quantity runs past end of track")
        byte = data[pos]
        pos += 1
        value = (value << 7) | (byte & 0x7F)
        if not byte & 0x80:
            return value, pos
    raise TruncatedChunk("variable-length quantity longer than 4 bytes")


def _parse_track(data, pos, end):
    """Decode one MTrk body and return its note events, onset-sorted."""
    tick = 0
    running = None
    # (channel, pitch) -> queue of onset ticks; FIFO pairing for retriggers
    active = defaultdict(deque)
    notes = []

    def close(channel, pitch, at):
        queue = active.get((channel, pitch))
        if not queue:
            return
        onset = queue.popleft()
        if at > onset:
            notes.append(NoteEvent(pitch, onset, at - onset))

    while pos < end:
        delta, pos = _read_vlq(data, pos, end)
        tick += delta
        if pos >= end:
            raise TruncatedChunk("event status missing at end of track")
        status = data[pos]
        if status & 0x80:
            pos += 1
        elif running is None:
            raise MalformedHeader(f"data byte 0x{status:02x} without running status")
        else:
            status = running

        if status == 0xFF:
            running = None
            if pos >= end:
                raise TruncatedChunk("meta event type missing")
            meta_type = data[pos]
            length, pos = _read_vlq(data, pos + 1, end)
            if pos + length > end:
                raise TruncatedChunk("meta event runs past end of track")
            pos += length
            if meta_type == 0x2F:
                break
        elif status in (0xF0, 0xF7):
            running = None
            length, pos = _read_vlq(data, pos, end)
            if pos + length > end:
                raise TruncatedChunk("sysex event runs past end of track")
            pos += length
        elif 0x80 <= status <= 0xEF:
            running = status
            n = _CHANNEL_DATA_LEN[status >> 4]
            if pos + n > end:
                raise TruncatedChunk("channel message runs past end of track")
            args = data[pos:pos + n]
            pos += n
            kind, channel = status >> 4, status & 0x0F
            if kind == 0x9 and args[1] > 0:
                active[(channel, args[0])].append(tick)
            elif kind == 0x8 or kind == 0x9:
                close(channel, args[0], tick)
        else:
            raise MalformedHeader(f"unsupported status byte 0x{status:02x}")

    # notes still sounding at end of track end there
    for (channel, pitch), queue in list(active.items()):
        while queue:
            close(channel, pitch, tick)

    notes.sort(key=lambda n: (n.onset_tick, n.pitch, n.duration_tick))
    return notes


def parse_smf(data):
    """Parse SMF bytes (format 0 or 1) into one list of NoteEvent per track."""
    data = bytes(data)
    if len(data) < 14 or data[:4] != b"MThd":
        raise MalformedHeader("missing MThd header chunk")
    header_len, fmt, ntracks, _division = struct.unpack(">IHHH", data[4:14])
    if header_len != 6:
        raise MalformedHeader(f"header length {header_len}, expected 6")
    if fmt == 2:
        raise UnsupportedFormat("SMF format 2 (sequential tracks) is not supported")
    if fmt not in (0, 1):
        raise MalformedHeader(f"unknown SMF format {fmt}")

    tracks = []
    pos = 14
    while pos < len(data):
        if pos + 8 > len(data):
            raise TruncatedChunk("incomplete chunk header")
        chunk_type = data[pos:pos + 4]
        (length,) = struct.unpack(">I", data[pos + 4:pos + 8])
        body = pos + 8
        if body + length > len(data):
            raise TruncatedChunk(
                f"chunk {chunk_type!r} declares {length} bytes, only {len(data) - body} remain"
            )
        if chunk_type == b"MTrk":
            tracks.append(_parse_track(data, body, body + length))
        pos = body + length

    if len(tracks) != ntracks:
        raise MalformedHeader(f"header declares {ntracks} tracks, found {len(tracks)}")
    return tracks


def to_monophonic(events, source_id=""):
    """Reduce note events to a melody, keeping the highest pitch of each chord."""
    by_onset = {}
    dropped = False
    for ev in sorted(events, key=lambda e: (e.onset_tick, e.pitch)):
        if ev.onset_tick in by_onset:
            dropped = True
        by_onset[ev.onset_tick] = ev.pitch  # sorted by pitch, so last wins = highest
    pitches = [by_onset[t] for t in sorted(by_onset)]
    return PitchSequence(pitches, source_id=source_id, chords_dropped=dropped)


def read_midi(path):
    """Read a .mid file and return ``(pieces, warnings)``.

    Tracks without notes are skipped silently; tracks with a single note
    produce a warning instead of a piece.
    """
    path = Path(path)
    tracks = parse_smf(path.read_bytes())
    pieces, warnings = [], []
    for i, events in enumerate(tracks):
        if not events:
            continue
        source = f"{path.name}#{i}"
        try:
            piece = to_monophonic(events, source_id=source)
        except EmptySequence as exc:
            warnings.append(str(exc))
            continue
        if piece.chords_dropped:
            warnings.append(f"{source}: simultaneous notes reduced to highest pitch")
        pieces.append(piece)
    return pieces, warnings


# -- writing ---------------------------------------------------------------

def _vlq(value):
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append(0x80 | (value & 0x7F))
        value >>= 7
    return bytes(reversed(out))


def _track_bytes(events, channel, velocity):
    # (tick, order, bytes); note-offs sort before note-ons at equal ticks
    timeline = []
    for ev in events:
        timeline.append((ev.onset_tick, 1, ev.pitch, bytes([0x90 | channel, ev.pitch, velocity])))
        timeline.append((ev.onset_tick + ev.duration_tick, 0, ev.pitch,
                         bytes([0x80 | channel, ev.pitch, 0])))
    timeline.sort(key=lambda item: item[:3])
    body = bytearray()
    now = 0
    for tick, _, _, message in timeline:
        body += _vlq(tick - now) + message
        now = tick
    body += b"\x00\xff\x2f\x00"
    return b"MTrk" + struct.pack(">I", len(body)) + bytes(body)


def write_smf(tracks, division=480, channel=0, velocity=64):
    """Serialize lists of NoteEvent as an SMF (format 0 for one track, else 1).

    Only pitch, onset and duration survive; velocity is constant.
    """
    fmt = 0 if len(tracks) == 1 else 1
    header = b"MThd" + struct.pack(">IHHH", 6, fmt, len(tracks), division)
    return header + b"".join(_track_bytes(t, channel, velocity) for t in tracks)
