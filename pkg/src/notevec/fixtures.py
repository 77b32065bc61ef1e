"""Deterministic synthetic melodies standing in for a real monophonic corpus."""

from pathlib import Path

import numpy as np

from .midi import NoteEvent, PitchSequence, write_smf

MAJOR = (0, 2, 4, 5, 7, 9, 11)
MINOR = (0, 2, 3, 5, 7, 8, 10)
# scale-degree steps and their weights: mostly stepwise, occasional leaps
_STEPS = np.array([-4, -3, -2, -1, 0, 1, 2, 3, 4, 7, -7])
_WEIGHTS = np.array([2, 4, 8, 20, 6, 20, 8, 4, 2, 1, 1], dtype=float)
_WEIGHTS /= _WEIGHTS.sum()


def random_melody(rng, length=48, tonic=None):
    """A scale-bound random walk, returned as MIDI pitches."""
    if tonic is None:
        tonic = int(rng.integers(36, 84))
    scale = MAJOR if rng.random() < 0.6 else MINOR
    degree = 0
    pitches = []
    for _ in range(length):
        octave, step = divmod(degree, len(scale))
        pitch = tonic + 12 * octave + scale[step]
        if pitch < 24 or pitch > 108:
            degree = 0
            pitch = tonic
        pitches.append(int(pitch))
        degree += int(rng.choice(_STEPS, p=_WEIGHTS))
    return pitches


def random_pieces(n, seed=0, min_len=16, max_len=64):
    rng = np.random.default_rng(seed)
    return [
        PitchSequence(random_melody(rng, int(rng.integers(min_len, max_len + 1))), source_id=f"synthetic-{i:03d}")
        for i in range(n)
    ]


def melody_events(pitches, rng=None, ticks_per_beat=480):
    """NoteEvents for consecutive pitches with varied durations."""
    durations = (ticks_per_beat // 2, ticks_per_beat, ticks_per_beat * 2)
    onset = 0
    events = []
    for p in pitches:
        dur = durations[int(rng.integers(0, 3))] if rng is not None else ticks_per_beat
        events.append(NoteEvent(int(p), onset, dur))
        onset += dur
    return events


def write_fixture_corpus(directory, n=24, seed=0, chord_every=6):
    """Write ``n`` format-1 .mid files (empty conductor track + melody track).

    Every ``chord_every``-th file gets a harmony note under its first note so
    that chord reduction is exercised.  Returns the written paths.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(n):
        pitches = random_melody(rng, int(rng.integers(24, 80)))
        events = melody_events(pitches, rng)
        if chord_every and i % chord_every == 0 and events[0].pitch >= 4:
            first = events[0]
            events.append(NoteEvent(first.pitch - 4, first.onset_tick, first.duration_tick))
        path = directory / f"melody_{i:03d}.mid"
        path.write_bytes(write_smf([[], events]))
        paths.append(path)
    return paths
