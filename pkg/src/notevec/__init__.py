"""Pitch and interval embeddings for monophonic melodies.

Pipeline: parse MIDI (:mod:`notevec.midi`), build token datasets
(:mod:`notevec.corpus`), train embeddings inside an LSTM predictor
(:mod:`notevec.seqmodel`), project them with t-SNE (:mod:`notevec.tsne`)
and inspect neighbourhoods (:mod:`notevec.analysis`).
"""

__version__ = "0.1.0"
