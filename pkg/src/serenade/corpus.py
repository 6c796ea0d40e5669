"""Synthetic labelled corpora and the on-disk corpus layout.

Synthetic excerpts carry deterministic key-to-quality correlations (the
chord quality is a function of the key quality and the directed root
distance, with the dominant always a ``7`` chord), so that correcting a
key cell gives the decoder real information about other cells. On disk a
corpus is a directory of per-track CHRO1 chromagram pairs plus interval
annotation files: ``<stem>.treble.chro``, ``<stem>.bass.chro``,
``<stem>.chords.lab``, ``<stem>.keys.lab``.
"""
from __future__ import annotations

import os

import numpy as np

from .features import (DEFAULT_HOP, FeatureMatrix, assemble_input,
                       load_chromagram, save_chromagram, segment_excerpts,
                       synth_excerpt, Chromagram)
from .labels import (KEY_MAJOR, KEY_MINOR, PC_NONE, QUALITIES,
                     QUALITY_TEMPLATES, HarmonyFrameLabel, IntervalAnnotation,
                     frames_from_intervals, read_interval_file,
                     write_interval_file)

# Quality is a pure function of (key quality, droot): the correlation the
# oracle experiments rely on. Droot 7 is always a dominant-seventh chord.
# The minor palette leans on its dominant (which carries the leading tone,
# the pitch that separates a minor key from its relative major).
QUALITY_BY_DROOT = {
    KEY_MAJOR: {0: "maj", 2: "min7", 4: "min", 5: "maj", 7: "7", 9: "min"},
    KEY_MINOR: {0: "min", 3: "maj", 5: "min7", 7: "7", 8: "maj"},
}
_DROOT_WEIGHTS = {
    KEY_MAJOR: ((0, 0.32), (5, 0.22), (7, 0.24), (9, 0.10), (2, 0.07), (4, 0.05)),
    KEY_MINOR: ((0, 0.32), (5, 0.17), (7, 0.30), (3, 0.13), (8, 0.08)),
}


def make_excerpt_labels(key_root: int, key_quality: int, num_frames: int,
                        rng) -> list:
    """Segment-structured progression in one key, qualities tied to droot."""
    droots, weights = zip(*_DROOT_WEIGHTS[key_quality])
    weights = np.array(weights) / sum(weights)
    labels = []
    while len(labels) < num_frames:
        length = int(rng.integers(6, 17))
        droot = int(droots[int(rng.choice(len(droots), p=weights))])
        quality = QUALITY_BY_DROOT[key_quality][droot]
        chord_root = (key_root + droot) % 12
        template = QUALITY_TEMPLATES[quality]
        if len(template) > 1 and rng.random() < 0.2:
            bass = int(template[int(rng.integers(1, len(template)))])
        else:
            bass = 0
        frame = HarmonyFrameLabel.build(key_root, key_quality, chord_root,
                                        QUALITIES.index(quality), bass)
        labels.extend([frame] * length)
    return labels[:num_frames]


def make_corpus(num_excerpts: int, num_frames: int = 64,
                noise_sd: float = 0.0, seed: int = 0,
                hop: float = DEFAULT_HOP) -> list:
    """List of (FeatureMatrix, frame labels), deterministic per seed."""
    rng = np.random.default_rng(seed)
    corpus = []
    for i in range(num_excerpts):
        key_root = int(rng.integers(0, 12))
        key_quality = KEY_MINOR if rng.random() < 0.35 else KEY_MAJOR
        labels = make_excerpt_labels(key_root, key_quality, num_frames, rng)
        features, labels = synth_excerpt(labels, noise_sd,
                                         seed=int(rng.integers(0, 2 ** 31)),
                                         hop=hop)
        corpus.append((features, labels))
    return corpus


def labels_to_intervals(frame_labels, hop: float):
    """Merge runs of identical chord/key labels into interval annotations."""
    chords, keys = [], []
    for intervals, render in ((chords, lambda f: f.chord_label()),
                              (keys, lambda f: f.key_label())):
        start = 0
        for t in range(1, len(frame_labels) + 1):
            if t == len(frame_labels) or render(frame_labels[t]) != render(frame_labels[start]):
                label = render(frame_labels[start])
                intervals.append(IntervalAnnotation(start * hop, t * hop, label))
                start = t
    return chords, keys


def save_corpus_dir(corpus, directory, prefix: str = "excerpt") -> None:
    os.makedirs(directory, exist_ok=True)
    width = max(3, len(str(len(corpus))))
    for i, (features, labels) in enumerate(corpus):
        stem = os.path.join(directory, f"{prefix}{i:0{width}d}")
        treble = Chromagram(features.frames[:, :12], "treble", features.hop)
        bass = Chromagram(features.frames[:, 12:24], "bass", features.hop)
        save_chromagram(treble, f"{stem}.treble.chro")
        save_chromagram(bass, f"{stem}.bass.chro")
        chords, keys = labels_to_intervals(labels, features.hop)
        write_interval_file(f"{stem}.chords.lab", chords)
        write_interval_file(f"{stem}.keys.lab", keys)


def corpus_stems(directory):
    names = sorted(f[:-len(".treble.chro")] for f in os.listdir(directory)
                   if f.endswith(".treble.chro"))
    return [os.path.join(directory, name) for name in names]


def load_track(stem: str):
    """One track's features and (when annotated) frame labels."""
    treble = load_chromagram(f"{stem}.treble.chro")
    bass = load_chromagram(f"{stem}.bass.chro")
    features = assemble_input(treble, bass)
    labels = None
    if os.path.exists(f"{stem}.chords.lab"):
        chords = read_interval_file(f"{stem}.chords.lab")
        keys_path = f"{stem}.keys.lab"
        keys = (read_interval_file(keys_path)
                if os.path.exists(keys_path) else [])
        labels = frames_from_intervals(chords, keys, features.hop,
                                       features.num_frames)
    return features, labels


def load_corpus_dir(directory, excerpt_frames: int = None) -> list:
    """All annotated tracks, optionally segmented into training excerpts."""
    corpus = []
    for stem in corpus_stems(directory):
        features, labels = load_track(stem)
        if labels is None:
            raise FileNotFoundError(f"{stem}: missing chord annotations")
        if excerpt_frames:
            corpus.extend(segment_excerpts(features, labels, excerpt_frames))
        else:
            corpus.append((features, labels))
    if not corpus:
        raise FileNotFoundError(f"no corpus tracks found in {directory}")
    return corpus
