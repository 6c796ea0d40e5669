"""Model input assembly: chromagram ingestion, global pitch-profile scores,
excerpt segmentation, and synthetic excerpt generation for tests.

The model input is a T x 48 matrix per excerpt: 12 treble chroma columns,
12 bass chroma columns, and 24 pitch-profile scores tiled over all frames.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .labels import PC_NONE, Q_NONE, QUALITIES, QUALITY_TEMPLATES

# 2048 samples at 44.1 kHz; the frame spacing of the ingested chromagrams.
DEFAULT_HOP = 0.04644

N_FEATURES = 48
TREBLE_COLS = slice(0, 12)
BASS_COLS = slice(12, 24)
PROFILE_COLS = slice(24, 48)

# Temperley (1999), "What's key for key?": modified key-finding profiles,
# index 0 = tonic. Configuration data, not learned.
TEMPERLEY_MAJOR = np.array(
    [5.0, 2.0, 3.5, 2.0, 4.5, 4.0, 2.0, 4.5, 2.0, 3.5, 1.5, 4.0])
TEMPERLEY_MINOR = np.array(
    [5.0, 2.0, 3.5, 4.5, 2.0, 4.0, 2.0, 4.5, 3.5, 2.0, 1.5, 4.0])


class ChromagramFormatError(ValueError):
    """Malformed CHRO1 file."""


@dataclass
class Chromagram:
    """Per-frame 12-bin pitch-class energy, treble or bass register."""

    frames: np.ndarray
    kind: str
    hop: float = DEFAULT_HOP

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[1] != 12:
            raise ChromagramFormatError(
                f"chromagram must be T x 12, got {self.frames.shape}")
        if self.kind not in ("treble", "bass"):
            raise ChromagramFormatError(f"bad chromagram kind {self.kind!r}")
        if self.hop <= 0:
            raise ChromagramFormatError(f"bad hop {self.hop}")
        if np.any(self.frames < 0):
            raise ChromagramFormatError("chromagram entries must be >= 0")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def save_chromagram(chroma: Chromagram, path) -> None:
    """Write the CHRO1 text format; values round-trip bit-exactly."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"CHRO1 kind={chroma.kind} hop={chroma.hop!r} "
                 f"frames={chroma.num_frames}\n")
        for row in chroma.frames:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


def load_chromagram(path) -> Chromagram:
    """Read a CHRO1 file; validates shape and non-negativity."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 4 or header[0] != "CHRO1":
            raise ChromagramFormatError(f"{path}: bad CHRO1 header")
        fields = {}
        for token in header[1:]:
            key, _, value = token.partition("=")
            if not value:
                raise ChromagramFormatError(f"{path}: bad header token {token!r}")
            fields[key] = value
        if set(fields) != {"kind", "hop", "frames"}:
            raise ChromagramFormatError(f"{path}: bad CHRO1 header fields")
        count = int(fields["frames"])
        rows = []
        for lineno, line in enumerate(fh, 2):
            values = line.split()
            if not values:
                continue
            if len(values) != 12:
                raise ChromagramFormatError(
                    f"{path}:{lineno}: expected 12 columns, got {len(values)}")
            rows.append([float(v) for v in values])
        if len(rows) != count:
            raise ChromagramFormatError(
                f"{path}: header says {count} frames, found {len(rows)}")
        return Chromagram(np.array(rows, dtype=np.float64).reshape(count, 12),
                          fields["kind"], float(fields["hop"]))


def pitch_profile_scores(treble: Chromagram) -> np.ndarray:
    """24 key scores: mean chroma against all rotations of both profiles.

    Layout: indices 0-11 are the major profile rotated to each root,
    12-23 the minor profile. Invariant to frame order (it is a mean).
    """
    mean_chroma = treble.frames.mean(axis=0)
    scores = np.empty(24)
    for root in range(12):
        rotated = np.roll(TEMPERLEY_MAJOR, root)
        scores[root] = mean_chroma @ rotated
        scores[12 + root] = mean_chroma @ np.roll(TEMPERLEY_MINOR, root)
    return scores


@dataclass
class FeatureMatrix:
    """T x 48 model input; columns 24-47 are constant over the excerpt."""

    frames: np.ndarray
    hop: float = DEFAULT_HOP

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[1] != N_FEATURES:
            raise ValueError(f"feature matrix must be T x {N_FEATURES}, "
                             f"got {self.frames.shape}")
        profile = self.frames[:, PROFILE_COLS]
        if len(profile) and np.any(profile != profile[0]):
            raise ValueError("pitch-profile columns must be constant per excerpt")

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def assemble_input(treble: Chromagram, bass: Chromagram) -> FeatureMatrix:
    """Concatenate chroma pairs with the tiled pitch-profile block."""
    if treble.num_frames != bass.num_frames:
        raise ValueError(f"frame count mismatch: treble {treble.num_frames}, "
                         f"bass {bass.num_frames}")
    if treble.hop != bass.hop:
        raise ValueError(f"hop mismatch: {treble.hop} vs {bass.hop}")
    profiles = np.tile(pitch_profile_scores(treble), (treble.num_frames, 1))
    frames = np.concatenate([treble.frames, bass.frames, profiles], axis=1)
    return FeatureMatrix(frames, treble.hop)


def segment_excerpts(features: FeatureMatrix, frame_labels,
                     excerpt_frames: int):
    """Cut into consecutive excerpts, recomputing profiles per excerpt.

    A trailing remainder is kept when it is at least half an excerpt long.
    Returns a list of (FeatureMatrix, label list) pairs.
    """
    if excerpt_frames < 1:
        raise ValueError("excerpt_frames must be >= 1")
    total = features.num_frames
    if frame_labels is not None and len(frame_labels) != total:
        raise ValueError(f"{len(frame_labels)} labels for {total} frames")
    bounds = []
    start = 0
    while start + excerpt_frames <= total:
        bounds.append((start, start + excerpt_frames))
        start += excerpt_frames
    if total - start >= (excerpt_frames + 1) // 2 and total - start > 0:
        bounds.append((start, total))
    out = []
    for lo, hi in bounds:
        chroma = features.frames[lo:hi, :24]
        treble = Chromagram(chroma[:, :12], "treble", features.hop)
        profiles = np.tile(pitch_profile_scores(treble), (hi - lo, 1))
        segment = FeatureMatrix(np.concatenate([chroma, profiles], axis=1),
                                features.hop)
        labels = None if frame_labels is None else list(frame_labels[lo:hi])
        out.append((segment, labels))
    return out


def synth_excerpt(frame_labels, noise_sd: float = 0.0, seed: int = 0,
                  hop: float = DEFAULT_HOP):
    """Render a label sequence into chroma features (ground-truth oracle).

    Treble chroma sums the chord-tone template of each frame's quality;
    bass chroma is one-hot at the sounding bass pitch class. Gaussian noise
    of the given standard deviation is added and clipped at zero. All-N
    frames stay silent. Deterministic for a fixed seed.
    """
    if noise_sd < 0:
        raise ValueError("noise_sd must be >= 0")
    rng = np.random.default_rng(seed)
    t = len(frame_labels)
    treble = np.zeros((t, 12))
    bass = np.zeros((t, 12))
    for i, frame in enumerate(frame_labels):
        if frame.chord_quality == Q_NONE or frame.chord_root == PC_NONE:
            continue
        for semitone in QUALITY_TEMPLATES[QUALITIES[frame.chord_quality]]:
            treble[i, (frame.chord_root + semitone) % 12] += 1.0
        if frame.bass_number != PC_NONE:
            bass[i, (frame.chord_root + frame.bass_number) % 12] = 1.0
    if noise_sd > 0:
        treble = np.clip(treble + rng.normal(0.0, noise_sd, treble.shape), 0, None)
        bass = np.clip(bass + rng.normal(0.0, noise_sd, bass.shape), 0, None)
    features = assemble_input(Chromagram(treble, "treble", hop),
                              Chromagram(bass, "bass", hop))
    return features, list(frame_labels)
