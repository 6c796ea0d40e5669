"""Harmonic label model: Harte-syntax parsing, chord-quality reduction,
the six-sub-label frame encoding, directed-root arithmetic, and key-quality
inference from tonic chords.

Everything here is pure and stateless; safe to call from any thread.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

log = logging.getLogger(__name__)

# Sub-label order is fixed everywhere: it is also the within-frame visiting
# order of the autoregressive decoder.
KEY_ROOT, KEY_QUALITY, CHORD_ROOT, DROOT, CHORD_QUALITY, BASS_NUMBER = range(6)
SUBLABEL_NAMES = ("key_root", "key_quality", "chord_root", "droot",
                  "chord_quality", "bass_number")
CARDINALITIES = (13, 3, 13, 13, 11, 13)
NUM_SUBLABELS = 6

PITCH_NAMES = ("C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B")
PC_NONE = 12  # shared index for the N class of roots, droot and bass number

QUALITIES = ("maj", "min", "dim", "aug", "7", "maj7", "min7", "5", "1",
             "sus4", "N")
Q_NONE = QUALITIES.index("N")

KEY_MAJOR, KEY_MINOR, KEY_NONE = 0, 1, 2
KEY_QUALITY_NAMES = ("major", "minor", "N")

# Chord-tone templates (semitones above the root) for the reduced classes.
QUALITY_TEMPLATES = {
    "maj": (0, 4, 7),
    "min": (0, 3, 7),
    "dim": (0, 3, 6),
    "aug": (0, 4, 8),
    "7": (0, 4, 7, 10),
    "maj7": (0, 4, 7, 11),
    "min7": (0, 3, 7, 10),
    "5": (0, 7),
    "1": (0,),
    "sus4": (0, 5, 7),
}

# Extended qualities accepted by the parser, reduced to the 11 classes.
_REDUCTION = {
    "maj6": "maj", "9": "maj", "11": "maj", "13": "maj",
    "maj9": "maj", "maj13": "maj", "sus2": "maj",
    "min6": "min", "minmaj7": "min", "min9": "min", "min11": "min",
    "min13": "min",
    "dim7": "dim", "hdim7": "dim",
}
_REDUCTION.update({q: q for q in QUALITIES})

# Templates for extended qualities, used only to resolve bass degrees.
_EXTENDED_TEMPLATES = {
    "maj6": (0, 4, 7, 9), "9": (0, 4, 7, 10, 2), "11": (0, 4, 7, 10, 2, 5),
    "13": (0, 4, 7, 10, 9), "maj9": (0, 4, 7, 11, 2),
    "maj13": (0, 4, 7, 11, 9), "sus2": (0, 2, 7),
    "min6": (0, 3, 7, 9), "minmaj7": (0, 3, 7, 11), "min9": (0, 3, 7, 10, 2),
    "min11": (0, 3, 7, 10, 5), "min13": (0, 3, 7, 10, 9),
    "dim7": (0, 3, 6, 9), "hdim7": (0, 3, 6, 10),
}
_EXTENDED_TEMPLATES.update(QUALITY_TEMPLATES)

_LETTER_PC = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
_MAJOR_DEGREE = {1: 0, 2: 2, 3: 4, 4: 5, 5: 7, 6: 9, 7: 11}


class LabelParseError(ValueError):
    """Malformed label text; the message names the offending token."""


class QualityMappingError(ValueError):
    """Chord quality tag outside the known extended vocabulary."""


class KeyQualityError(ValueError):
    """Key-quality inference is impossible (no tonic chords)."""


def parse_pitch_class(token: str) -> int:
    """'C', 'F#', 'Db', 'Abb' ... -> 0-11, collapsing enharmonics."""
    if not token or token[0] not in _LETTER_PC:
        raise LabelParseError(f"bad pitch class {token!r}")
    pc = _LETTER_PC[token[0]]
    for mod in token[1:]:
        if mod == "#":
            pc += 1
        elif mod == "b":
            pc -= 1
        else:
            raise LabelParseError(f"bad accidental {mod!r} in {token!r}")
    return pc % 12


def _degree_semitone(degree: str, quality: str) -> int:
    """Semitones above the root for a Harte bass degree.

    A plain degree number refers to the chord's own tone when the quality
    template defines one (the third of ``min`` is 3 semitones); accidentals
    are applied to the major-scale degree instead.
    """
    token = degree
    flats = sharps = 0
    while degree and degree[0] in "b#":
        if degree[0] == "b":
            flats += 1
        else:
            sharps += 1
        degree = degree[1:]
    if not degree.isdigit():
        raise LabelParseError(f"bad bass degree {token!r}")
    number = int(degree)
    if number < 1:
        raise LabelParseError(f"bad bass degree {token!r}")
    base_number = (number - 1) % 7 + 1
    base = _MAJOR_DEGREE[base_number]
    if flats == 0 and sharps == 0:
        template = _EXTENDED_TEMPLATES.get(quality, ())
        family = {3: (3, 4), 5: (6, 7, 8), 7: (9, 10, 11)}.get(base_number)
        if family:
            for semitone in family:
                if semitone in template:
                    return semitone
        return base
    return (base + sharps - flats) % 12


def _render_degree(quality: str, semitone: int) -> str:
    """A degree spelling that parses back to ``semitone`` for this quality.

    Plain spellings win (chord-tone basses read naturally); accidentals
    cover the chromatic rest. Searching via the parser keeps rendering and
    parsing consistent by construction.
    """
    for accidental in ("", "b", "#", "bb", "##"):
        for number in range(2, 8):
            spelling = f"{accidental}{number}"
            if _degree_semitone(spelling, quality) == semitone:
                return spelling
    raise ValueError(f"no degree spelling for semitone {semitone}")


def parse_chord_label(text: str):
    """Parse a Harte chord label into (root 0-12, quality tag, bass 0-11).

    'N' yields the no-chord triple ``(12, 'N', 0)``. The quality tag is the
    raw extended tag; pass it through :func:`reduce_quality` for the class.
    """
    text = text.strip()
    if not text:
        raise LabelParseError("empty chord label")
    if text == "N":
        return PC_NONE, "N", 0
    body, _, degree = text.partition("/")
    root_str, sep, quality = body.partition(":")
    root = parse_pitch_class(root_str)
    if sep and not quality:
        raise LabelParseError(f"empty quality in {text!r}")
    if not sep:
        quality = "maj"
    if quality not in _EXTENDED_TEMPLATES and quality != "N":
        raise QualityMappingError(f"unknown chord quality {quality!r}")
    bass = _degree_semitone(degree, quality) if degree else 0
    return root, quality, bass


def reduce_quality(tag: str, fallback_to_maj: bool = False) -> str:
    """Map an extended quality tag to one of the 11 reduced classes."""
    reduced = _REDUCTION.get(tag)
    if reduced is None:
        if fallback_to_maj:
            log.warning("unknown quality %r mapped to maj", tag)
            return "maj"
        raise QualityMappingError(f"unknown chord quality {tag!r}")
    return reduced


def quality_index(tag: str) -> int:
    return QUALITIES.index(reduce_quality(tag))


def compute_droot(key_root: int, chord_root: int) -> int:
    """Directed distance in semitones from key root to chord root, or N."""
    if key_root == PC_NONE or chord_root == PC_NONE:
        return PC_NONE
    return (chord_root - key_root) % 12


def parse_key_label(text: str):
    """'C', 'C:major', 'Eb:minor' or 'N' -> (root 0-12, quality 0-2).

    Modal keys (dorian etc.) are rejected; callers exclude such tracks.
    """
    text = text.strip()
    if text == "N" or text == "":
        return PC_NONE, KEY_NONE
    root_str, _, quality = text.partition(":")
    root = parse_pitch_class(root_str)
    quality = quality or "major"
    if quality not in ("major", "minor"):
        raise LabelParseError(f"unsupported key quality {quality!r}")
    return root, KEY_MAJOR if quality == "major" else KEY_MINOR


@dataclass(frozen=True)
class HarmonyFrameLabel:
    """One frame's six sub-labels as class indices.

    Range-validated only: model predictions may carry a droot that
    disagrees with the root pair, so cross-field consistency is checked
    via :meth:`is_consistent`, and :meth:`build` constructs consistent
    reference labels.
    """

    key_root: int
    key_quality: int
    chord_root: int
    droot: int
    chord_quality: int
    bass_number: int

    def __post_init__(self):
        for value, card, name in zip(self.encode(), CARDINALITIES,
                                     SUBLABEL_NAMES):
            if not 0 <= value < card:
                raise ValueError(f"{name}={value} outside 0..{card - 1}")

    @classmethod
    def build(cls, key_root, key_quality, chord_root, chord_quality,
              bass_number) -> "HarmonyFrameLabel":
        """Construct with droot computed and no-chord fields normalised."""
        if chord_quality == Q_NONE:
            chord_root = PC_NONE
            bass_number = PC_NONE
        return cls(key_root, key_quality, chord_root,
                   compute_droot(key_root, chord_root), chord_quality,
                   bass_number)

    @classmethod
    def all_n(cls) -> "HarmonyFrameLabel":
        return cls(PC_NONE, KEY_NONE, PC_NONE, PC_NONE, Q_NONE, PC_NONE)

    def encode(self):
        return (self.key_root, self.key_quality, self.chord_root, self.droot,
                self.chord_quality, self.bass_number)

    @classmethod
    def decode(cls, values) -> "HarmonyFrameLabel":
        return cls(*(int(v) for v in values))

    def is_consistent(self) -> bool:
        if self.droot != compute_droot(self.key_root, self.chord_root):
            return False
        if self.chord_quality == Q_NONE:
            return self.chord_root == PC_NONE and self.bass_number == PC_NONE
        return self.chord_root != PC_NONE

    def chord_label(self) -> str:
        """Render the chord part back to Harte syntax."""
        if self.chord_quality == Q_NONE or self.chord_root == PC_NONE:
            return "N"
        quality = QUALITIES[self.chord_quality]
        text = f"{PITCH_NAMES[self.chord_root]}:{quality}"
        bass = self.bass_number
        if bass in (0, PC_NONE):
            return text
        return f"{text}/{_render_degree(quality, bass)}"

    def key_label(self) -> str:
        if self.key_root == PC_NONE:
            return "N"
        return f"{PITCH_NAMES[self.key_root]}:{KEY_QUALITY_NAMES[self.key_quality]}"


def class_names(sublabel: int):
    """Display names for the classes of one sub-label, UI order."""
    roots = list(PITCH_NAMES) + ["N"]
    numbers = [str(i) for i in range(12)] + ["N"]
    return (roots, list(KEY_QUALITY_NAMES), roots, numbers, list(QUALITIES),
            numbers)[sublabel]


# Qualities counted as minor evidence when inferring key quality from tonic
# chords. Ambiguous thirdless qualities (sus4, 5, 1) count as non-minor.
_MINOR_EVIDENCE = frozenset((QUALITIES.index("min"), QUALITIES.index("min7")))


def infer_key_quality(frames) -> int:
    """Majority vote over tonic chords: mostly minor -> minor, else major.

    Ties break to major. Raises :class:`KeyQualityError` when no frame has
    a chord rooted on the key root; callers fall back to major and log.
    """
    minor = other = 0
    for frame in frames:
        if frame.chord_root == PC_NONE or frame.key_root == PC_NONE:
            continue
        if frame.chord_root != frame.key_root:
            continue
        if frame.chord_quality == Q_NONE:
            continue
        if frame.chord_quality in _MINOR_EVIDENCE:
            minor += 1
        else:
            other += 1
    if minor + other == 0:
        raise KeyQualityError("no tonic chords to infer key quality from")
    return KEY_MINOR if minor > other else KEY_MAJOR


@dataclass(frozen=True)
class IntervalAnnotation:
    """Half-open time interval [start, end) carrying a label string."""

    start: float
    end: float
    label: str

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"empty interval [{self.start}, {self.end})")


def read_interval_file(path):
    """Load 'start<TAB>end<TAB>label' lines; validates ordering/overlap."""
    intervals = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise LabelParseError(f"{path}:{lineno}: expected 3 tab-separated fields")
            start, end, label = parts
            intervals.append(IntervalAnnotation(float(start), float(end), label))
    intervals.sort(key=lambda iv: iv.start)
    for prev, cur in zip(intervals, intervals[1:]):
        if cur.start < prev.end:
            raise LabelParseError(
                f"{path}: overlapping intervals at {cur.start:.3f}")
    return intervals


def write_interval_file(path, intervals):
    with open(path, "w", encoding="utf-8") as fh:
        for iv in intervals:
            fh.write(f"{iv.start:.6f}\t{iv.end:.6f}\t{iv.label}\n")


def _covering(intervals, time):
    """The interval containing ``time`` under the half-open convention."""
    for iv in intervals:
        if iv.start <= time < iv.end:
            return iv
    return None


def frames_from_intervals(chords, keys, hop: float, frame_count: int):
    """Sample interval annotations at frame centres into frame labels.

    Frame ``t`` takes the annotations covering ``t*hop + hop/2``; uncovered
    frames become all-N. The droot is recomputed from the sampled roots.
    """
    if hop <= 0:
        raise ValueError(f"hop must be positive, got {hop}")
    frames = []
    for t in range(frame_count):
        center = t * hop + hop / 2.0
        chord_iv = _covering(chords, center)
        key_iv = _covering(keys, center)
        if chord_iv is None:
            chord_root, quality, bass = PC_NONE, Q_NONE, PC_NONE
        else:
            root, tag, bass_interval = parse_chord_label(chord_iv.label)
            quality = quality_index(tag)
            if quality == Q_NONE:
                chord_root, bass = PC_NONE, PC_NONE
            else:
                chord_root, bass = root, bass_interval
        if key_iv is None:
            key_root, key_quality = PC_NONE, KEY_NONE
        else:
            key_root, key_quality = parse_key_label(key_iv.label)
        frames.append(HarmonyFrameLabel.build(key_root, key_quality,
                                              chord_root, quality, bass))
    return frames
