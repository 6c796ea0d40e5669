import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from serenade import labels as lb


# --- Harte parsing -----------------------------------------------------------

def test_parse_root_position_major():
    assert lb.parse_chord_label("C:maj") == (0, "maj", 0)


def test_parse_no_chord():
    assert lb.parse_chord_label("N") == (lb.PC_NONE, "N", 0)


def test_parse_dominant_third_bass():
    # the third of a dominant seventh chord sits four semitones up
    assert lb.parse_chord_label("G:7/3") == (7, "7", 4)


def test_parse_bare_root_is_major():
    assert lb.parse_chord_label("A") == (9, "maj", 0)


def test_parse_minor_third_bass_from_template():
    assert lb.parse_chord_label("C:min/3") == (0, "min", 3)


def test_parse_accidental_degree_uses_major_scale():
    assert lb.parse_chord_label("C:min/b3") == (0, "min", 3)
    assert lb.parse_chord_label("A:7/b7") == (9, "7", 10)


def test_parse_enharmonic_collapse():
    assert lb.parse_pitch_class("Db") == 1
    assert lb.parse_pitch_class("C#") == 1
    assert lb.parse_pitch_class("Fb") == 4
    assert lb.parse_pitch_class("B#") == 0


@pytest.mark.parametrize("bad", ["H:maj", "C:", "", "C:maj/x3", "c:maj"])
def test_parse_malformed_labels(bad):
    with pytest.raises(lb.LabelParseError):
        lb.parse_chord_label(bad)


def test_parse_unknown_quality():
    with pytest.raises(lb.QualityMappingError):
        lb.parse_chord_label("C:weird")


# --- quality reduction -------------------------------------------------------

@pytest.mark.parametrize("tag,expected", [
    ("maj9", "maj"), ("maj6", "maj"), ("9", "maj"), ("11", "maj"),
    ("13", "maj"), ("maj13", "maj"), ("sus2", "maj"),
    ("minmaj7", "min"), ("min6", "min"), ("min9", "min"), ("min11", "min"),
    ("min13", "min"),
    ("hdim7", "dim"), ("dim7", "dim"),
    ("maj", "maj"), ("7", "7"), ("sus4", "sus4"), ("N", "N"),
])
def test_reduce_quality_mapping(tag, expected):
    assert lb.reduce_quality(tag) == expected


def test_reduce_quality_idempotent():
    for tag in list(lb._REDUCTION):
        once = lb.reduce_quality(tag)
        assert lb.reduce_quality(once) == once


def test_reduce_quality_unknown_raises_unless_fallback():
    with pytest.raises(lb.QualityMappingError):
        lb.reduce_quality("mystery")
    assert lb.reduce_quality("mystery", fallback_to_maj=True) == "maj"


def test_exactly_eleven_quality_classes():
    assert len(lb.QUALITIES) == 11


# --- droot -------------------------------------------------------------------

def test_droot_tonic():
    assert lb.compute_droot(0, 0) == 0


def test_droot_dominant():
    assert lb.compute_droot(0, 7) == 7


def test_droot_wraps():
    assert lb.compute_droot(6, 9) == 3


def test_droot_undefined_with_none():
    assert lb.compute_droot(lb.PC_NONE, 4) == lb.PC_NONE
    assert lb.compute_droot(4, lb.PC_NONE) == lb.PC_NONE


def test_droot_inverts_modulo_twelve():
    for key in range(12):
        for chord in range(12):
            assert (lb.compute_droot(key, chord) + key) % 12 == chord


# --- frame labels ------------------------------------------------------------

def test_cardinalities():
    assert lb.CARDINALITIES == (13, 3, 13, 13, 11, 13)


def _legal_tuples():
    for key_root, key_quality, chord_root, quality, bass in itertools.product(
            range(13), range(3), range(13), range(11), range(13)):
        if quality == lb.Q_NONE and not (chord_root == 12 and bass == 12):
            continue
        if quality != lb.Q_NONE and chord_root == 12:
            continue
        yield key_root, key_quality, chord_root, quality, bass


def test_encode_decode_identity_over_legal_tuples():
    checked = 0
    for key_root, key_quality, chord_root, quality, bass in _legal_tuples():
        label = lb.HarmonyFrameLabel.build(key_root, key_quality, chord_root,
                                           quality, bass)
        assert lb.HarmonyFrameLabel.decode(label.encode()) == label
        assert label.is_consistent()
        checked += 1
    assert checked > 50_000


def test_build_normalises_no_chord():
    label = lb.HarmonyFrameLabel.build(0, 0, 5, lb.Q_NONE, 3)
    assert label.chord_root == lb.PC_NONE
    assert label.bass_number == lb.PC_NONE
    assert label.droot == lb.PC_NONE


def test_out_of_range_class_rejected():
    with pytest.raises(ValueError):
        lb.HarmonyFrameLabel(13, 0, 0, 0, 0, 0)
    with pytest.raises(ValueError):
        lb.HarmonyFrameLabel(0, 0, 0, 0, 11, 0)


def test_predictions_may_be_inconsistent_but_representable():
    label = lb.HarmonyFrameLabel(0, 0, 7, 3, 0, 0)
    assert not label.is_consistent()


# --- chord label rendering ---------------------------------------------------

def test_render_round_trips_every_quality_and_bass():
    for quality in lb.QUALITIES[:-1]:
        template = lb.QUALITY_TEMPLATES[quality]
        for bass in range(12):
            label = lb.HarmonyFrameLabel.build(
                lb.PC_NONE, lb.KEY_NONE, 4, lb.QUALITIES.index(quality), bass)
            root, tag, parsed_bass = lb.parse_chord_label(label.chord_label())
            assert root == 4
            assert tag == quality
            assert parsed_bass == bass, (quality, bass, label.chord_label())


def test_render_no_chord():
    assert lb.HarmonyFrameLabel.all_n().chord_label() == "N"
    assert lb.HarmonyFrameLabel.all_n().key_label() == "N"


# --- key quality inference ---------------------------------------------------

def _tonic_frames(n_minor, n_major, key_root=0):
    frames = []
    for quality in ["min"] * n_minor + ["maj"] * n_major:
        frames.append(lb.HarmonyFrameLabel.build(
            key_root, lb.KEY_MAJOR, key_root, lb.QUALITIES.index(quality), 0))
    return frames


def test_key_quality_majority_minor():
    assert lb.infer_key_quality(_tonic_frames(80, 20)) == lb.KEY_MINOR


def test_key_quality_all_major():
    assert lb.infer_key_quality(_tonic_frames(0, 100)) == lb.KEY_MAJOR


def test_key_quality_tie_breaks_major():
    assert lb.infer_key_quality(_tonic_frames(50, 50)) == lb.KEY_MAJOR


def test_key_quality_needs_tonic_chords():
    frames = [lb.HarmonyFrameLabel.build(0, lb.KEY_MAJOR, 7,
                                         lb.QUALITIES.index("maj"), 0)]
    with pytest.raises(lb.KeyQualityError):
        lb.infer_key_quality(frames)


def test_key_quality_min7_counts_minor_sus_counts_other():
    frames = []
    for quality in ("min7", "min7", "sus4"):
        frames.append(lb.HarmonyFrameLabel.build(
            3, lb.KEY_MAJOR, 3, lb.QUALITIES.index(quality), 0))
    assert lb.infer_key_quality(frames) == lb.KEY_MINOR


# --- key labels --------------------------------------------------------------

def test_parse_key_labels():
    assert lb.parse_key_label("C") == (0, lb.KEY_MAJOR)
    assert lb.parse_key_label("Eb:minor") == (3, lb.KEY_MINOR)
    assert lb.parse_key_label("N") == (lb.PC_NONE, lb.KEY_NONE)


def test_parse_key_modal_rejected():
    with pytest.raises(lb.LabelParseError):
        lb.parse_key_label("D:dorian")


# --- interval sampling -------------------------------------------------------

def test_single_chord_spans_whole_excerpt():
    chords = [lb.IntervalAnnotation(0.0, 10.0, "C:maj")]
    keys = [lb.IntervalAnnotation(0.0, 10.0, "C:major")]
    frames = lb.frames_from_intervals(chords, keys, 0.5, 8)
    assert len(set(frames)) == 1
    assert frames[0].chord_root == 0
    assert frames[0].droot == 0


def test_empty_annotations_give_all_n():
    frames = lb.frames_from_intervals([], [], 0.5, 4)
    assert all(f == lb.HarmonyFrameLabel.all_n() for f in frames)


def test_boundary_on_frame_center_goes_to_later_interval():
    # hop 1.0: frame 1's centre is exactly 1.5, the boundary below
    chords = [lb.IntervalAnnotation(0.0, 1.5, "C:maj"),
              lb.IntervalAnnotation(1.5, 3.0, "G:maj")]
    frames = lb.frames_from_intervals(chords, [], 1.0, 3)
    assert frames[0].chord_root == 0
    assert frames[1].chord_root == 7
    assert frames[2].chord_root == 7


def test_uncovered_gap_is_all_n():
    chords = [lb.IntervalAnnotation(0.0, 1.0, "C:maj"),
              lb.IntervalAnnotation(3.0, 4.0, "G:maj")]
    frames = lb.frames_from_intervals(chords, [], 1.0, 4)
    assert frames[1] == lb.HarmonyFrameLabel.all_n()
    assert frames[2] == lb.HarmonyFrameLabel.all_n()


def test_droot_recomputed_from_sampled_roots():
    chords = [lb.IntervalAnnotation(0.0, 2.0, "A:min")]
    keys = [lb.IntervalAnnotation(0.0, 2.0, "C:major")]
    frames = lb.frames_from_intervals(chords, keys, 1.0, 2)
    assert frames[0].droot == 9


def test_interval_file_round_trip(tmp_path):
    path = tmp_path / "chords.lab"
    intervals = [lb.IntervalAnnotation(0.0, 1.25, "C:maj"),
                 lb.IntervalAnnotation(1.25, 2.0, "G:7/3")]
    lb.write_interval_file(path, intervals)
    loaded = lb.read_interval_file(path)
    assert [iv.label for iv in loaded] == ["C:maj", "G:7/3"]
    assert loaded[0].end == pytest.approx(1.25)


def test_interval_file_rejects_overlap(tmp_path):
    path = tmp_path / "bad.lab"
    path.write_text("0.000\t2.000\tC:maj\n1.000\t3.000\tG:maj\n")
    with pytest.raises(lb.LabelParseError):
        lb.read_interval_file(path)


def test_interval_file_rejects_malformed_line(tmp_path):
    path = tmp_path / "bad.lab"
    path.write_text("0.0 1.0 C:maj\n")
    with pytest.raises(lb.LabelParseError):
        lb.read_interval_file(path)


@given(st.integers(0, 12), st.integers(0, 2), st.integers(0, 12),
       st.integers(0, 10), st.integers(0, 12))
def test_build_always_consistent(key_root, key_quality, chord_root, quality,
                                 bass):
    if quality != lb.Q_NONE and chord_root == lb.PC_NONE:
        return
    label = lb.HarmonyFrameLabel.build(key_root, key_quality, chord_root,
                                       quality, bass)
    assert label.is_consistent()
