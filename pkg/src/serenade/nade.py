"""Separable bidirectional multiclass autoregressive decoder.

One hidden state advances per frame (time), another per sub-label within a
frame (feature). Each direction factorises the joint label distribution in
its own visiting order; at inference the two directions' logits are
averaged per cell. Sparse ground-truth constraints enter through an
:class:`OracleMask`: constrained cells are overwritten in the output and,
unless propagation is frozen, drive the hidden-state updates exactly as
teacher forcing does.

A pass owns its accumulators; passes over distinct excerpts may run in
parallel, and the two directions of one excerpt share only read-only
inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .extractor import BiasField
from .labels import (CARDINALITIES, CHORD_ROOT, DROOT, KEY_ROOT, PC_NONE,
                     HarmonyFrameLabel, compute_droot)
from .tensorcore import sigmoid, softmax_rows

DROOT_NUDGE = 3.0  # logit bonus for the droot implied by the resolved roots

SEGMENT_OFFSETS = tuple(int(x) for x in np.cumsum((0,) + CARDINALITIES))


class DriveExhaustedError(RuntimeError):
    """An iterator drive ran out before the visiting order was complete."""


@dataclass
class NadeDirectionParams:
    """Weights of one decoding direction.

    ``label_to_time`` maps a frame's resolved one-hot label (66 units) into
    the time accumulator; ``time_to_feat`` seeds the per-frame feature
    accumulator; ``sub_to_feat[s]`` adds the resolved class of sub-label
    ``s`` into the feature accumulator; ``feat_to_vis[s]`` reads logits out.
    """

    label_to_time: np.ndarray
    time_to_feat: np.ndarray
    sub_to_feat: list
    feat_to_vis: list

    @property
    def h_time(self) -> int:
        return self.label_to_time.shape[0]

    @property
    def h_feat(self) -> int:
        return self.time_to_feat.shape[0]

    @property
    def structure(self):
        return tuple(m.shape[0] for m in self.feat_to_vis)


def init_direction_params(h_time: int, h_feat: int, rng,
                          structure=CARDINALITIES) -> NadeDirectionParams:
    total = sum(structure)
    return NadeDirectionParams(
        label_to_time=rng.normal(0.0, 0.01, (h_time, total)),
        time_to_feat=rng.normal(0.0, 1.0 / np.sqrt(h_time), (h_feat, h_time)),
        sub_to_feat=[rng.normal(0.0, 1.0 / np.sqrt(h_feat), (h_feat, c))
                     for c in structure],
        feat_to_vis=[rng.normal(0.0, 1.0 / np.sqrt(h_feat), (c, h_feat))
                     for c in structure],
    )


def zero_direction_params(h_time: int, h_feat: int,
                          structure=CARDINALITIES) -> NadeDirectionParams:
    return NadeDirectionParams(
        label_to_time=np.zeros((h_time, sum(structure))),
        time_to_feat=np.zeros((h_feat, h_time)),
        sub_to_feat=[np.zeros((h_feat, c)) for c in structure],
        feat_to_vis=[np.zeros((c, h_feat)) for c in structure],
    )


@dataclass
class OracleMask:
    """Sparse ground-truth overrides keyed by (frame, sub-label)."""

    cells: dict

    def __init__(self, cells=None, structure=CARDINALITIES):
        self.cells = {}
        if cells:
            for (t, s), cls in dict(cells).items():
                self.add(t, s, cls, structure)

    def add(self, frame: int, sublabel: int, cls: int,
            structure=CARDINALITIES) -> None:
        if not 0 <= sublabel < len(structure):
            raise ValueError(f"sub-label index {sublabel} out of range")
        if not 0 <= cls < structure[sublabel]:
            raise ValueError(f"class {cls} out of range for sub-label {sublabel}")
        if frame < 0:
            raise ValueError(f"negative frame index {frame}")
        self.cells[(int(frame), int(sublabel))] = int(cls)

    def __len__(self):
        return len(self.cells)

    def __iter__(self):
        return iter(sorted(self.cells.items()))

    def validate_frames(self, num_frames: int) -> None:
        for (t, _s) in self.cells:
            if t >= num_frames:
                raise ValueError(f"mask frame {t} outside 0..{num_frames - 1}")


@dataclass
class PredictionResult:
    """Per-cell logits/probabilities/choices plus per-frame labels.

    ``logits`` holds the direction-averaged logits; ``confidence`` is the
    max softmax probability per cell; ``chosen`` is the argmax unless
    sampling or an oracle overwrite applied.
    """

    logits: list
    probabilities: list
    chosen: np.ndarray
    confidence: np.ndarray

    @property
    def num_frames(self) -> int:
        return self.chosen.shape[0]

    def labels(self):
        return [HarmonyFrameLabel.decode(row) for row in self.chosen]

    def bit_equal(self, other: "PredictionResult") -> bool:
        return (all(np.array_equal(a, b) for a, b in zip(self.logits, other.logits))
                and all(np.array_equal(a, b)
                        for a, b in zip(self.probabilities, other.probabilities))
                and np.array_equal(self.chosen, other.chosen)
                and np.array_equal(self.confidence, other.confidence))


def apply_droot_nudge(logits: np.ndarray, key_root: int,
                      chord_root: int) -> np.ndarray:
    """Add the constant bonus at the droot implied by the resolved roots.

    No-op when either root is the N class (droot undefined).
    """
    if key_root == PC_NONE or chord_root == PC_NONE:
        return logits
    out = logits.copy()
    out[compute_droot(key_root, chord_root)] += DROOT_NUDGE
    return out


# ---------------------------------------------------------------------------
# drives: one class decision per visited cell

def target_drive(targets):
    targets = np.asarray(targets, dtype=np.int64)

    def drive(t, s, logits):
        return int(targets[t, s])

    return drive


def free_drive(mode: str = "argmax", rng=None):
    if mode not in ("argmax", "sample"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sample mode needs an rng")

    def drive(t, s, logits):
        if mode == "argmax":
            return int(np.argmax(logits))
        return _sample_index(logits, rng)

    return drive


def masked_drive(mask: OracleMask, fallback):
    cells = mask.cells

    def drive(t, s, logits):
        cls = cells.get((t, s))
        if cls is not None:
            return cls
        return fallback(t, s, logits)

    return drive


def _sample_index(logits, rng) -> int:
    z = logits - logits.max()
    p = np.exp(z)
    p /= p.sum()
    return int(np.searchsorted(np.cumsum(p), rng.random()))


def _as_drive(drive):
    if callable(drive):
        return drive
    iterator = iter(drive)

    def from_iter(t, s, logits):
        try:
            step = next(iterator)
        except StopIteration:
            raise DriveExhaustedError(
                f"drive exhausted before cell (frame {t}, sub-label {s})")
        if step == "sample":
            raise ValueError("iterator drives must supply fixed classes")
        return int(step)

    return from_iter


# ---------------------------------------------------------------------------

def nade_pass_direction(bias: BiasField, params: NadeDirectionParams, drive,
                        *, reverse: bool = False, nudge: bool = True):
    """One direction's full pass over an excerpt.

    Visits frames in direction order (reversed when ``reverse``) and
    sub-labels within each frame in the fixed order. ``drive`` decides the
    class of every visited cell from its logits; those decisions feed the
    accumulator updates. Returns (per-sub-label logits, resolved classes).
    """
    drive = _as_drive(drive)
    structure = params.structure
    offsets = np.cumsum([0] + list(structure))
    if bias.b_vis.shape[1] != offsets[-1]:
        raise ValueError(f"visible bias width {bias.b_vis.shape[1]} does not "
                         f"match label structure {structure}")
    num_frames = bias.num_frames
    droot_pos = DROOT if structure == CARDINALITIES else None
    order = range(num_frames - 1, -1, -1) if reverse else range(num_frames)

    logits_out = [np.zeros((num_frames, c)) for c in structure]
    resolved = np.zeros((num_frames, len(structure)), dtype=np.int64)
    accum_time = np.zeros(params.h_time)
    for t in order:
        h_time = sigmoid(bias.b_time[t] + accum_time)
        feat = bias.b_feat[t] + params.time_to_feat @ h_time
        for s, c in enumerate(structure):
            z = (params.feat_to_vis[s] @ sigmoid(feat)
                 + bias.b_vis[t, offsets[s]:offsets[s + 1]])
            if nudge and s == droot_pos:
                z = apply_droot_nudge(z, resolved[t, KEY_ROOT],
                                      resolved[t, CHORD_ROOT])
            logits_out[s][t] = z
            cls = drive(t, s, z)
            if not 0 <= cls < c:
                raise ValueError(f"drive returned class {cls} outside "
                                 f"0..{c - 1} at frame {t}, sub-label {s}")
            resolved[t, s] = cls
            feat = feat + params.sub_to_feat[s][:, cls]
        step = np.zeros(params.h_time)
        for s in range(len(structure)):
            step = step + params.label_to_time[:, offsets[s] + resolved[t, s]]
        accum_time = accum_time + step
    return logits_out, resolved


def teacher_forced_logits(bias: BiasField, params: NadeDirectionParams,
                          targets, *, reverse: bool = False,
                          nudge: bool = True):
    """Logits of a pass driven entirely by the target classes."""
    logits, _ = nade_pass_direction(bias, params, target_drive(targets),
                                    reverse=reverse, nudge=nudge)
    return logits


def _average_result(left, right, structure, mode, rng):
    logits = [(a + b) / 2.0 for a, b in zip(left, right)]
    probabilities = [softmax_rows(z) for z in logits]
    num_frames = logits[0].shape[0]
    chosen = np.zeros((num_frames, len(structure)), dtype=np.int64)
    for s, p in enumerate(probabilities):
        if mode == "argmax":
            chosen[:, s] = p.argmax(axis=1)
        else:
            for t in range(num_frames):
                chosen[t, s] = _sample_index(logits[s][t], rng)
    confidence = np.column_stack([p.max(axis=1) for p in probabilities])
    return PredictionResult(logits, probabilities, chosen, confidence)


def infer(bias: BiasField, params_l2r: NadeDirectionParams,
          params_r2l: NadeDirectionParams, mode: str = "argmax",
          seed=None, nudge: bool = True) -> PredictionResult:
    """Free-running bidirectional inference.

    Each direction resolves its own chain from its own logits; the final
    decision per cell comes from the arithmetic mean of the two directions'
    logits. Argmax mode is fully deterministic.
    """
    rng = np.random.default_rng(seed) if mode == "sample" else None
    left, _ = nade_pass_direction(bias, params_l2r, free_drive(mode, rng),
                                  reverse=False, nudge=nudge)
    right, _ = nade_pass_direction(bias, params_r2l, free_drive(mode, rng),
                                   reverse=True, nudge=nudge)
    return _average_result(left, right, params_l2r.structure, mode, rng)


def infer_constrained(bias: BiasField, params_l2r: NadeDirectionParams,
                      params_r2l: NadeDirectionParams, mask: OracleMask,
                      mode: str = "argmax", seed=None, nudge: bool = True,
                      propagate: bool = True) -> PredictionResult:
    """Inference under sparse ground-truth constraints.

    Masked cells are overwritten in the output; with ``propagate`` they
    also replace the sampled class in every accumulator update (teacher
    forcing), which is what lets one correction reach other cells. With
    ``propagate=False`` the chains run exactly as in :func:`infer` and only
    the outputs are overwritten (the non-autoregressive control).
    """
    mask.validate_frames(bias.num_frames)
    if propagate:
        rng = np.random.default_rng(seed) if mode == "sample" else None
        left, _ = nade_pass_direction(
            bias, params_l2r, masked_drive(mask, free_drive(mode, rng)),
            reverse=False, nudge=nudge)
        right, _ = nade_pass_direction(
            bias, params_r2l, masked_drive(mask, free_drive(mode, rng)),
            reverse=True, nudge=nudge)
        result = _average_result(left, right, params_l2r.structure, mode, rng)
    else:
        result = infer(bias, params_l2r, params_r2l, mode=mode, seed=seed,
                       nudge=nudge)
    for (t, s), cls in mask.cells.items():
        result.chosen[t, s] = cls
    return result
