"""Chord metrics, oracle policies, and cost/return-on-investment accounting.

The root/majmin/sevenths scores follow the standard chord-evaluation
semantics: frames whose reference chord falls outside a metric's comparable
vocabulary are excluded from its denominator, and chords compare by root
plus quality template (first eight semitone bins for majmin, all twelve for
sevenths). Oracle accuracy is the mean exact-class match over all 6*T cells,
and ROI is the accuracy gain per unit of annotation cost.

All functions here are pure; sweeps reuse one first pass per excerpt.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nade
from .labels import (CARDINALITIES, NUM_SUBLABELS, PC_NONE, Q_NONE, QUALITIES,
                     QUALITY_TEMPLATES, SUBLABEL_NAMES, CHORD_QUALITY,
                     CHORD_ROOT)
from .nade import OracleMask


class OracleCostError(ValueError):
    """ROI is undefined at zero cost (distinct from an infinite ratio)."""


@dataclass
class MetricScores:
    root: float
    majmin: float
    sevenths: float
    sublabel_accuracy: tuple

    def as_dict(self) -> dict:
        return {"root": self.root, "majmin": self.majmin,
                "sevenths": self.sevenths,
                "sublabel_accuracy": dict(zip(SUBLABEL_NAMES,
                                              self.sublabel_accuracy))}


@dataclass
class OracleReport:
    cost: float
    accuracy_original: float
    accuracy_oracle: float
    roi: float | None
    sublabel_deltas: tuple

    def as_dict(self) -> dict:
        return {"cost": self.cost,
                "accuracy_original": self.accuracy_original,
                "accuracy_oracle": self.accuracy_oracle,
                "roi": self.roi,
                "sublabel_deltas": dict(zip(SUBLABEL_NAMES,
                                            self.sublabel_deltas))}


def _as_label_array(labels) -> np.ndarray:
    if isinstance(labels, np.ndarray):
        return labels.astype(np.int64)
    if isinstance(labels, nade.PredictionResult):
        return labels.chosen
    return np.array([f.encode() for f in labels], dtype=np.int64)


def sublabel_accuracy(pred, gt, sublabel: int) -> float:
    """Fraction of frames whose class matches for one sub-label."""
    pred, gt = _as_label_array(pred), _as_label_array(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {gt.shape}")
    return float(np.mean(pred[:, sublabel] == gt[:, sublabel]))


def cell_accuracy(pred, gt) -> float:
    """Mean exact-class match over all 6*T cells (the ROI accuracy)."""
    pred, gt = _as_label_array(pred), _as_label_array(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {gt.shape}")
    return float(np.mean(pred == gt))


def _template_bits(quality_index: int) -> np.ndarray:
    bits = np.zeros(12, dtype=np.int64)
    if quality_index != Q_NONE:
        for semitone in QUALITY_TEMPLATES[QUALITIES[quality_index]]:
            bits[semitone] = 1
    return bits


def _effective_chords(labels):
    """(root, template) per frame; a missing root or quality means no-chord."""
    arr = _as_label_array(labels)
    roots = arr[:, CHORD_ROOT].copy()
    qualities = arr[:, CHORD_QUALITY]
    none = (roots == PC_NONE) | (qualities == Q_NONE)
    roots[none] = -1
    templates = np.array([_template_bits(Q_NONE) if n else _template_bits(q)
                          for q, n in zip(qualities, none)])
    return roots, templates


def _scored_mean(comparisons: np.ndarray) -> float:
    included = comparisons >= 0
    if not included.any():
        return 0.0
    return float(comparisons[included].mean())


def score_root(pred, gt) -> float:
    """Root agreement; no-chord matches only no-chord."""
    pred_roots, _ = _effective_chords(pred)
    gt_roots, _ = _effective_chords(gt)
    if pred_roots.shape != gt_roots.shape:
        raise ValueError("length mismatch")
    return _scored_mean((pred_roots == gt_roots).astype(float))


_MAJ8 = _template_bits(QUALITIES.index("maj"))[:8]
_MIN8 = _template_bits(QUALITIES.index("min"))[:8]


def score_majmin(pred, gt) -> float:
    """Triad-level agreement on the {major, minor, no-chord} vocabulary.

    Reference frames whose first eight template bins are neither the major
    nor the minor triad (and not no-chord) are excluded from the
    denominator; estimates must match root and those bins exactly.
    """
    pred_roots, pred_bits = _effective_chords(pred)
    gt_roots, gt_bits = _effective_chords(gt)
    if pred_roots.shape != gt_roots.shape:
        raise ValueError("length mismatch")
    eq = ((pred_roots == gt_roots)
          & np.all(pred_bits[:, :8] == gt_bits[:, :8], axis=1))
    scores = eq.astype(float)
    is_maj = np.all(gt_bits[:, :8] == _MAJ8, axis=1)
    is_min = np.all(gt_bits[:, :8] == _MIN8, axis=1)
    is_none = (gt_roots == -1)
    scores[~(is_maj | is_min | is_none)] = -1.0
    return _scored_mean(scores)


_SEVENTH_QUALITIES = tuple(QUALITIES.index(q)
                           for q in ("maj", "min", "7", "maj7", "min7"))


def score_sevenths(pred, gt) -> float:
    """Seventh-level agreement: full template match on the comparable set.

    Reference chords outside {maj, min, 7, maj7, min7, no-chord} are
    excluded from the denominator.
    """
    pred_roots, pred_bits = _effective_chords(pred)
    gt_roots, gt_bits = _effective_chords(gt)
    if pred_roots.shape != gt_roots.shape:
        raise ValueError("length mismatch")
    eq = (pred_roots == gt_roots) & np.all(pred_bits == gt_bits, axis=1)
    scores = eq.astype(float)
    valid = np.zeros(len(scores), dtype=bool)
    for q in _SEVENTH_QUALITIES:
        valid |= np.all(gt_bits == _template_bits(q), axis=1) & (gt_roots >= 0)
    valid |= gt_roots == -1
    scores[~valid] = -1.0
    return _scored_mean(scores)


def metric_scores(pred, gt) -> MetricScores:
    return MetricScores(
        root=score_root(pred, gt),
        majmin=score_majmin(pred, gt),
        sevenths=score_sevenths(pred, gt),
        sublabel_accuracy=tuple(sublabel_accuracy(pred, gt, s)
                                for s in range(NUM_SUBLABELS)),
    )


# ---------------------------------------------------------------------------
# oracle cost, ROI and annotation policies

def oracle_cost(mask: OracleMask, num_frames: int) -> float:
    """Fraction of the 6*T annotation cells supplied by the oracle."""
    if num_frames <= 0:
        raise ValueError("num_frames must be positive")
    return len(mask) / (NUM_SUBLABELS * num_frames)


def oracle_roi(accuracy_oracle: float, accuracy_original: float,
               cost: float) -> float:
    """Accuracy gain per unit cost; undefined (error) at zero cost."""
    if cost <= 0:
        raise OracleCostError("oracle ROI is undefined at zero cost")
    return (accuracy_oracle - accuracy_original) / cost


def policy_full_sublabel(gt, sublabels) -> OracleMask:
    """Ground truth for the listed sub-labels at every frame."""
    arr = _as_label_array(gt)
    mask = OracleMask()
    for s in sublabels:
        for t in range(arr.shape[0]):
            mask.add(t, s, int(arr[t, s]))
    return mask


def policy_wrong_subset(gt, first_pass: nade.PredictionResult,
                        fraction: float, sublabels, seed: int = 0) -> OracleMask:
    """Correct a uniform sample of the wrong cells on the listed sub-labels.

    Selects ceil(fraction * wrong) cells, deterministically per seed; a
    fully correct first pass yields an empty mask.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    arr = _as_label_array(gt)
    wrong = [(t, s) for s in sublabels for t in range(arr.shape[0])
             if first_pass.chosen[t, s] != arr[t, s]]
    mask = OracleMask()
    if not wrong:
        return mask
    rng = np.random.default_rng(seed)
    count = math.ceil(fraction * len(wrong))
    for i in rng.choice(len(wrong), size=count, replace=False):
        t, s = wrong[i]
        mask.add(t, s, int(arr[t, s]))
    return mask


def policy_confidence_threshold(first_pass: nade.PredictionResult,
                                threshold: float):
    """Cells whose first-pass confidence is strictly below the threshold.

    Returns bare (frame, sub-label) cells; the caller fills in ground truth
    (see :func:`mask_from_cells`) since the policy itself never sees it.
    """
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must be in [0, 1]")
    t_idx, s_idx = np.nonzero(first_pass.confidence < threshold)
    return list(zip(t_idx.tolist(), s_idx.tolist()))


def mask_from_cells(cells, gt) -> OracleMask:
    arr = _as_label_array(gt)
    mask = OracleMask()
    for t, s in cells:
        mask.add(t, s, int(arr[t, s]))
    return mask


def run_oracle(model, features, gt, mask: OracleMask,
               propagate: bool = True, bias=None,
               first_pass: nade.PredictionResult = None):
    """First pass, constrained second pass, and the resulting report."""
    gt_arr = _as_label_array(gt)
    bias = bias if bias is not None else model.bias_field(features)
    if first_pass is None:
        first_pass = model.infer(bias)
    second = model.infer_constrained(bias, mask, propagate=propagate)
    cost = oracle_cost(mask, bias.num_frames)
    acc_first = cell_accuracy(first_pass, gt_arr)
    acc_second = cell_accuracy(second, gt_arr)
    roi = oracle_roi(acc_second, acc_first, cost) if cost > 0 else None
    deltas = tuple(sublabel_accuracy(second, gt_arr, s)
                   - sublabel_accuracy(first_pass, gt_arr, s)
                   for s in range(NUM_SUBLABELS))
    report = OracleReport(cost, acc_first, acc_second, roi, deltas)
    return report, first_pass, second


@dataclass
class SweepRow:
    threshold: float
    excerpt: int
    cost: float
    roi: float | None

    @property
    def used(self) -> bool:
        return self.cost > 0


@dataclass
class SweepResult:
    rows: list

    def threshold_summary(self):
        """(threshold, used count, mean roi over used excerpts or None)."""
        summary = []
        thresholds = sorted({row.threshold for row in self.rows})
        for threshold in thresholds:
            rois = [row.roi for row in self.rows
                    if row.threshold == threshold and row.used]
            mean = float(np.mean(rois)) if rois else None
            summary.append((threshold, len(rois), mean))
        return summary

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("threshold,excerpt,cost,roi\n")
            for row in self.rows:
                roi = "" if row.roi is None else repr(row.roi)
                fh.write(f"{row.threshold!r},{row.excerpt},{row.cost!r},{roi}\n")


def roi_sweep(model, corpus, thresholds) -> SweepResult:
    """Confidence-threshold oracle sweep over a labelled corpus.

    For each excerpt the first pass runs once; each threshold masks the
    below-threshold cells with ground truth and re-infers under the mask.
    Rows with zero cost mark thresholds where the oracle went unused.
    """
    thresholds = list(thresholds)
    if thresholds != sorted(thresholds):
        raise ValueError("thresholds must be sorted ascending")
    rows = []
    for excerpt_id, (features, gt) in enumerate(corpus):
        bias = model.bias_field(features)
        first_pass = model.infer(bias)
        gt_arr = _as_label_array(gt)
        for threshold in thresholds:
            cells = policy_confidence_threshold(first_pass, threshold)
            mask = mask_from_cells(cells, gt_arr)
            cost = oracle_cost(mask, bias.num_frames)
            if cost == 0:
                rows.append(SweepRow(threshold, excerpt_id, 0.0, None))
                continue
            report, _, _ = run_oracle(model, features, gt_arr, mask,
                                      bias=bias, first_pass=first_pass)
            rows.append(SweepRow(threshold, excerpt_id, report.cost,
                                 report.roi))
    return SweepResult(rows)
