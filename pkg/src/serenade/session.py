"""Annotation sessions: first-pass prediction, incremental human
corrections, constrained re-inference, and cost/ROI reporting.

The annotation log is append-only; the oracle mask is rebuilt from the
full log on every batch (last write wins per cell), so replaying a log on
a fresh session reproduces the latest prediction bit-exactly. Re-inference
is full-excerpt on every batch; at production excerpt lengths this is
sub-second on one core.
"""
from __future__ import annotations

import json
import time
import uuid
from dataclasses import dataclass

from .evaluation import (cell_accuracy, oracle_cost, oracle_roi,
                         sublabel_accuracy, _as_label_array)
from .labels import CARDINALITIES, NUM_SUBLABELS, SUBLABEL_NAMES
from .nade import OracleMask, PredictionResult


@dataclass
class AnnotationEntry:
    frame: int
    sublabel: int
    cls: int
    timestamp: float

    def as_dict(self) -> dict:
        return {"frame": self.frame, "sublabel": self.sublabel,
                "class": self.cls, "timestamp": self.timestamp}


@dataclass
class DeltaSummary:
    """Cells whose chosen class changed after a batch, by cause."""

    annotated: list
    propagated: list
    cost: float


class Session:
    """One excerpt under annotation against a fixed checkpoint."""

    def __init__(self, model, features, ground_truth=None, session_id=None,
                 checkpoint_id: str = ""):
        self.session_id = session_id or uuid.uuid4().hex
        self.checkpoint_id = checkpoint_id
        self.features = features
        self.model = model
        self.bias = model.bias_field(features)
        self.ground_truth = (None if ground_truth is None
                             else _as_label_array(ground_truth))
        self.log: list[AnnotationEntry] = []
        self.first_pass: PredictionResult = model.infer(self.bias)
        self.prediction: PredictionResult = self.first_pass

    @property
    def num_frames(self) -> int:
        return self.bias.num_frames

    def current_mask(self) -> OracleMask:
        mask = OracleMask()
        for entry in self.log:
            mask.add(entry.frame, entry.sublabel, entry.cls)
        return mask

    @property
    def cost(self) -> float:
        return oracle_cost(self.current_mask(), self.num_frames)

    def annotate(self, cells) -> DeltaSummary:
        """Append (frame, sublabel, class) cells and re-infer under the log.

        Returns every cell whose chosen class changed, split into cells
        that were directly annotated and cells the model propagated to.
        """
        stamped = []
        for frame, sublabel, cls in cells:
            if not 0 <= frame < self.num_frames:
                raise ValueError(f"frame {frame} outside 0..{self.num_frames - 1}")
            if not 0 <= sublabel < NUM_SUBLABELS:
                raise ValueError(f"sub-label {sublabel} outside 0..5")
            if not 0 <= cls < CARDINALITIES[sublabel]:
                raise ValueError(f"class {cls} out of range for "
                                 f"{SUBLABEL_NAMES[sublabel]}")
            stamped.append(AnnotationEntry(int(frame), int(sublabel),
                                           int(cls), time.time()))
        self.log.extend(stamped)
        mask = self.current_mask()
        previous = self.prediction
        self.prediction = self.model.infer_constrained(self.bias, mask)
        annotated, propagated = [], []
        for t in range(self.num_frames):
            for s in range(NUM_SUBLABELS):
                if previous.chosen[t, s] != self.prediction.chosen[t, s]:
                    if (t, s) in mask.cells:
                        annotated.append((t, s))
                    else:
                        propagated.append((t, s))
        return DeltaSummary(annotated, propagated, self.cost)

    def report(self) -> dict:
        """Cost always; accuracy deltas and ROI only with ground truth."""
        mask = self.current_mask()
        cost = oracle_cost(mask, self.num_frames)
        out = {"session_id": self.session_id, "annotations": len(mask),
               "cost": cost, "roi": None, "accuracy_original": None,
               "accuracy_oracle": None, "sublabel_deltas": None}
        if self.ground_truth is not None:
            acc_first = cell_accuracy(self.first_pass, self.ground_truth)
            acc_now = cell_accuracy(self.prediction, self.ground_truth)
            out["accuracy_original"] = acc_first
            out["accuracy_oracle"] = acc_now
            if cost > 0:
                out["roi"] = oracle_roi(acc_now, acc_first, cost)
            out["sublabel_deltas"] = {
                SUBLABEL_NAMES[s]:
                    sublabel_accuracy(self.prediction, self.ground_truth, s)
                    - sublabel_accuracy(self.first_pass, self.ground_truth, s)
                for s in range(NUM_SUBLABELS)}
        return out

    def save_log(self, path) -> None:
        """Append-only JSONL: header line, then one line per annotation."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"session_id": self.session_id,
                                 "checkpoint_id": self.checkpoint_id}) + "\n")
            for entry in self.log:
                fh.write(json.dumps(entry.as_dict()) + "\n")

    @classmethod
    def replay(cls, model, features, log_entries, ground_truth=None,
               session_id=None, checkpoint_id: str = "") -> "Session":
        """Fresh session with the whole log applied in one batch.

        The final prediction depends only on the accumulated mask, so this
        reproduces the original session's latest prediction bit-exactly.
        """
        session = cls(model, features, ground_truth, session_id, checkpoint_id)
        cells = [(e.frame, e.sublabel, e.cls) for e in log_entries]
        if cells:
            session.annotate(cells)
        return session


def load_log(path):
    """(header dict, annotation entries) from a session log file."""
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        entries = []
        for line in fh:
            if line.strip():
                record = json.loads(line)
                entries.append(AnnotationEntry(record["frame"],
                                               record["sublabel"],
                                               record["class"],
                                               record.get("timestamp", 0.0)))
    return header, entries


def expand_ranges(ranges):
    """(start, end, sublabel, class) ranges to per-frame cells, end exclusive."""
    cells = []
    for start, end, sublabel, cls in ranges:
        if end <= start:
            raise ValueError(f"empty frame range [{start}, {end})")
        cells.extend((t, sublabel, cls) for t in range(start, end))
    return cells
