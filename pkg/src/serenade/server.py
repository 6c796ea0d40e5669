"""HTTP+JSON annotation service.

Endpoints: ``POST /sessions`` (create from a corpus feature id or inline
chroma upload), ``GET /sessions/{id}/prediction``, ``POST
/sessions/{id}/annotations`` (cells or frame ranges), ``GET
/sessions/{id}/report``, ``GET /checkpoints``. Checkpoints are shared
read-only across sessions; each session serialises its own re-inference
behind a lock, so concurrent annotation batches queue.
"""
from __future__ import annotations

import os
import threading

import numpy as np
from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from .checkpoint import Checkpoint, CheckpointFormatError
from .corpus import load_track
from .features import Chromagram, assemble_input
from .labels import NUM_SUBLABELS, SUBLABEL_NAMES, class_names
from .session import Session, expand_ranges


class InlineFeatures(BaseModel):
    treble: list
    bass: list
    hop: float = Field(default=0.04644, gt=0)


class CreateSessionBody(BaseModel):
    checkpoint_id: str
    features_id: str | None = None
    features: InlineFeatures | None = None
    ground_truth: list | None = None
    use_reference_labels: bool = True


class CellBody(BaseModel):
    frame: int
    sublabel: int
    cls: int = Field(alias="class")

    model_config = {"populate_by_name": True}


class RangeBody(BaseModel):
    start: int
    end: int
    sublabel: int
    cls: int = Field(alias="class")

    model_config = {"populate_by_name": True}


class AnnotateBody(BaseModel):
    cells: list[CellBody] = []
    ranges: list[RangeBody] = []


def _prediction_json(session: Session) -> dict:
    prediction = session.prediction
    return {
        "session_id": session.session_id,
        "num_frames": session.num_frames,
        "sublabels": list(SUBLABEL_NAMES),
        "class_names": {SUBLABEL_NAMES[s]: class_names(s)
                        for s in range(NUM_SUBLABELS)},
        "classes": prediction.chosen.tolist(),
        "confidences": prediction.confidence.tolist(),
        "cost": session.cost,
        "has_ground_truth": session.ground_truth is not None,
    }


def create_app(checkpoint_dir: str, corpus_dir: str,
               sessions_dir: str | None = None) -> FastAPI:
    app = FastAPI(title="serenade annotation service")
    models: dict[str, object] = {}
    sessions: dict[str, Session] = {}
    locks: dict[str, threading.Lock] = {}
    registry_lock = threading.Lock()

    def get_model(checkpoint_id: str):
        with registry_lock:
            if checkpoint_id not in models:
                path = os.path.join(checkpoint_dir, checkpoint_id)
                if not os.path.exists(path):
                    raise HTTPException(404, f"unknown checkpoint {checkpoint_id!r}")
                try:
                    models[checkpoint_id] = Checkpoint.load(path).model
                except CheckpointFormatError as exc:
                    raise HTTPException(400, str(exc))
            return models[checkpoint_id]

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise HTTPException(404, f"unknown session {session_id!r}")
        return session

    @app.get("/checkpoints")
    def list_checkpoints():
        names = sorted(f for f in os.listdir(checkpoint_dir)
                       if f.endswith(".ckpt"))
        return {"checkpoints": names}

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        model = get_model(body.checkpoint_id)
        ground_truth = None
        if body.features is not None:
            treble = Chromagram(np.asarray(body.features.treble, dtype=float),
                                "treble", body.features.hop)
            bass = Chromagram(np.asarray(body.features.bass, dtype=float),
                              "bass", body.features.hop)
            features = assemble_input(treble, bass)
        elif body.features_id is not None:
            stem = os.path.join(corpus_dir, body.features_id)
            if not os.path.exists(f"{stem}.treble.chro"):
                raise HTTPException(404, f"unknown features id {body.features_id!r}")
            features, labels = load_track(stem)
            if body.use_reference_labels and labels is not None:
                ground_truth = labels
        else:
            raise HTTPException(400, "need features_id or inline features")
        if body.ground_truth is not None:
            ground_truth = np.asarray(body.ground_truth, dtype=np.int64)
        try:
            session = Session(model, features, ground_truth,
                              checkpoint_id=body.checkpoint_id)
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        sessions[session.session_id] = session
        locks[session.session_id] = threading.Lock()
        return _prediction_json(session)

    @app.get("/sessions/{session_id}/prediction")
    def prediction(session_id: str):
        return _prediction_json(get_session(session_id))

    @app.post("/sessions/{session_id}/annotations")
    def annotate(session_id: str, body: AnnotateBody):
        session = get_session(session_id)
        cells = [(c.frame, c.sublabel, c.cls) for c in body.cells]
        try:
            cells += expand_ranges((r.start, r.end, r.sublabel, r.cls)
                                   for r in body.ranges)
        except ValueError as exc:
            raise HTTPException(400, str(exc))
        with locks[session_id]:
            try:
                delta = session.annotate(cells)
            except ValueError as exc:
                raise HTTPException(400, str(exc))
            if sessions_dir:
                os.makedirs(sessions_dir, exist_ok=True)
                session.save_log(os.path.join(sessions_dir,
                                              f"{session.session_id}.jsonl"))
        out = _prediction_json(session)
        out["annotated"] = [list(c) for c in delta.annotated]
        out["propagated"] = [list(c) for c in delta.propagated]
        return out

    @app.get("/sessions/{session_id}/report")
    def report(session_id: str):
        return get_session(session_id).report()

    return app
