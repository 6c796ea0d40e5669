"""Teacher-forced training: vectorised loss graph, Adam updates, and the
epoch loop with best-validation checkpointing.

Both directions are teacher-forced independently and their cross-entropies
averaged per cell, so the loss is the mean over frames, sub-labels and
directions. Gradients accumulate in a fixed excerpt order, which keeps
training bit-deterministic for a given seed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import tensorcore as tc
from .checkpoint import Checkpoint
from .extractor import ExtractorConfig, extract_bias_nodes
from .labels import CARDINALITIES, CHORD_ROOT, DROOT, KEY_ROOT, PC_NONE
from .model import SerenadeModel
from .nade import DROOT_NUDGE, SEGMENT_OFFSETS

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """The loss became non-finite; carries epoch/batch diagnostics."""


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 8
    epochs: int = 30
    grad_clip: float = 5.0
    seed: int = 0
    excerpt_frames: int = 64
    val_fraction: float = 0.15

    def __post_init__(self):
        for name in ("learning_rate", "batch_size", "epochs", "grad_clip",
                     "excerpt_frames", "val_fraction"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if not self.val_fraction < 1:
            raise ValueError("val_fraction must be below 1")

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _onehot(indices, classes: int) -> np.ndarray:
    out = np.zeros((len(indices), classes))
    out[np.arange(len(indices)), indices] = 1.0
    return out


def _nudge_matrix(targets) -> np.ndarray:
    """Constant logit bonus rows for frames whose target roots define a droot."""
    t = targets.shape[0]
    out = np.zeros((t, CARDINALITIES[DROOT]))
    keys = targets[:, KEY_ROOT]
    chords = targets[:, CHORD_ROOT]
    defined = (keys != PC_NONE) & (chords != PC_NONE)
    rows = np.nonzero(defined)[0]
    out[rows, (chords[rows] - keys[rows]) % 12] = DROOT_NUDGE
    return out


class TargetConstants:
    """Constant matrices a teacher-forced graph needs for one excerpt.

    Precomputed once per excerpt so epoch loops and finite-difference
    sweeps do not rebuild one-hots and prefix-sum masks on every pass.
    """

    def __init__(self, targets):
        targets = np.asarray(targets, dtype=np.int64)
        if targets.ndim != 2 or targets.shape[1] != len(CARDINALITIES):
            raise ValueError(f"targets must be T x {len(CARDINALITIES)}")
        self.targets = targets
        t = targets.shape[0]
        self.onehot66 = tc.Node(np.zeros((t, SEGMENT_OFFSETS[-1])))
        for s in range(len(CARDINALITIES)):
            self.onehot66.value[np.arange(t),
                                SEGMENT_OFFSETS[s] + targets[:, s]] = 1.0
        self.tri = {False: tc.Node(np.tril(np.ones((t, t)), -1)),
                    True: tc.Node(np.triu(np.ones((t, t)), 1))}
        self.onehots = [tc.Node(_onehot(targets[:, s], c))
                        for s, c in enumerate(CARDINALITIES)]
        self.nudge = tc.Node(_nudge_matrix(targets))

    @property
    def num_frames(self) -> int:
        return self.targets.shape[0]


def teacher_forced_logit_nodes(bias_nodes, node_map, prefix: str, targets,
                               *, reverse: bool = False,
                               nudge: bool = True):
    """Vectorised teacher-forced pass over graph nodes for one direction.

    Equivalent to the sequential pass with the targets as drive: the time
    accumulator is a strictly-triangular prefix sum of the per-frame label
    embeddings, and each sub-label step adds the target one-hot through the
    feature weights.
    """
    b_time, b_feat, b_vis = bias_nodes
    consts = (targets if isinstance(targets, TargetConstants)
              else TargetConstants(targets))
    label_embed = tc.matmul_t(consts.onehot66,
                              node_map[f"{prefix}.label_to_time"])
    accum_time = tc.matmul(consts.tri[reverse], label_embed)
    h_time = tc.sigmoid(tc.add(b_time, accum_time))
    feat = tc.add(b_feat, tc.matmul_t(h_time,
                                      node_map[f"{prefix}.time_to_feat"]))
    logits = []
    for s, c in enumerate(CARDINALITIES):
        z = tc.add(tc.matmul_t(tc.sigmoid(feat),
                               node_map[f"{prefix}.feat_to_vis.{s}"]),
                   tc.slice_cols(b_vis, SEGMENT_OFFSETS[s], SEGMENT_OFFSETS[s + 1]))
        if nudge and s == DROOT:
            z = tc.add(z, consts.nudge)
        logits.append(z)
        if s < len(CARDINALITIES) - 1:
            # the final sub-label's accumulator update is never read: the
            # feature state resets at the next frame
            feat = tc.add(feat, tc.matmul_t(consts.onehots[s],
                                            node_map[f"{prefix}.sub_to_feat.{s}"]))
    return logits


def loss_node(bias_nodes, node_map, targets, nudge: bool = True) -> tc.Node:
    """Scalar graph node: mean cross-entropy over cells and both directions."""
    consts = (targets if isinstance(targets, TargetConstants)
              else TargetConstants(targets))
    columns = []
    for prefix, reverse in (("nade.l2r", False), ("nade.r2l", True)):
        logits = teacher_forced_logit_nodes(bias_nodes, node_map, prefix,
                                            consts, reverse=reverse,
                                            nudge=nudge)
        for s, z in enumerate(logits):
            columns.append(tc.softmax_xent(z, consts.targets[:, s]))
    return tc.mean(tc.concat_cols(columns))


def loss(bias, model_or_tensors, targets, nudge: bool = True) -> float:
    """Teacher-forced loss of one excerpt given its bias field."""
    tensors = getattr(model_or_tensors, "tensors", model_or_tensors)
    node_map = {k: tc.parameter(v) for k, v in tensors.items()
                if k.startswith("nade.")}
    bias_nodes = (tc.constant(bias.b_time), tc.constant(bias.b_feat),
                  tc.constant(bias.b_vis))
    return float(loss_node(bias_nodes, node_map, targets, nudge).value[0, 0])


def excerpt_loss_node(features, node_map, config: ExtractorConfig, targets,
                      nudge: bool = True) -> tc.Node:
    """Full end-to-end graph: features -> extractor -> decoder loss."""
    frames = getattr(features, "frames", features)
    bias_nodes = extract_bias_nodes(np.asarray(frames, dtype=np.float64),
                                    node_map, config)
    return loss_node(bias_nodes, node_map, targets, nudge)


def targets_array(frame_labels) -> np.ndarray:
    return np.array([f.encode() for f in frame_labels], dtype=np.int64)


class Adam:
    """Adam with global-norm gradient clipping; state keyed by tensor name."""

    def __init__(self, tensors: dict, learning_rate: float, grad_clip: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.tensors = tensors
        self.lr = learning_rate
        self.clip = grad_clip
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.t = 0

    def step(self, grads: dict) -> None:
        norm = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        scale = self.clip / norm if norm > self.clip else 1.0
        self.t += 1
        correction = (np.sqrt(1.0 - self.beta2 ** self.t)
                      / (1.0 - self.beta1 ** self.t))
        for name, g in grads.items():
            g = g * scale
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            update = (self.m[name] * correction
                      / (np.sqrt(self.v[name]) + self.eps))
            self.tensors[name] -= self.lr * update


def _batch_gradients(model: SerenadeModel, batch, nudge: bool = True):
    node_map = {k: tc.parameter(v) for k, v in model.tensors.items()}
    total = None
    for features, targets in batch:
        one = excerpt_loss_node(features, node_map, model.config, targets,
                                nudge)
        total = one if total is None else tc.add(total, one)
    total = tc.scale(total, 1.0 / len(batch))
    tc.backward(total)
    value = float(total.value[0, 0])
    return value, {k: (n.grad if n.grad is not None else np.zeros_like(n.value))
                   for k, n in node_map.items()}


def mean_loss(model: SerenadeModel, excerpts, nudge: bool = True) -> float:
    node_map = {k: tc.parameter(v) for k, v in model.tensors.items()}
    values = [float(excerpt_loss_node(f, node_map, model.config, t, nudge)
                    .value[0, 0]) for f, t in excerpts]
    return float(np.mean(values))


def train(corpus, config: TrainConfig,
          model_config: ExtractorConfig = None) -> Checkpoint:
    """Train on (FeatureMatrix, frame-label list) pairs.

    Deterministic for a fixed seed: the seed fixes initialisation, the
    train/validation split and every shuffle. The best-validation epoch's
    weights are retained in the returned checkpoint.
    """
    if not corpus:
        raise ValueError("training corpus is empty")
    rng = np.random.default_rng(config.seed)
    model = SerenadeModel.init(model_config, seed=config.seed)
    prepared = [(features, TargetConstants(targets_array(labels)))
                for features, labels in corpus]
    order = rng.permutation(len(prepared))
    n_val = int(round(len(prepared) * config.val_fraction))
    n_val = min(max(n_val, 1 if len(prepared) > 1 else 0), len(prepared) - 1)
    val_set = [prepared[i] for i in order[:n_val]]
    train_set = [prepared[i] for i in order[n_val:]]
    if not val_set:
        val_set = train_set

    optimizer = Adam(model.tensors, config.learning_rate, config.grad_clip)
    history = []
    best_val = np.inf
    best_tensors = None
    best_epoch = -1
    for epoch in range(config.epochs):
        epoch_losses = []
        shuffled = [train_set[i] for i in rng.permutation(len(train_set))]
        for start in range(0, len(shuffled), config.batch_size):
            batch = shuffled[start:start + config.batch_size]
            value, grads = _batch_gradients(model, batch)
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch offset {start}")
            optimizer.step(grads)
            epoch_losses.append(value)
        val_loss = mean_loss(model, val_set)
        train_loss = float(np.mean(epoch_losses))
        history.append({"epoch": epoch, "train_loss": train_loss,
                        "val_loss": val_loss})
        log.info("epoch %d train %.4f val %.4f", epoch, train_loss, val_loss)
        if not np.isfinite(val_loss):
            raise TrainingDivergedError(f"non-finite validation loss at epoch {epoch}")
        if val_loss < best_val:
            best_val = val_loss
            best_tensors = {k: v.copy() for k, v in model.tensors.items()}
            best_epoch = epoch
    best = SerenadeModel(model.config, best_tensors).quantize()
    return Checkpoint(best, config.as_dict(), best_epoch, history)
