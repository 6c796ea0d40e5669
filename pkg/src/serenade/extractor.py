"""Convolutional feature extractor producing the per-frame decoder biases.

A 1-D DenseNet over the T x 48 input: an initial 1x1 projection, dense
blocks whose layers convolve the concatenation of everything before them,
and a final 1x1 projection to the three bias segments (time hidden,
feature hidden, visible). Stride is 1 with symmetric padding, so frame
count is preserved and both decoding directions share the same biases.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensorcore as tc
from .labels import CARDINALITIES

V_TOTAL = sum(CARDINALITIES)  # 66 visible units across the six sub-labels
N_INPUT = 48


@dataclass(frozen=True)
class ExtractorConfig:
    """Architecture of the extractor and the decoder hidden sizes.

    The defaults put the extractor plus both decoder directions at about
    173k weights.
    """

    initial_channels: int = 32
    blocks: int = 2
    layers_per_block: int = 3
    growth: int = 24
    kernel: int = 9
    h_time: int = 48
    h_feat: int = 48

    def __post_init__(self):
        if self.kernel % 2 == 0 or self.kernel < 1:
            raise ValueError("kernel width must be odd")
        for name in ("initial_channels", "blocks", "layers_per_block",
                     "growth", "h_time", "h_feat"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    @property
    def output_width(self) -> int:
        return self.h_time + self.h_feat + V_TOTAL

    @property
    def final_channels(self) -> int:
        return (self.initial_channels
                + self.blocks * self.layers_per_block * self.growth)

    def receptive_field_radius(self) -> int:
        return self.blocks * self.layers_per_block * (self.kernel // 2)


@dataclass
class BiasField:
    """Per-frame decoder biases: one (b_time, b_feat, b_vis) triple per frame."""

    b_time: np.ndarray
    b_feat: np.ndarray
    b_vis: np.ndarray

    def __post_init__(self):
        t = self.b_time.shape[0]
        if self.b_feat.shape[0] != t or self.b_vis.shape[0] != t:
            raise ValueError("bias segments disagree on frame count")
        # b_vis width is validated against the decoder's label structure at
        # pass time (toy structures are narrower than the production 66)

    @property
    def num_frames(self) -> int:
        return self.b_time.shape[0]


def init_extractor_params(config: ExtractorConfig, rng) -> dict:
    """He-style initial weights, zero biases; keys name the layers."""
    params = {}

    def conv(name, fan_in, fan_out):
        params[f"{name}.w"] = rng.normal(0.0, np.sqrt(2.0 / fan_in),
                                         (fan_in, fan_out))
        params[f"{name}.b"] = np.zeros((1, fan_out))

    conv("extractor.initial", N_INPUT, config.initial_channels)
    channels = config.initial_channels
    for b in range(config.blocks):
        for l in range(config.layers_per_block):
            conv(f"extractor.block{b}.layer{l}", channels * config.kernel,
                 config.growth)
            channels += config.growth
    params["extractor.project.w"] = rng.normal(
        0.0, np.sqrt(1.0 / channels), (channels, config.output_width))
    params["extractor.project.b"] = np.zeros((1, config.output_width))
    return params


def densenet_block(x, layer_params, kernel: int):
    """One dense block over graph nodes: T x C -> T x (C + layers*growth)."""
    for w, b in layer_params:
        u = tc.unfold_rows(x, kernel)
        y = tc.relu(tc.add_bias(tc.matmul(u, w), b))
        x = tc.concat_cols([x, y])
    return x


def extract_bias_nodes(features, param_nodes, config: ExtractorConfig):
    """Graph forward pass; returns (b_time, b_feat, b_vis) nodes."""
    x = features if isinstance(features, tc.Node) else tc.constant(features)
    if x.value.shape[1] != N_INPUT:
        raise tc.ShapeError(f"extractor input must have {N_INPUT} columns, "
                            f"got {x.value.shape[1]}")
    x = tc.add_bias(tc.matmul(x, param_nodes["extractor.initial.w"]),
                    param_nodes["extractor.initial.b"])
    for b in range(config.blocks):
        layers = [(param_nodes[f"extractor.block{b}.layer{l}.w"],
                   param_nodes[f"extractor.block{b}.layer{l}.b"])
                  for l in range(config.layers_per_block)]
        x = densenet_block(x, layers, config.kernel)
    out = tc.add_bias(tc.matmul(x, param_nodes["extractor.project.w"]),
                      param_nodes["extractor.project.b"])
    h_t, h_f = config.h_time, config.h_feat
    return (tc.slice_cols(out, 0, h_t),
            tc.slice_cols(out, h_t, h_t + h_f),
            tc.slice_cols(out, h_t + h_f, h_t + h_f + V_TOTAL))


def wrap_params(params: dict) -> dict:
    return {name: tc.parameter(value) for name, value in params.items()}


def extract_bias_fields(features, params: dict,
                        config: ExtractorConfig) -> BiasField:
    """Plain-array forward pass for inference paths."""
    frames = getattr(features, "frames", features)
    b_time, b_feat, b_vis = extract_bias_nodes(
        np.asarray(frames, dtype=np.float64), wrap_params(params), config)
    return BiasField(b_time.value, b_feat.value, b_vis.value)


def param_count(params: dict) -> int:
    return int(sum(v.size for v in params.values()))
