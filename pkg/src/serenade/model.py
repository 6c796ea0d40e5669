"""Bundles the extractor weights and both decoder directions behind one
object with inference entry points. Parameters live in a flat name ->
array mapping shared with the optimizer and the checkpoint container.
"""
from __future__ import annotations

import numpy as np

from . import nade
from .extractor import (BiasField, ExtractorConfig, extract_bias_fields,
                        init_extractor_params)
from .labels import CARDINALITIES
from .nade import NadeDirectionParams, OracleMask, init_direction_params

DIRECTIONS = ("l2r", "r2l")


def _direction_tensors(prefix: str, params: NadeDirectionParams) -> dict:
    tensors = {
        f"{prefix}.label_to_time": params.label_to_time,
        f"{prefix}.time_to_feat": params.time_to_feat,
    }
    for s, m in enumerate(params.sub_to_feat):
        tensors[f"{prefix}.sub_to_feat.{s}"] = m
    for s, m in enumerate(params.feat_to_vis):
        tensors[f"{prefix}.feat_to_vis.{s}"] = m
    return tensors


def direction_from_tensors(tensors: dict, prefix: str,
                           structure=CARDINALITIES) -> NadeDirectionParams:
    return NadeDirectionParams(
        label_to_time=tensors[f"{prefix}.label_to_time"],
        time_to_feat=tensors[f"{prefix}.time_to_feat"],
        sub_to_feat=[tensors[f"{prefix}.sub_to_feat.{s}"]
                     for s in range(len(structure))],
        feat_to_vis=[tensors[f"{prefix}.feat_to_vis.{s}"]
                     for s in range(len(structure))],
    )


class SerenadeModel:
    """All learnable weights plus the architecture that shapes them."""

    def __init__(self, config: ExtractorConfig, tensors: dict):
        self.config = config
        self.tensors = tensors

    @classmethod
    def init(cls, config: ExtractorConfig = None, seed: int = 0) -> "SerenadeModel":
        config = config or ExtractorConfig()
        rng = np.random.default_rng(seed)
        tensors = init_extractor_params(config, rng)
        for prefix in DIRECTIONS:
            direction = init_direction_params(config.h_time, config.h_feat, rng)
            tensors.update(_direction_tensors(f"nade.{prefix}", direction))
        return cls(config, tensors)

    @property
    def extractor_params(self) -> dict:
        return {k: v for k, v in self.tensors.items()
                if k.startswith("extractor.")}

    @property
    def l2r(self) -> NadeDirectionParams:
        return direction_from_tensors(self.tensors, "nade.l2r")

    @property
    def r2l(self) -> NadeDirectionParams:
        return direction_from_tensors(self.tensors, "nade.r2l")

    def param_count(self) -> int:
        return int(sum(v.size for v in self.tensors.values()))

    def bias_field(self, features) -> BiasField:
        return extract_bias_fields(features, self.extractor_params, self.config)

    def infer(self, features, mode: str = "argmax", seed=None,
              nudge: bool = True) -> nade.PredictionResult:
        bias = features if isinstance(features, BiasField) else self.bias_field(features)
        return nade.infer(bias, self.l2r, self.r2l, mode=mode, seed=seed,
                          nudge=nudge)

    def infer_constrained(self, features, mask: OracleMask,
                          mode: str = "argmax", seed=None, nudge: bool = True,
                          propagate: bool = True) -> nade.PredictionResult:
        bias = features if isinstance(features, BiasField) else self.bias_field(features)
        return nade.infer_constrained(bias, self.l2r, self.r2l, mask,
                                      mode=mode, seed=seed, nudge=nudge,
                                      propagate=propagate)

    def copy(self) -> "SerenadeModel":
        return SerenadeModel(self.config,
                             {k: v.copy() for k, v in self.tensors.items()})

    def quantize(self) -> "SerenadeModel":
        """Round every weight to its nearest float32 value, in place.

        Keeps in-memory inference bit-identical to inference after a
        save/load cycle through the 32-bit checkpoint format.
        """
        for name, value in self.tensors.items():
            self.tensors[name] = value.astype(np.float32).astype(np.float64)
        return self
