"""Command-line entry points: train, eval, infer, serve, param-count, synth."""
from __future__ import annotations

import dataclasses
import json
import os

import click
import numpy as np

from . import corpus as corpus_io
from . import evaluation
from .checkpoint import Checkpoint
from .extractor import ExtractorConfig
from .labels import (BASS_NUMBER, CHORD_QUALITY, CHORD_ROOT, DROOT,
                     KEY_QUALITY, KEY_ROOT, IntervalAnnotation,
                     write_interval_file)
from .training import TrainConfig, train


def parse_kv_config(path) -> dict:
    """TOML-style key=value lines; quotes optional, # starts a comment."""
    values = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise click.ClickException(f"{path}:{lineno}: expected key=value")
            values[key.strip()] = value.strip().strip('"').strip("'")
    return values


def _coerce_fields(cls, raw: dict, prefix: str = ""):
    kwargs = {}
    for field in dataclasses.fields(cls):
        key = prefix + field.name
        if key not in raw:
            continue
        value = raw.pop(key)
        if field.type in (int, "int"):
            kwargs[field.name] = int(value)
        elif field.type in (float, "float"):
            kwargs[field.name] = float(value)
        else:
            kwargs[field.name] = value
    return kwargs


@click.group()
def main():
    """Harmony estimation with human-in-the-loop refinement."""


@main.command("train")
@click.option("--corpus", "corpus_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def train_cmd(corpus_dir, config_path, out_path):
    """Train on a corpus directory and write an SRND1 checkpoint."""
    raw = parse_kv_config(config_path) if config_path else {}
    model_config = ExtractorConfig(**_coerce_fields(ExtractorConfig, raw,
                                                    "model."))
    train_config = TrainConfig(**_coerce_fields(TrainConfig, raw))
    if raw:
        raise click.ClickException(f"unknown config keys: {sorted(raw)}")
    excerpts = corpus_io.load_corpus_dir(corpus_dir,
                                         train_config.excerpt_frames)
    click.echo(f"training on {len(excerpts)} excerpts")
    checkpoint = train(excerpts, train_config, model_config)
    checkpoint.save(out_path)
    click.echo(f"saved checkpoint to {out_path} "
               f"(best epoch {checkpoint.epoch}, "
               f"val loss {checkpoint.history[checkpoint.epoch]['val_loss']:.4f})")


_ORACLE_SUBLABELS = {
    "key": (KEY_ROOT, KEY_QUALITY),
    "droot": (DROOT,),
}


def _apply_oracle(model, features, gt, spec: str, bias, first_pass):
    gt_arr = evaluation._as_label_array(gt)
    if spec in _ORACLE_SUBLABELS:
        mask = evaluation.policy_full_sublabel(gt_arr, _ORACLE_SUBLABELS[spec])
    elif spec.startswith("wrong:"):
        fraction = float(spec.split(":", 1)[1])
        mask = evaluation.policy_wrong_subset(
            gt_arr, first_pass, fraction,
            (CHORD_ROOT, CHORD_QUALITY, BASS_NUMBER))
    elif spec.startswith("conf:"):
        threshold = float(spec.split(":", 1)[1])
        cells = evaluation.policy_confidence_threshold(first_pass, threshold)
        mask = evaluation.mask_from_cells(cells, gt_arr)
    else:
        raise click.ClickException(f"unknown oracle spec {spec!r}")
    report, _, second = evaluation.run_oracle(model, features, gt_arr, mask,
                                              bias=bias, first_pass=first_pass)
    return report, second


@main.command("eval")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--corpus", "corpus_dir", required=True,
              type=click.Path(exists=True, file_okay=False))
@click.option("--oracle", "oracle_spec")
@click.option("--report", "report_path", type=click.Path())
@click.option("--sweep", "sweep_spec", help="t0:t1:steps confidence sweep")
@click.option("--sweep-out", "sweep_path", type=click.Path(),
              help="CSV output for --sweep (threshold, excerpt, cost, roi)")
@click.option("--excerpt-frames", type=int, default=None)
def eval_cmd(ckpt_path, corpus_dir, oracle_spec, report_path, sweep_spec,
             sweep_path, excerpt_frames):
    """Metric scores, optional oracle experiment, optional threshold sweep."""
    model = Checkpoint.load(ckpt_path).model
    excerpts = corpus_io.load_corpus_dir(corpus_dir, excerpt_frames)
    pooled_pred, pooled_gt = [], []
    oracle_reports = []
    for features, gt in excerpts:
        bias = model.bias_field(features)
        first_pass = model.infer(bias)
        prediction = first_pass
        if oracle_spec:
            report, prediction = _apply_oracle(model, features, gt,
                                               oracle_spec, bias, first_pass)
            oracle_reports.append(report)
        pooled_pred.append(prediction.chosen)
        pooled_gt.append(np.array([f.encode() for f in gt]))
    scores = evaluation.metric_scores(np.concatenate(pooled_pred),
                                      np.concatenate(pooled_gt))
    out = {"excerpts": len(excerpts), "metrics": scores.as_dict(),
           "oracle": None}
    if oracle_reports:
        used = [r for r in oracle_reports if r.roi is not None]
        out["oracle"] = {
            "spec": oracle_spec,
            "mean_cost": float(np.mean([r.cost for r in oracle_reports])),
            "mean_roi": (float(np.mean([r.roi for r in used]))
                         if used else None),
            "per_excerpt": [r.as_dict() for r in oracle_reports],
        }
    if sweep_spec:
        t0, t1, steps = sweep_spec.split(":")
        thresholds = np.linspace(float(t0), float(t1), int(steps))
        sweep = evaluation.roi_sweep(model, excerpts,
                                     [float(t) for t in thresholds])
        out["sweep"] = [{"threshold": t, "used": n, "mean_roi": m}
                        for t, n, m in sweep.threshold_summary()]
        if sweep_path:
            sweep.write_csv(sweep_path)
            click.echo(f"wrote sweep rows to {sweep_path}")
    text = json.dumps(out, indent=2)
    if report_path:
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        click.echo(f"wrote report to {report_path}")
    else:
        click.echo(text)


@main.command("infer")
@click.option("--features", "stem", required=True,
              help="track stem; expects <stem>.treble.chro and <stem>.bass.chro")
@click.option("--ckpt", "ckpt_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
def infer_cmd(stem, ckpt_path, out_path):
    """Write interval-merged chord labels (Harte syntax) for one track."""
    model = Checkpoint.load(ckpt_path).model
    features, _ = corpus_io.load_track(stem)
    prediction = model.infer(features)
    labels = prediction.labels()
    intervals = []
    start = 0
    for t in range(1, len(labels) + 1):
        if t == len(labels) or labels[t].chord_label() != labels[start].chord_label():
            intervals.append(IntervalAnnotation(
                start * features.hop, t * features.hop,
                labels[start].chord_label()))
            start = t
    write_interval_file(out_path, intervals)
    click.echo(f"wrote {len(intervals)} chord intervals to {out_path}")


@main.command("serve")
@click.option("--config", "config_path", type=click.Path(exists=True))
@click.option("--port", type=int, default=None)
@click.option("--checkpoint-dir", type=click.Path(file_okay=False))
@click.option("--corpus-dir", type=click.Path(file_okay=False))
@click.option("--sessions-dir", type=click.Path(file_okay=False))
def serve_cmd(config_path, port, checkpoint_dir, corpus_dir, sessions_dir):
    """Run the annotation service (config file keys: port, checkpoint_dir,
    corpus_dir, sessions_dir; flags override)."""
    import uvicorn

    from .server import create_app

    raw = parse_kv_config(config_path) if config_path else {}
    port = port if port is not None else int(raw.get("port", 8000))
    checkpoint_dir = checkpoint_dir or raw.get("checkpoint_dir", ".")
    corpus_dir = corpus_dir or raw.get("corpus_dir", ".")
    sessions_dir = sessions_dir or raw.get("sessions_dir")
    app = create_app(checkpoint_dir, corpus_dir, sessions_dir)
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")


@main.command("param-count")
@click.option("--ckpt", "ckpt_path", type=click.Path(exists=True))
def param_count_cmd(ckpt_path):
    """Total weight count of the default config (or a checkpoint's)."""
    if ckpt_path:
        model = Checkpoint.load(ckpt_path).model
    else:
        from .model import SerenadeModel
        model = SerenadeModel.init(ExtractorConfig(), seed=0)
    extractor = sum(v.size for k, v in model.tensors.items()
                    if k.startswith("extractor."))
    decoder = sum(v.size for k, v in model.tensors.items()
                  if k.startswith("nade."))
    click.echo(f"extractor: {extractor}")
    click.echo(f"decoder (both directions): {decoder}")
    click.echo(f"total: {extractor + decoder}")


@main.command("synth")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--excerpts", type=int, default=50)
@click.option("--frames", type=int, default=64)
@click.option("--noise", type=float, default=0.0)
@click.option("--seed", type=int, default=0)
def synth_cmd(out_dir, excerpts, frames, noise, seed):
    """Materialise a synthetic labelled corpus to a directory."""
    data = corpus_io.make_corpus(excerpts, frames, noise, seed)
    corpus_io.save_corpus_dir(data, out_dir)
    click.echo(f"wrote {excerpts} excerpts to {out_dir}")


if __name__ == "__main__":
    main()
