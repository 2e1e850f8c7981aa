"""Command-line entry point: gen-data, train, eval, predict, visualize.

Every flag can also be set through a JSON config file (--config for gen-data,
--model-config / --train-config for train); explicit flags win.  Exit codes:
0 success, 2 usage error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import evaluate, inference, priors, synth, training, viz
from .model import ModelConfig, load_checkpoint
from .training import TrainConfig, TrainingDivergedError
from .types import SceneConfig

THREADS_ENV = "MOTOR_ANTICIPATE_THREADS"


def _apply_thread_cap() -> None:
    cap = os.environ.get(THREADS_ENV)
    if cap:
        import torch
        torch.set_num_threads(max(1, int(cap)))


def _load_json(path):
    with open(path) as f:
        return json.load(f)


def _scene_config(path, seed=None) -> SceneConfig:
    doc = _load_json(path) if path else {}
    for key in ("frame_size", "verb_set", "noun_set"):
        if key in doc:
            doc[key] = tuple(doc[key])
    cfg = SceneConfig(**doc)
    if seed is not None:
        cfg.seed = seed
    cfg.validate()
    return cfg


def _model_config(path) -> ModelConfig:
    doc = _load_json(path) if path else {}
    if "frame_size" in doc:
        doc["frame_size"] = tuple(doc["frame_size"])
    if "channels" in doc:
        doc["channels"] = tuple(doc["channels"])
    if "strides" in doc:
        doc["strides"] = tuple(tuple(s) for s in doc["strides"])
    return ModelConfig(**doc)


def _train_config(path, seed=None) -> TrainConfig:
    doc = _load_json(path) if path else {}
    cfg = TrainConfig(**doc)
    if seed is not None:
        cfg.seed = seed
    cfg.validate()
    return cfg


def cmd_gen_data(args) -> int:
    cfg = _scene_config(args.config, args.seed)
    manifest = synth.generate_dataset(cfg, args.n_train, args.n_val, args.out)
    if args.with_priors:
        prior_dir = os.path.join(args.out, "priors")
        os.makedirs(prior_dir, exist_ok=True)
        pcfg = priors.PriorConfig()
        for entry in manifest.clips:
            clip = synth.load_clip(os.path.join(args.out, entry.path))
            qm = priors.render_trajectory_prior(
                clip.future_trajectory, pcfg.motor_grid, pcfg.sigma).probs
            qa = priors.render_point_prior(
                clip.hotspot_point, pcfg.hotspot_grid, pcfg.sigma).probs
            name = os.path.splitext(os.path.basename(entry.path))[0]
            np.savez(os.path.join(prior_dir, f"{name}.npz"), q_motor=qm, q_hotspot=qa)
    print(f"wrote {len(manifest.clips)} clips to {args.out}")
    return 0


def cmd_train(args) -> int:
    manifest = synth.load_manifest(os.path.join(args.data, "manifest.json"))
    model_cfg = _model_config(args.model_config)
    model_cfg.num_actions = manifest.config.num_actions
    model_cfg.num_frames = manifest.config.num_frames_observed
    model_cfg.frame_size = manifest.config.frame_size
    train_cfg = _train_config(args.train_config, args.seed)
    log_path = args.log or (args.out + ".log.jsonl")
    try:
        _, records = training.train(manifest, args.data, model_cfg, train_cfg,
                                    checkpoint_path=args.out, log_path=log_path,
                                    resume_from=args.resume, progress=True)
    except TrainingDivergedError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    final = records[-1] if records else {}
    print(json.dumps({"final_val_top1": final.get("val_top1"),
                      "final_val_loss": final.get("val_loss")}))
    return 0


def cmd_eval(args) -> int:
    manifest = synth.load_manifest(os.path.join(args.data, "manifest.json"))
    model, _, _ = load_checkpoint(args.ckpt)
    dataset = training.ClipDataset(manifest, args.data, args.split, model.config)
    report = {args.split: evaluate.evaluate_model(model, dataset)}
    if args.baselines:
        train_set = training.ClipDataset(manifest, args.data, "train", model.config)
        lstm = evaluate.fit_lstm_on_dataset(train_set)
        report["baselines"] = evaluate.evaluate_baselines(
            dataset, lstm, hotspot_grid=model.config.hotspot_grid)
    out = json.dumps(report, indent=1, default=float)
    if args.report:
        with open(args.report, "w") as f:
            f.write(out)
    print(out)
    return 0


def cmd_predict(args) -> int:
    model, _, _ = load_checkpoint(args.ckpt)
    clip = synth.load_clip(args.clip)
    action, attention, hotspot = inference.predict(clip.frames, model)
    k = min(args.topk, len(action))
    order = np.argsort(-action)[:k]
    record = {"topk": [{"action_id": int(i), "probability": float(action[i])}
                       for i in order]}
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "prediction.json"), "w") as f:
            json.dump(record, f, indent=1)
    if args.overlays:
        viz.render_overlays(clip.frames[-1].astype(np.float64), attention,
                            hotspot, args.out or ".")
    print(json.dumps(record))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="motor-anticipate")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p.add_argument("--config", help="SceneConfig JSON file")
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", type=int, default=100)
    p.add_argument("--n-val", type=int, default=20)
    p.add_argument("--with-priors", action="store_true")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the joint model")
    p.add_argument("--data", required=True)
    p.add_argument("--model-config")
    p.add_argument("--train-config")
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    p.add_argument("--resume")
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--split", default="val")
    p.add_argument("--baselines", action="store_true")
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval)

    for name in ("predict", "visualize"):
        p = sub.add_parser(name, help="predict on one clip")
        p.add_argument("--ckpt", required=True)
        p.add_argument("--clip", required=True)
        p.add_argument("--out")
        p.add_argument("--topk", type=int, default=5)
        p.add_argument("--overlays", action="store_true",
                       default=(name == "visualize"))
        p.set_defaults(func=cmd_predict)

    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
