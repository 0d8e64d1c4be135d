"""Command line entry point: gen-data, train, sample, eval and plot.

Exit codes: 0 success, 1 usage error, 2 data or validation error,
3 numerical error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation
from .dataio import Dataset, MotionRecord, read_dataset, write_dataset
from .errors import DataFormatError, NumericalError, ValidationError
from .nets.config import GeneratorConfig
from .nets.stack import synthesize_motions
from .training import ABLATION_FLAGS, TrainConfig, Trainer, load_checkpoint
from .worldgen import WorldConfig, build_dataset


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="scenemotion", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-data", help="generate a synthetic scene/walk dataset")
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--scenes", type=int, required=True)
    gen.add_argument("--walks-per-scene", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--frames", type=int, default=16)
    gen.add_argument("--image-height", type=int, default=128)
    gen.add_argument("--image-width", type=int, default=256)

    train = sub.add_parser("train", help="train the stack on a dataset")
    train.add_argument("--data", required=True)
    train.add_argument("--config", required=True)
    train.add_argument("--out", required=True)
    train.add_argument("--ablate", default="",
                       help="comma separated flags to disable, from M,D,P,C")

    sample = sub.add_parser("sample", help="sample motions from a checkpoint")
    sample.add_argument("--checkpoint", required=True)
    sample.add_argument("--scene", required=True,
                        help="dataset directory, optionally with :SCENE_INDEX")
    sample.add_argument("--n", type=int, required=True)
    sample.add_argument("--out", required=True)
    sample.add_argument("--seed", type=int, default=0)

    ev = sub.add_parser("eval", help="score generated motions against real ones")
    ev.add_argument("--real", required=True)
    ev.add_argument("--generated", required=True)
    ev.add_argument("--out", required=True)
    ev.add_argument("--seed", type=int, default=0)

    plot = sub.add_parser("plot", help="render a report to image files")
    plot.add_argument("--report", required=True)
    plot.add_argument("--out", required=True)
    return parser


def _cmd_gen_data(args) -> int:
    cfg = WorldConfig(image_height=args.image_height, image_width=args.image_width)
    dataset = build_dataset(args.seed, args.scenes, args.walks_per_scene, cfg,
                            frames=args.frames)
    write_dataset(args.out, dataset)
    print(f"wrote {len(dataset.scenes)} scenes and {len(dataset.motions)} walks to {args.out}")
    return 0


def _load_train_configs(path) -> tuple[GeneratorConfig, TrainConfig]:
    payload = json.loads(Path(path).read_text())
    if not isinstance(payload, dict):
        raise DataFormatError(f"{path}: config must be a JSON object")
    model = GeneratorConfig.from_dict(payload.get("model", {}))
    train = TrainConfig.from_dict(payload.get("train", {}))
    return model, train


def _cmd_train(args) -> int:
    model_cfg, train_cfg = _load_train_configs(args.config)
    if args.ablate:
        disabled = {}
        for token in args.ablate.split(","):
            token = token.strip().upper()
            if token not in ABLATION_FLAGS:
                raise _UsageError(f"unknown ablation flag {token!r}, expected M, D, P or C")
            disabled[ABLATION_FLAGS[token]] = False
        train_cfg = TrainConfig.from_dict({**train_cfg.to_dict(), **disabled})
    dataset = read_dataset(args.data)
    trainer = Trainer(dataset, model_cfg, train_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(
        json.dumps({"model": model_cfg.to_dict(), "train": train_cfg.to_dict()},
                   indent=2, sort_keys=True)
    )
    trainer.save(out / "checkpoint-init")
    log = trainer.fit(checkpoint_dir=out)
    with open(out / "log.ndjson", "w") as fh:
        for record in log:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    print(f"trained {len(log)} rounds, checkpoints under {out}")
    return 0


def _cmd_sample(args) -> int:
    scene_path, _, index_text = args.scene.partition(":")
    scene_index = int(index_text) if index_text else 0
    stack, _, model_cfg, _, skeleton = load_checkpoint(args.checkpoint)
    dataset = read_dataset(scene_path)
    if not (0 <= scene_index < len(dataset.scenes)):
        raise ValidationError(f"scene index {scene_index} outside the dataset")
    scene = dataset.scenes[scene_index]
    seed_poses = [m.joints[:, :, 0] for m in dataset.motions if m.scene_index == scene_index]
    if not seed_poses:
        raise ValidationError(f"scene {scene_index} has no motions to take initial poses from")
    initial = [seed_poses[i % len(seed_poses)] for i in range(args.n)]
    rng = np.random.default_rng(args.seed)
    motions = synthesize_motions(stack, scene.image, initial, rng)
    out = Dataset(
        scenes=[scene],
        motions=[MotionRecord(joints=m.joints, scene_index=0) for m in motions],
        skeleton=skeleton,
        seeds={"sample_seed": args.seed, "checkpoint": str(args.checkpoint),
               "scene": args.scene},
        cloud_stride=dataset.cloud_stride,
    )
    write_dataset(args.out, out)
    print(f"sampled {len(motions)} motions into {args.out}")
    return 0


def _origin_tracks(dataset: Dataset) -> np.ndarray:
    root = dataset.skeleton.root_index
    tracks = [m.joints[:, root, :].T for m in dataset.motions]
    return np.stack([t - t[0] for t in tracks])


def evaluate_datasets(real: Dataset, generated: Dataset, seed: int = 0) -> dict:
    """Full report: Motion FID, the non-collision grid and the spread curve."""
    if not real.motions or not generated.motions:
        raise ValidationError("both datasets need motions")
    lengths = evaluation.default_clip_lengths(
        min(m.joints.shape[2] for m in real.motions + generated.motions)
    )
    model_lengths = lengths[-3:]
    real_motions = [m.joints for m in real.motions]
    models = [
        evaluation.train_erd(real_motions, length, seed=seed + i)
        for i, length in enumerate(model_lengths)
    ]
    fid = evaluation.motion_fid(
        real_motions, [m.joints for m in generated.motions], models, clip_lengths=lengths
    )
    collision = evaluation.collision_report(
        [m.joints for m in generated.motions],
        [generated.scenes[m.scene_index].cloud for m in generated.motions],
        generated.skeleton,
    )
    spread = evaluation.trajectory_std_curve(_origin_tracks(generated))
    return {
        "fid": fid.to_dict(),
        "collision": collision.to_dict(),
        "trajectory_std": [float(v) for v in spread],
        "erd_model_lengths": list(model_lengths),
        "clip_lengths": list(lengths),
    }


def _cmd_eval(args) -> int:
    real = read_dataset(args.real)
    generated = read_dataset(args.generated)
    report = evaluate_datasets(real, generated, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(report, indent=2, sort_keys=True))
    print(f"average FID {report['fid']['average']:.3f}, "
          f"wrote report to {out}")
    return 0


def _cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    report = json.loads(Path(args.report).read_text())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cells = report["fid"]["cells"]
    labels = sorted(cells)
    fig, ax = plt.subplots(figsize=(max(6, 0.6 * len(labels) + 2), 4))
    ax.bar(range(len(labels)), [cells[k] for k in labels], color="#4878a8")
    extras = ["short", "mid", "long", "average"]
    offset = len(labels) + 1
    ax.bar(range(offset, offset + len(extras)),
           [report["fid"][k] for k in extras], color="#b85450")
    ax.set_xticks(list(range(len(labels))) + list(range(offset, offset + len(extras))))
    ax.set_xticklabels(labels + extras, rotation=60, ha="right", fontsize=8)
    ax.set_ylabel("Motion FID")
    fig.tight_layout()
    fig.savefig(out / "fid_bars.png", dpi=120)
    plt.close(fig)

    curve = report["trajectory_std"]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(range(len(curve)), curve, marker="o")
    ax.set_xlabel("frame")
    ax.set_ylabel("trajectory std (m)")
    fig.tight_layout()
    fig.savefig(out / "trajectory_std.png", dpi=120)
    plt.close(fig)
    print(f"wrote plots to {out}")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "sample": _cmd_sample,
    "eval": _cmd_eval,
    "plot": _cmd_plot,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ValidationError, DataFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
