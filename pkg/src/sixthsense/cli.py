"""Command line entry points.

    sixthsense simulate --env-name hallway --duration 600 --seed 3 --out runs/sim
    sixthsense train    --data-dir runs/sim --history 30 --out runs/train
    sixthsense eval     --model runs/train/checkpoint.bin --test-data runs/sim \
                        --out runs/eval
    sixthsense infer    --model runs/train/checkpoint.bin --episode ep.jsonl \
                        --out runs/infer

Every command writes its artifacts plus a manifest.json (command,
effective configuration, seed, artifact list) into --out.  Bad argument
values exit with the usual argparse usage error; runtime failures print
one line to stderr and exit 1.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .datasets import (
    build_samples,
    episode_ground_truths,
    read_episode,
    split_samples,
    to_training_arrays,
    write_episode,
)
from .detection import DEFAULT_THRESHOLD, DEFAULT_WINDOW_DEG
from .evaluation import (
    dummy_baseline,
    evaluate_detector,
    plot_orientation_hist,
    plot_pr_curves,
    write_pr_csv,
)
from .history import HistoryConfig
from .inference import collect_frames, detect_episode
from .model import ModelConfig, load_params, save_params
from .simulator import environment_preset, generate_episode
from .training import TrainConfig, train, write_loss_csv
from .util import canon_dumps, setup_logging

ENV_NAMES = ("hallway", "lounge", "studio")


def _write_manifest(out_dir: Path, command: str, config: dict, seed,
                    artifacts: list) -> Path:
    manifest = {
        "command": command,
        "package_version": __version__,
        "seed": seed,
        "config": config,
        "artifacts": sorted(str(a) for a in artifacts),
    }
    path = out_dir / "manifest.json"
    path.write_text(canon_dumps(manifest) + "\n")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_episodes(path: Path) -> list:
    """One episode per *.jsonl under a directory, or the single file."""
    if path.is_dir():
        files = sorted(path.glob("*.jsonl"))
        if not files:
            raise ValueError(f"no *.jsonl episode files in {path}")
    elif path.is_file():
        files = [path]
    else:
        raise ValueError(f"{path} is neither a file nor a directory")
    return [read_episode(f) for f in files]


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(args) -> int:
    out = _out_dir(args)
    config = environment_preset(args.env_name, seed=args.seed)
    if args.config is not None:
        overrides = json.loads(Path(args.config).read_text())
        if not isinstance(overrides, dict):
            raise ValueError(f"{args.config} must contain a JSON object")
        config = config.with_overrides(overrides)
    if args.num_humans is not None:
        config = config.with_overrides({"num_humans": args.num_humans})
    episode = generate_episode(config, args.duration)
    episode_path = out / f"{args.env_name}.jsonl"
    write_episode(episode, episode_path)
    _write_manifest(
        out, "simulate",
        {"world": config.to_dict(), "duration": args.duration},
        args.seed, [episode_path.name],
    )
    ticks = sum(1 for r in episode.records if "head_pan" in r)
    print(f"wrote {episode_path} ({ticks} ticks)")
    return 0


# ---------------------------------------------------------------------------
# train

def cmd_train(args) -> int:
    out = _out_dir(args)
    episodes = _load_episodes(Path(args.data_dir))
    history = HistoryConfig(n=args.history)
    by_env: dict = {}
    for episode in episodes:
        name = episode.environment_name
        if name in (args.env_a, args.env_b):  # test-role episodes are not replayed
            by_env.setdefault(name, []).extend(build_samples(episode, history))
    by_env.setdefault(args.env_c, [])
    split = split_samples(by_env, args.env_a, args.env_b, args.env_c)
    x_train, lb_train = to_training_arrays(split.train)
    x_val, lb_val = to_training_arrays(split.val)

    model_config = ModelConfig(in_channels=args.history)
    train_config = TrainConfig(
        epochs=args.epochs, learning_rate=args.lr,
        batch_size=args.batch_size, rng_seed=args.seed,
    )
    result = train(x_train, lb_train, x_val, lb_val, model_config, train_config)

    ckpt = out / "checkpoint.bin"
    save_params(result.params, ckpt)
    loss_csv = out / "loss.csv"
    write_loss_csv(loss_csv, result.history)
    _write_manifest(
        out, "train",
        {
            "model": model_config.to_dict(),
            "training": train_config.to_dict(),
            "history": history.to_dict(),
            "environments": {"train": args.env_a, "train_val": args.env_b,
                             "test": args.env_c},
            "samples": {"train": x_train.shape[0], "val": x_val.shape[0]},
        },
        args.seed, [ckpt.name, loss_csv.name],
    )
    state = "diverged" if result.diverged else "done"
    print(f"{state}: best val {result.best_val:.6f} at epoch {result.best_epoch}; "
          f"wrote {ckpt}")
    return 0


# ---------------------------------------------------------------------------
# eval

def cmd_eval(args) -> int:
    out = _out_dir(args)
    params = load_params(args.model)
    episodes = _load_episodes(Path(args.test_data))

    frames, gts_frames, all_gt = [], [], []
    for episode in episodes:
        f, g = collect_frames(params, episode)
        frames.extend(f)
        gts_frames.extend(g)
        all_gt.extend(episode_ground_truths(episode))
    if not frames:
        raise ValueError("test data produced no frames (episodes shorter than "
                         "the model's history window?)")

    report = evaluate_detector(frames, gts_frames, fallback_threshold=args.threshold)
    metrics = {"model": report.to_dict()}
    if all_gt:
        e_o, e_d = dummy_baseline(all_gt)
        metrics["dummy"] = {
            "mean_abs_orientation_error_deg": e_o,
            "mean_abs_distance_error_cm": e_d,
        }
    else:
        metrics["dummy"] = None

    metrics_path = out / "metrics.json"
    metrics_path.write_text(canon_dumps(metrics) + "\n")
    curves = {"model": report.pr_points}
    pr_csv = out / "pr_curve.csv"
    write_pr_csv(pr_csv, curves)
    pr_svg = out / "pr_curve.svg"
    plot_pr_curves(pr_svg, curves)
    hist_svg = out / "orientation_hist.svg"
    plot_orientation_hist(hist_svg, {"model": report.orientation_errors})
    _write_manifest(
        out, "eval",
        {
            "model": str(args.model),
            "model_config": params.config.to_dict(),
            "fallback_threshold": args.threshold,
            "frames": len(frames),
        },
        None,
        [metrics_path.name, pr_csv.name, pr_svg.name, hist_svg.name],
    )
    p80 = "n/a" if report.p80_percent is None else f"{report.p80_percent:.1f}%"
    print(f"P80 {p80}  E_o {report.e_o_deg:.2f} deg  E_d {report.e_d_cm:.2f} cm  "
          f"({report.true_positive_count}/{report.ground_truth_count} matched)")
    return 0


# ---------------------------------------------------------------------------
# infer

def cmd_infer(args) -> int:
    out = _out_dir(args)
    params = load_params(args.model)
    episode = read_episode(args.episode)
    det_path = out / "detections.jsonl"
    count = 0
    with open(det_path, "w") as fh:
        for timestamp, dets in detect_episode(params, episode, args.threshold):
            line = {
                "timestamp": timestamp,
                "detections": [
                    {
                        "ray": d.ray_index,
                        "confidence": d.confidence,
                        "x": d.position.x,
                        "y": d.position.y,
                        "heading": d.orientation,
                    }
                    for d in dets
                ],
            }
            fh.write(canon_dumps(line) + "\n")
            count += len(dets)
    _write_manifest(
        out, "infer",
        {
            "model": str(args.model),
            "model_config": params.config.to_dict(),
            "episode": str(args.episode),
            "threshold": args.threshold,
            "window_deg": DEFAULT_WINDOW_DEG,
        },
        None, [det_path.name],
    )
    print(f"wrote {det_path} ({count} detections)")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sixthsense",
        description="Planar-LiDAR person detection: simulate, train, eval, infer.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate one simulated episode")
    p.add_argument("--env-name", required=True, choices=ENV_NAMES)
    p.add_argument("--duration", type=float, required=True,
                   help="simulated seconds (positive)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--num-humans", type=int, default=None)
    p.add_argument("--config", default=None,
                   help="JSON file with world config field overrides")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train a detector on recorded episodes")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--history", type=int, default=30,
                   help="scan window length (1 = current scan only)")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--env-a", default="hallway", help="training environment")
    p.add_argument("--env-b", default="lounge",
                   help="environment split half into train and val")
    p.add_argument("--env-c", default="studio", help="held-out test environment")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metric suite for a checkpoint on test episodes")
    p.add_argument("--model", required=True)
    p.add_argument("--test-data", required=True, help="episode file or directory")
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD,
                   help="fallback operating threshold in (0, 1)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="run a checkpoint over an episode")
    p.add_argument("--model", required=True)
    p.add_argument("--episode", required=True)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_infer)
    return parser


def _validate(parser: argparse.ArgumentParser, args) -> None:
    if args.command == "simulate" and args.duration <= 0:
        parser.error(f"--duration must be positive, got {args.duration}")
    if args.command == "train":
        if args.history < 1:
            parser.error(f"--history must be >= 1, got {args.history}")
        if args.epochs < 1:
            parser.error(f"--epochs must be >= 1, got {args.epochs}")
        if args.lr < 0:
            parser.error(f"--lr must be >= 0, got {args.lr}")
        if args.batch_size < 1:
            parser.error(f"--batch-size must be >= 1, got {args.batch_size}")
    if args.command in ("eval", "infer") and not 0 < args.threshold < 1:
        parser.error(f"--threshold must be in (0, 1), got {args.threshold}")


def main(argv=None) -> int:
    setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    _validate(parser, args)
    try:
        return args.func(args)
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
