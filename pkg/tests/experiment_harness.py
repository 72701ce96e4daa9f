"""End-to-end experiment driver shared by the acceptance tests.

Simulates three environments, trains the history (n=30) and single-scan
(n=1) detectors on the first two, and evaluates both plus the constant
baseline on the held-out third.  All artifacts (checkpoints, loss logs,
metrics, P-R data and plots) land in one output directory.  Every step
is seeded, so two runs with the same arguments produce byte-identical
files.

Episodes are handed between stages in memory; the on-disk episode format
is exercised by the unit and CLI tests instead, because writing the long
test episode would dominate the runtime.
"""

from __future__ import annotations

from pathlib import Path

from sixthsense.datasets import (
    build_samples,
    episode_ground_truths,
    split_samples,
    to_training_arrays,
)
from sixthsense.evaluation import (
    dummy_baseline,
    evaluate_detector,
    plot_orientation_hist,
    plot_pr_curves,
    write_pr_csv,
)
from sixthsense.history import HistoryConfig
from sixthsense.inference import collect_frames
from sixthsense.model import ModelConfig, save_params
from sixthsense.simulator import environment_preset, generate_episode
from sixthsense.training import TrainConfig, train, write_loss_csv
from sixthsense.util import canon_dumps, get_logger

log = get_logger("experiment")

# (name, simulated seconds, humans); 360 + 240 + 3000 s = 60 simulated minutes.
# The two training environments run with an extra walker for label density.
ENVIRONMENTS = (("hallway", 360.0, 4), ("lounge", 240.0, 4), ("studio", 3000.0, 3))
TRAIN_ENV, HALF_ENV, TEST_ENV = "hallway", "lounge", "studio"
EPOCHS = 100
LEARNING_RATE = 3e-4
MASTER_SEED = 7
MODEL_VARIANTS = (("history", 30), ("no_history", 1))


def simulate_episodes(seed: int = MASTER_SEED, environments=ENVIRONMENTS) -> dict:
    """One episode per environment, each on its own derived seed."""
    episodes = {}
    for offset, (name, duration, humans) in enumerate(environments):
        config = environment_preset(name, seed=seed * 1000 + offset,
                                    num_humans=humans)
        episodes[name] = generate_episode(config, duration)
        log.info("simulated %s: %.0f s, %d records", name, duration,
                 len(episodes[name].records))
    return episodes


def train_variant(episodes: dict, n: int, epochs: int = EPOCHS,
                  lr: float = LEARNING_RATE, seed: int = MASTER_SEED):
    """Train one history length on the fixed environment split."""
    history = HistoryConfig(n=n)
    by_env = {name: build_samples(ep, history)
              for name, ep in episodes.items() if name != TEST_ENV}
    by_env[TEST_ENV] = []  # test samples are streamed at evaluation time
    split = split_samples(by_env, TRAIN_ENV, HALF_ENV, TEST_ENV)
    x_train, lb_train = to_training_arrays(split.train)
    x_val, lb_val = to_training_arrays(split.val)
    del by_env, split

    model_config = ModelConfig(in_channels=n)
    train_config = TrainConfig(epochs=epochs, learning_rate=lr, rng_seed=seed)
    result = train(x_train, lb_train, x_val, lb_val, model_config, train_config)
    return result, model_config


def run_experiment(out_dir, seed: int = MASTER_SEED, environments=ENVIRONMENTS,
                   epochs: int = EPOCHS, lr: float = LEARNING_RATE) -> dict:
    """The full pipeline; returns reports plus paths of written artifacts."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    episodes = simulate_episodes(seed, environments)

    trained = {}
    paths = {}
    for label, n in MODEL_VARIANTS:
        result, model_config = train_variant(episodes, n, epochs=epochs,
                                             lr=lr, seed=seed)
        ckpt = out_dir / f"checkpoint_{label}.bin"
        save_params(result.params, ckpt)
        loss_csv = out_dir / f"loss_{label}.csv"
        write_loss_csv(loss_csv, result.history)
        trained[label] = result
        paths[f"checkpoint_{label}"] = ckpt
        paths[f"loss_{label}"] = loss_csv
        log.info("%s: best val %.6f at epoch %d%s", label, result.best_val,
                 result.best_epoch, " (diverged)" if result.diverged else "")

    test_episode = episodes[TEST_ENV]
    reports = {}
    curves = {}
    orientation_errors = {}
    for label, _ in MODEL_VARIANTS:
        frames, gts_frames = collect_frames(trained[label].params, test_episode)
        report = evaluate_detector(frames, gts_frames)
        reports[label] = report
        curves[label] = report.pr_points
        orientation_errors[label] = report.orientation_errors
        log.info("%s: P80 %s, E_o %.2f deg, E_d %.2f cm", label,
                 report.p80_percent, report.e_o_deg, report.e_d_cm)

    dummy_e_o, dummy_e_d = dummy_baseline(episode_ground_truths(test_episode))
    metrics = {
        label: reports[label].to_dict() for label, _ in MODEL_VARIANTS
    }
    metrics["dummy"] = {
        "mean_abs_orientation_error_deg": dummy_e_o,
        "mean_abs_distance_error_cm": dummy_e_d,
    }
    metrics_path = out_dir / "metrics.json"
    metrics_path.write_text(canon_dumps(metrics) + "\n")
    paths["metrics"] = metrics_path

    pr_csv = out_dir / "pr_curve.csv"
    write_pr_csv(pr_csv, curves)
    paths["pr_csv"] = pr_csv
    pr_svg = out_dir / "pr_curve.svg"
    plot_pr_curves(pr_svg, curves)
    paths["pr_svg"] = pr_svg
    hist_svg = out_dir / "orientation_hist.svg"
    plot_orientation_hist(hist_svg, orientation_errors)
    paths["hist_svg"] = hist_svg

    return {
        "reports": reports,
        "dummy": (dummy_e_o, dummy_e_d),
        "trained": trained,
        "paths": paths,
    }
