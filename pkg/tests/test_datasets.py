"""Episode files, sample assembly, and the environment split."""

import json
import math

import numpy as np
import pytest

from sixthsense.datasets import (
    EPISODE_FORMAT,
    Episode,
    build_samples,
    episode_ground_truths,
    episode_sensor_configs,
    iter_samples,
    read_episode,
    split_samples,
    to_training_arrays,
    write_episode,
)
from sixthsense.history import HistoryConfig
from sixthsense.simulator import environment_preset, generate_episode


@pytest.fixture(scope="module")
def episode():
    cfg = environment_preset("studio", seed=77, num_humans=2)
    return generate_episode(cfg, duration=10.0)


# ---------------------------------------------------------------------------
# file round trip

def test_episode_file_round_trip(tmp_path, episode):
    path = tmp_path / "ep.jsonl"
    write_episode(episode, path)
    again = read_episode(path)
    assert again.header == episode.header
    assert again.environment_name == "studio"
    assert len(again.records) == len(episode.records)
    for ra, rb in zip(again.records, episode.records):
        assert ra.keys() == rb.keys()
        for key in ("front_scan", "back_scan"):
            if key in rb:
                np.testing.assert_array_equal(ra[key], rb[key])
    # writing the parsed copy reproduces the file byte for byte
    path2 = tmp_path / "ep2.jsonl"
    write_episode(again, path2)
    assert path2.read_bytes() == path.read_bytes()


def test_write_episode_rejects_foreign_header(tmp_path, episode):
    bad = Episode(header={"format": "something-else"}, records=[])
    with pytest.raises(ValueError):
        write_episode(bad, tmp_path / "bad.jsonl")


def test_scan_no_returns_stored_as_null(tmp_path):
    # a long empty room guarantees beams past the 10 m range band
    from sixthsense.simulator import WorldConfig

    cfg = WorldConfig(name="barn", arena=(14.0, 9.0), num_humans=0, rng_seed=3)
    ep = generate_episode(cfg, duration=2.0)
    has_nan = any(
        np.isnan(r[k]).any()
        for r in ep.records for k in ("front_scan", "back_scan") if k in r
    )
    assert has_nan
    path = tmp_path / "ep.jsonl"
    write_episode(ep, path)
    text = path.read_text()
    assert "null" in text
    assert "NaN" not in text
    again = read_episode(path)
    for ra, rb in zip(again.records, ep.records):
        for key in ("front_scan", "back_scan"):
            if key in rb:
                np.testing.assert_array_equal(ra[key], rb[key])


def test_read_episode_error_carries_line_number(tmp_path, episode):
    path = tmp_path / "ep.jsonl"
    write_episode(episode, path)
    lines = path.read_text().split("\n")
    lines[4] = lines[4][: len(lines[4]) // 2]  # truncate record on line 5
    broken = tmp_path / "broken.jsonl"
    broken.write_text("\n".join(lines))
    with pytest.raises(ValueError, match="line 5"):
        read_episode(broken)


def test_read_episode_rejects_bad_header(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    with pytest.raises(ValueError, match="line 1"):
        read_episode(p)
    p2 = tmp_path / "foreign.jsonl"
    p2.write_text(json.dumps({"format": "other"}) + "\n")
    with pytest.raises(ValueError, match="line 1"):
        read_episode(p2)


def test_read_episode_rejects_non_increasing_time(tmp_path, episode):
    path = tmp_path / "ep.jsonl"
    write_episode(episode, path)
    lines = path.read_text().strip().split("\n")
    lines.append(lines[1])  # repeat the first record at the end
    bad = tmp_path / "bad.jsonl"
    bad.write_text("\n".join(lines) + "\n")
    with pytest.raises(ValueError, match="does not increase"):
        read_episode(bad)


def test_episode_sensor_configs(episode):
    front, back, cam = episode_sensor_configs(episode)
    assert front.rate == 15.0
    assert back.rate == 10.0
    assert front.mount_pose.x == pytest.approx(0.15)
    assert back.mount_pose.x == pytest.approx(-0.15)
    assert cam.hfov == pytest.approx(math.radians(65.0))
    assert cam.max_range == 6.0


# ---------------------------------------------------------------------------
# sample assembly

def test_sample_counts_follow_warmup(episode):
    # 10 s at 10 Hz gives 100 ticks; a 30-deep history warms up on the
    # first 29, and 1-deep history yields every tick
    assert len(build_samples(episode, HistoryConfig(n=30))) == 71
    assert len(build_samples(episode, HistoryConfig(n=1))) == 100


def test_samples_are_ordered_and_labeled(episode):
    samples = build_samples(episode, HistoryConfig(n=5))
    assert len(samples) == 96
    times = [s.timestamp for s in samples]
    assert times == sorted(times)
    for s in samples:
        assert s.window.channels.shape == (5, 360)
        assert s.labels.mask.sum() == 65.0
        assert len(s.ground_truth) == 2
        pos = s.labels.presence == 1.0
        assert set(np.flatnonzero(pos)) <= set(np.flatnonzero(s.labels.mask))


def test_iter_samples_is_lazy_and_matches_build(episode):
    gen = iter_samples(episode, HistoryConfig(n=30))
    first = next(gen)
    all_samples = build_samples(episode, HistoryConfig(n=30))
    assert first.timestamp == all_samples[0].timestamp
    np.testing.assert_array_equal(first.window.channels,
                                  all_samples[0].window.channels)


def test_iter_samples_requires_tick_metadata(episode):
    broken = Episode(header=episode.header,
                     records=[dict(r) for r in episode.records])
    for r in broken.records:
        if "head_pan" in r:
            del r["head_pan"], r["camera_detections"], r["ground_truth"]
            break
    with pytest.raises(ValueError, match="tick metadata"):
        list(iter_samples(broken, HistoryConfig(n=1)))


def test_episode_ground_truths(episode):
    gts = episode_ground_truths(episode)
    assert len(gts) == 200  # 100 ticks times 2 humans
    assert all(g.source == "ground_truth" for g in gts)


# ---------------------------------------------------------------------------
# splitting and stacking

def _mini_samples(episode, n):
    return build_samples(episode, HistoryConfig(n=n))


def test_split_samples_chronological_halves(episode):
    samples = _mini_samples(episode, 1)
    by_env = {"a": samples[:40], "b": samples[40:61], "c": samples[61:]}
    split = split_samples(by_env, "a", "b", "c")
    # B has 21 samples: 11 go to train (rounded up), 10 to validation
    assert len(split.train) == 51
    assert len(split.val) == 10
    assert len(split.test) == len(by_env["c"])
    cut_time = split.val[0].timestamp
    assert all(s.timestamp < cut_time for s in split.train[40:])
    # ground truth is stripped from train and val but kept for test
    assert all(s.ground_truth == [] for s in split.train)
    assert all(s.ground_truth == [] for s in split.val)
    assert any(s.ground_truth for s in split.test)
    # the original sample lists keep their ground truth
    assert any(s.ground_truth for s in by_env["a"])


def test_split_samples_validation():
    with pytest.raises(ValueError, match="distinct"):
        split_samples({"a": []}, "a", "a", "b")
    with pytest.raises(ValueError, match="no samples for"):
        split_samples({"a": [], "b": []}, "a", "b", "c")


def test_to_training_arrays_layout(episode):
    samples = _mini_samples(episode, 3)[:7]
    x, labels = to_training_arrays(samples)
    assert x.shape == (7, 360, 3)
    assert x.dtype == np.float32
    np.testing.assert_array_equal(
        x[0], samples[0].window.channels.T.astype(np.float32))
    assert labels.presence.shape == (7, 360)
    assert labels.mask.dtype == np.float32
    assert len(labels) == 7


def test_to_training_arrays_validation(episode):
    with pytest.raises(ValueError):
        to_training_arrays([])
    a = _mini_samples(episode, 1)[:2]
    b = _mini_samples(episode, 3)[:1]
    with pytest.raises(ValueError, match="disagree"):
        to_training_arrays(a + b)
