"""Network architecture: shapes, counts, equivariance, checkpoints."""

import math

import numpy as np
import pytest

from sixthsense.model import (
    ModelConfig,
    forward,
    forward_batch,
    init_params,
    load_params,
    param_count,
    receptive_field,
    save_params,
)


def _tiny_config(**kw):
    defaults = dict(in_channels=3, hidden_channels=4, kernel_sizes=(3, 3),
                    dilations=(1, 2), bins=16)
    defaults.update(kw)
    return ModelConfig(**defaults)


def test_default_parameter_counts():
    # conv stacks plus layer norm affines plus the 1x1 head
    assert param_count(ModelConfig(in_channels=30)) == 36452
    assert param_count(ModelConfig(in_channels=1)) == 33668


def test_param_count_matches_arrays():
    for config in (ModelConfig(in_channels=30), _tiny_config()):
        params = init_params(config, seed=0)
        total = sum(a.size for _, a in params.named_arrays())
        assert total == param_count(config)


def test_receptive_field_default_is_43():
    assert receptive_field(ModelConfig(in_channels=30)) == 43
    assert receptive_field(ModelConfig(in_channels=1)) == 43
    # 1 + sum (k-1)*d over the stack
    cfg = ModelConfig(in_channels=30)
    expected = 1 + sum((k - 1) * d for k, d in zip(cfg.kernel_sizes, cfg.dilations))
    assert expected == 43


def test_receptive_field_empirical_bound():
    # poking one bin never changes outputs beyond +-21 bins, and over a
    # few seeds every bin inside the span does change
    config = ModelConfig(in_channels=30)
    half = (receptive_field(config) - 1) // 2
    assert half == 21
    poke_bin = 100
    window_bins = {(poke_bin + k) % config.bins for k in range(-half, half + 1)}
    touched = set()
    for seed in range(3):
        params = init_params(config, seed=seed)
        rng = np.random.default_rng(100 + seed)
        x = rng.uniform(0.05, 10.0, size=(config.in_channels, config.bins))
        base = forward(params, x)
        x2 = x.copy()
        x2[:, poke_bin] += 1.0
        pert = forward(params, x2)
        diff = (
            np.abs(pert.presence - base.presence)
            + np.abs(pert.distance - base.distance)
            + np.abs(pert.bearing_sin - base.bearing_sin)
            + np.abs(pert.bearing_cos - base.bearing_cos)
        )
        changed = set(np.flatnonzero(diff > 0).tolist())
        assert changed <= window_bins  # hard bound, no tolerance
        touched |= changed
    assert touched == window_bins


def test_rotation_equivariance():
    config = ModelConfig(in_channels=5)
    params = init_params(config, seed=3)
    rng = np.random.default_rng(40)
    for _ in range(5):
        x = rng.uniform(0.05, 10.0, size=(config.in_channels, config.bins))
        base = forward(params, x)
        for k in (1, 37, 180, 359):
            rolled = forward(params, np.roll(x, k, axis=1))
            for field in ("presence", "distance", "bearing_sin", "bearing_cos"):
                a = np.roll(getattr(base, field), k)
                b = getattr(rolled, field)
                assert np.abs(a - b).max() <= 1e-9


def test_zero_params_give_indifferent_outputs():
    config = _tiny_config()
    params = init_params(config, seed=0)
    for _, arr in params.named_arrays():
        arr[:] = 0.0
    pred = forward(params, np.full((config.in_channels, config.bins), 2.0))
    assert np.allclose(pred.presence, 0.5)
    mid = config.d_min + 0.5 * (config.d_max - config.d_min)
    assert np.allclose(pred.distance, mid)
    assert np.allclose(pred.bearing_sin, 0.0)


def test_init_params_distribution():
    config = ModelConfig(in_channels=30)
    params = init_params(config, seed=1)
    fan_ins = (config.in_channels,) + (config.hidden_channels,) * (
        len(config.kernel_sizes) - 1
    )
    for layer, k, ci in zip(params.layers, config.kernel_sizes, fan_ins):
        bound = math.sqrt(6.0 / (ci * k))
        assert np.abs(layer.weights).max() <= bound
        assert np.all(layer.bias == 0.0)
        assert np.all(layer.ln_gain == 1.0)
        assert np.all(layer.ln_shift == 0.0)
    head_bound = math.sqrt(6.0 / config.hidden_channels)
    assert np.abs(params.head_weights).max() <= head_bound
    # deterministic in the seed
    again = init_params(config, seed=1)
    for (_, a), (_, b) in zip(params.named_arrays(), again.named_arrays()):
        assert np.array_equal(a, b)
    other = init_params(config, seed=2)
    assert not np.array_equal(params.layers[0].weights, other.layers[0].weights)


def test_forward_batch_matches_single():
    config = _tiny_config()
    params = init_params(config, seed=5)
    rng = np.random.default_rng(41)
    windows = [rng.uniform(0.05, 10.0, size=(config.in_channels, config.bins))
               for _ in range(4)]
    batch, _ = forward_batch(params, np.stack([w.T for w in windows]))
    for i, w in enumerate(windows):
        single = forward(params, w)
        assert np.array_equal(single.presence, batch.presence[i])
        assert np.array_equal(single.distance, batch.distance[i])


def test_prediction_ranges():
    config = _tiny_config()
    params = init_params(config, seed=6)
    rng = np.random.default_rng(42)
    for _ in range(10):
        pred = forward(
            params, rng.uniform(0.05, 10.0, size=(config.in_channels, config.bins))
        )
        assert np.all((pred.presence > 0) & (pred.presence < 1))
        assert np.all((pred.distance >= config.d_min) & (pred.distance <= config.d_max))


def test_forward_shape_validation():
    config = _tiny_config()
    params = init_params(config, seed=0)
    with pytest.raises(ValueError):
        forward(params, np.zeros((config.in_channels + 1, config.bins)))
    with pytest.raises(ValueError):
        forward_batch(params, np.zeros((2, config.bins + 1, config.in_channels)))
    with pytest.raises(ValueError):
        forward(params, np.zeros(config.bins))


def test_forward_rejects_non_finite_activations():
    config = _tiny_config()
    params = init_params(config, seed=0)
    x = np.full((config.in_channels, config.bins), np.inf)
    with pytest.raises(ArithmeticError):
        forward(params, x)


def test_config_validation():
    with pytest.raises(ValueError):
        ModelConfig(in_channels=0)
    with pytest.raises(ValueError):
        _tiny_config(kernel_sizes=(4, 3))  # even kernel has no center
    with pytest.raises(ValueError):
        _tiny_config(kernel_sizes=(3,))  # length mismatch with dilations
    with pytest.raises(ValueError):
        _tiny_config(d_min=0.0)


def test_checkpoint_roundtrip(tmp_path):
    config = ModelConfig(in_channels=30)
    params = init_params(config, seed=9)
    path = tmp_path / "model.bin"
    save_params(params, path)
    loaded = load_params(path)
    assert loaded.config == config
    assert loaded.dtype == np.float64
    for (na, a), (nb, b) in zip(params.named_arrays(), loaded.named_arrays()):
        assert na == nb
        assert np.array_equal(a, b)
    # float32 params round-trip through the float64 container exactly
    params32 = params.astype(np.float32)
    save_params(params32, path)
    again = load_params(path)
    for (_, a), (_, b) in zip(params32.named_arrays(), again.named_arrays()):
        assert np.array_equal(a.astype(np.float64), b)


def test_checkpoint_rejects_corruption(tmp_path):
    config = _tiny_config()
    params = init_params(config, seed=0)
    path = tmp_path / "model.bin"
    save_params(params, path)
    blob = path.read_bytes()
    truncated = tmp_path / "trunc.bin"
    truncated.write_bytes(blob[:-16])
    with pytest.raises(ValueError):
        load_params(truncated)
    wrong = tmp_path / "wrong.bin"
    wrong.write_bytes(b'{"format":"something-else"}\n' + blob.split(b"\n", 1)[1])
    with pytest.raises(ValueError):
        load_params(wrong)


def test_save_is_byte_deterministic(tmp_path):
    config = _tiny_config()
    params = init_params(config, seed=4)
    a, b = tmp_path / "a.bin", tmp_path / "b.bin"
    save_params(params, a)
    save_params(params, b)
    assert a.read_bytes() == b.read_bytes()
