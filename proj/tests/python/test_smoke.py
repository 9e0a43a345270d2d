import math

import numpy as np
import pytest

import fp8emu


def test_codec_landmarks():
    # Largest finite FP8 value and the subnormal floor.
    assert fp8emu.decode(0x7B, "fp8") == 57344.0
    assert fp8emu.decode(0x01, "fp8") == 2.0**-16
    code, overflowed, underflowed = fp8emu.encode(57344.0, "fp8")
    assert (code, overflowed, underflowed) == (0x7B, False, False)
    # Strictly above max normal overflows; at it, it does not.
    _, overflowed, _ = fp8emu.encode(57345.0, "fp8")
    assert overflowed
    # Deep underflow flushes to signed zero.
    code, _, underflowed = fp8emu.encode(1e-9, "fp8")
    assert underflowed and fp8emu.decode(code, "fp8") == 0.0


def test_roundtrip_is_identity_on_representables():
    codes = np.arange(256, dtype=np.uint64)
    values = np.array([fp8emu.decode(int(c), "fp8") for c in codes])
    finite = values[np.isfinite(values)]
    q = fp8emu.quantize(finite.astype(np.float32), "fp8", "nearest-even")
    assert q.overflow_count == 0
    back = fp8emu.dequantize(q)
    np.testing.assert_array_equal(back, finite.astype(np.float32))


def test_stochastic_rounding_is_unbiased_in_expectation():
    lo, hi = 1.0, 1.25  # adjacent FP8 values
    x = np.full(20000, 1.10, dtype=np.float32)
    q = fp8emu.dequantize(fp8emu.quantize(x, "fp8", "stochastic", seed=7))
    assert set(np.unique(q)) == {lo, hi}
    mean = float(q.mean())
    assert math.isclose(mean, 1.10, rel_tol=0.02)
    # Same seed, same draw.
    q2 = fp8emu.dequantize(fp8emu.quantize(x, "fp8", "stochastic", seed=7))
    np.testing.assert_array_equal(q, q2)


def test_gemm_matches_quantized_reference():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((5, 8)).astype(np.float32)
    b = rng.standard_normal((8, 4)).astype(np.float32)
    qa = fp8emu.quantize(a)
    qb = fp8emu.quantize(b)
    out = fp8emu.gemm(qa, qb)
    ref = fp8emu.dequantize(qa) @ fp8emu.dequantize(qb)
    np.testing.assert_allclose(out, ref, rtol=1e-6, atol=1e-6)


def test_conv2d_shape_and_identity_kernel():
    x = np.arange(2 * 1 * 4 * 4, dtype=np.float32).reshape(2, 1, 4, 4)
    w = np.zeros((1, 1, 3, 3), dtype=np.float32)
    w[0, 0, 1, 1] = 1.0
    out = fp8emu.conv2d(fp8emu.quantize(x), fp8emu.quantize(w), stride=1, pad=1)
    assert out.shape == (2, 1, 4, 4)
    np.testing.assert_allclose(out, fp8emu.dequantize(fp8emu.quantize(x)))


def test_loss_scaler_backoff_and_floor():
    s = fp8emu.LossScaler(
        kind="dynamic-backoff",
        scale=1024.0,
        backoff_factor=0.5,
        growth_factor=2.0,
        growth_interval=1000,
        min_threshold_schedule=[(0, 256.0)],
    )
    ev = s.step(grads_finite=False, iteration=0)
    assert ev.action == "backoff" and s.scale == 512.0
    s.step(grads_finite=False, iteration=1)
    ev = s.step(grads_finite=False, iteration=2)
    assert ev.action == "clamped_to_min" and s.scale == 256.0
    g = np.array([512.0, 1024.0], dtype=np.float32)
    np.testing.assert_allclose(s.unscale(g), g / 256.0)


def test_tensor_file_roundtrip(tmp_path):
    x = np.linspace(-2, 2, 12, dtype=np.float32).reshape(3, 4)
    p = tmp_path / "x.fp8t"
    fp8emu.save_tensor(str(p), x)
    np.testing.assert_array_equal(fp8emu.load_tensor(str(p)), x)
    q = fp8emu.quantize(x)
    pq = tmp_path / "q.fp8t"
    fp8emu.save_quantized(str(pq), q)
    q2 = fp8emu.load_quantized(str(pq))
    np.testing.assert_array_equal(q2.codes, q.codes)


def test_range_report_mentions_landmarks():
    report = fp8emu.range_report()
    assert "57344" in report and "FP8" in report


def test_run_experiment_trains(tmp_path):
    cfg = """
[model]
preset = rings-mlp

[data]
dataset = rings
train_samples = 64
val_samples = 32

[train]
epochs = 2
batch_size = 16
learning_rate = 0.05

[scaler]
kind = constant
scale = 128
"""
    out = fp8emu.run_experiment(cfg, str(tmp_path / "run"))
    assert not out["diverged"]
    assert out["total_iterations"] == 8
    assert len(out["evals"]) >= 2
    assert math.isfinite(out["evals"][-1]["val_loss"])


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-v"]))
