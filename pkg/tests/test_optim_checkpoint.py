import numpy as np
import pytest

from lad import checkpoint
from lad.nn import ParamSet
from lad.optim import AdamState, AdamW, MissingGradientError, adamw_step


def one_param(value):
    ps = ParamSet()
    ps.add("w", np.array(value, dtype=float))
    return ps


def test_first_adam_step_moves_by_lr_times_sign():
    # with bias correction the first step is lr * g / (|g| + eps)
    ps = one_param([1.0, -2.0, 3.0])
    g = np.array([0.5, -4.0, 1e-3])
    adamw_step(ps, {"w": g}, AdamState(), lr=0.1)
    np.testing.assert_allclose(ps["w"].data, [0.9, -1.9, 2.9], atol=1e-5)


def test_adamw_matches_hand_recurrence_over_steps():
    r = np.random.default_rng(0)
    p0 = r.normal(size=4)
    ps = one_param(p0)
    opt = AdamW(ps, lr=0.01, betas=(0.8, 0.9), weight_decay=0.1)
    p, m, v = p0.copy(), np.zeros(4), np.zeros(4)
    for t in range(1, 6):
        g = r.normal(size=4)
        opt.step({"w": g})
        m = 0.8 * m + 0.2 * g
        v = 0.9 * v + 0.1 * g * g
        p = p - 0.01 * 0.1 * p
        p = p - 0.01 * (m / (1 - 0.8 ** t)) / (np.sqrt(v / (1 - 0.9 ** t)) + 1e-8)
        np.testing.assert_allclose(ps["w"].data, p, rtol=1e-12)


def test_zero_lr_is_identity_but_moments_advance():
    ps = one_param([1.0, 2.0])
    st = AdamState()
    adamw_step(ps, {"w": np.array([1.0, 1.0])}, st, lr=0.0, weight_decay=0.5)
    np.testing.assert_array_equal(ps["w"].data, [1.0, 2.0])
    assert st.step == 1 and np.all(st.m["w"] != 0)


def test_missing_gradient_names_parameter():
    ps = one_param([1.0])
    ps.add("b", np.zeros(2))
    with pytest.raises(MissingGradientError, match="b"):
        adamw_step(ps, {"w": np.zeros(1)}, AdamState(), lr=0.1)


def test_gradient_shape_mismatch_raises():
    with pytest.raises(ValueError, match="shape"):
        adamw_step(one_param([1.0, 2.0]), {"w": np.zeros(3)}, AdamState(), lr=0.1)


def test_checkpoint_roundtrip_bit_exact(tmp_path):
    r = np.random.default_rng(1)
    entries = {"a": r.normal(size=(3, 2)), "scalar": np.array(2.5), "empty": np.zeros((0, 4)),
               "ünï": r.normal(size=5)}
    digest = checkpoint.save(tmp_path / "x.ckpt", entries)
    back = checkpoint.load(tmp_path / "x.ckpt")
    assert list(back) == list(entries)
    for k in entries:
        assert back[k].shape == entries[k].shape
        assert back[k].tobytes() == np.asarray(entries[k]).tobytes()
    assert digest == checkpoint.save(tmp_path / "y.ckpt", back)


def test_checkpoint_rejects_bad_magic_and_truncation():
    blob = checkpoint.dumps({"a": np.ones(3)})
    with pytest.raises(checkpoint.CheckpointFormatError, match="magic"):
        checkpoint.loads(b"NOTACKPT" + blob[8:])
    with pytest.raises(checkpoint.CheckpointFormatError, match="truncated"):
        checkpoint.loads(blob[:-3])
    with pytest.raises(checkpoint.CheckpointFormatError, match="trailing"):
        checkpoint.loads(blob + b"\0")


def test_paramset_load_arrays_strict():
    ps = one_param([1.0])
    with pytest.raises(KeyError, match="extra"):
        ps.load_arrays({"w": np.zeros(1), "extra": np.zeros(1)})
    with pytest.raises(ValueError, match="shape"):
        ps.load_arrays({"w": np.zeros(2)})
