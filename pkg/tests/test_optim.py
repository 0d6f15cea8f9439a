import math

import numpy as np
import pytest

from egolift.optim import OptState, Schedule, adamw_step, clip_gradients, lr_at
from egolift.rng import Rng
from egolift.tensor import Tensor


def test_zero_grads_zero_decay_leave_params_unchanged():
    params = {"w": Tensor(Rng(0).normal((3, 3)))}
    state = OptState.for_params(params, weight_decay=0.0)
    out = adamw_step(params, {"w": np.zeros((3, 3))}, state, lr=1e-3)
    assert np.array_equal(out["w"].data, params["w"].data)


def test_single_scalar_step_matches_hand_oracle():
    p0 = 0.5
    params = {"w": Tensor(np.array(p0))}
    state = OptState.for_params(params, weight_decay=0.0)
    lr = 1e-3
    out = adamw_step(params, {"w": np.array(1.0)}, state, lr=lr)
    # one step, g = 1: m_hat = 1, v_hat = 1 -> update = -lr / (1 + eps)
    want = p0 - lr * 1.0 / (1.0 + 1e-8)
    assert abs(out["w"].item() - want) < 1e-15


def test_decay_only_is_multiplicative_shrink():
    p0 = Rng(1).normal((4,))
    params = {"w": Tensor(p0)}
    state = OptState.for_params(params, weight_decay=0.01)
    out = adamw_step(params, {"w": np.zeros(4)}, state, lr=0.1)
    assert np.allclose(out["w"].data, p0 * (1 - 0.1 * 0.01))


def test_two_steps_track_reference_formula():
    g1, g2 = 0.7, -0.3
    params = {"w": Tensor(np.array(1.0))}
    state = OptState.for_params(params, weight_decay=0.0)
    params = adamw_step(params, {"w": np.array(g1)}, state, lr=1e-2)
    params = adamw_step(params, {"w": np.array(g2)}, state, lr=1e-2)
    m = 0.0
    v = 0.0
    p = 1.0
    for t, g in ((1, g1), (2, g2)):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        p -= 1e-2 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert abs(params["w"].item() - p) < 1e-12


def test_nan_gradient_aborts_with_parameter_name():
    params = {"good": Tensor(np.ones(2)), "bad": Tensor(np.ones(2))}
    state = OptState.for_params(params)
    with pytest.raises(FloatingPointError) as exc:
        adamw_step(params, {"good": np.zeros(2), "bad": np.array([1.0, np.nan])},
                   state, lr=1e-3)
    assert "bad" in str(exc.value)


def test_clip_gradients_scales_to_max_norm():
    grads = {"a": np.array([3.0, 0.0]), "b": np.array([0.0, 4.0])}
    clipped = clip_gradients(grads, max_norm=1.0)
    total = math.sqrt(sum(float((g ** 2).sum()) for g in clipped.values()))
    assert abs(total - 1.0) < 1e-12
    same = clip_gradients(grads, max_norm=10.0)
    assert same is grads  # under the cap: untouched


def test_lr_schedule_endpoints():
    sched = Schedule(total_steps=100, warmup_steps=10, peak_lr=1e-3)
    assert lr_at(0, sched) == 0.0
    assert lr_at(10, sched) == 1e-3
    assert lr_at(100, sched) == 0.0


def test_lr_schedule_continuity_and_monotone_decay():
    sched = Schedule(total_steps=200, warmup_steps=20, peak_lr=1e-3)
    before = lr_at(19, sched)
    at = lr_at(20, sched)
    after = lr_at(21, sched)
    assert before < at and after < at
    assert at - after < 1e-5  # continuous at the boundary
    values = [lr_at(s, sched) for s in range(20, 201)]
    assert all(a >= b for a, b in zip(values, values[1:]))


def test_lr_schedule_range_errors():
    sched = Schedule(total_steps=10, warmup_steps=2)
    with pytest.raises(ValueError):
        lr_at(-1, sched)
    with pytest.raises(ValueError):
        lr_at(11, sched)
    with pytest.raises(ValueError):
        Schedule(total_steps=5, warmup_steps=5)
