"""Adam optimizer behavior."""

import math

import numpy as np
import pytest

from nrsr.optim import BETA1, BETA2, EPS, AdamState, NonFiniteGradientError, adam_step
from nrsr.tensor import Tensor


def make_param(values):
    p = Tensor(np.asarray(values, dtype=np.float64), requires_grad=True)
    return p


def test_zero_gradient_leaves_params_unchanged():
    p = make_param([1.0, -2.0, 3.0])
    p.grad = np.zeros_like(p.data)
    params = [("w", p)]
    state = AdamState.for_params(params)
    adam_step(params, state, lr=0.1)
    assert np.array_equal(p.data, [1.0, -2.0, 3.0])
    assert state.step == 1


def test_first_step_magnitude_is_learning_rate():
    p = make_param([0.0])
    p.grad = np.ones(1)
    params = [("w", p)]
    state = AdamState.for_params(params)
    adam_step(params, state, lr=1e-3)
    # bias-corrected m_hat = g, v_hat = g^2 -> step = lr / (1 + eps)
    assert abs(abs(p.data[0]) - 1e-3) < 1e-9


def scalar_adam_oracle(x0, grad_fn, lr, steps):
    """Plain-float Adam recurrence, independent of the library implementation."""
    x, m, v = x0, 0.0, 0.0
    xs = []
    for t in range(1, steps + 1):
        g = grad_fn(x)
        m = BETA1 * m + (1 - BETA1) * g
        v = BETA2 * v + (1 - BETA2) * g * g
        mhat = m / (1 - BETA1**t)
        vhat = v / (1 - BETA2**t)
        x = x - lr * mhat / (math.sqrt(vhat) + EPS)
        xs.append(x)
    return xs


def test_quadratic_rollout_matches_oracle_and_descends():
    p = make_param([1.0])
    params = [("x", p)]
    state = AdamState.for_params(params)
    expected = scalar_adam_oracle(1.0, lambda x: 2.0 * x, lr=0.1, steps=10)
    prev = 1.0
    for step in range(10):
        p.grad = np.array([2.0 * p.data[0]])
        adam_step(params, state, lr=0.1)
        assert abs(p.data[0] - expected[step]) < 1e-12
        assert abs(p.data[0]) < abs(prev)
        prev = p.data[0]


def test_update_sign_opposes_first_moment():
    rng = np.random.default_rng(0)
    p = make_param(rng.standard_normal(32))
    params = [("w", p)]
    state = AdamState.for_params(params)
    for _ in range(5):
        before = p.data.copy()
        p.grad = rng.standard_normal(32)
        adam_step(params, state, lr=1e-2)
        mhat = state.m["w"] / (1 - BETA1**state.step)
        update = p.data - before
        nz = mhat != 0
        assert np.all(np.sign(update[nz]) == -np.sign(mhat[nz]))


def test_non_finite_gradient_rejected_with_name():
    good = make_param([1.0])
    bad = make_param([2.0])
    good.grad = np.array([0.5])
    bad.grad = np.array([np.nan])
    params = [("layer0/weights", good), ("layer7/bias", bad)]
    state = AdamState.for_params(params)
    with pytest.raises(NonFiniteGradientError, match="layer7/bias"):
        adam_step(params, state, lr=0.1)
    # whole step rejected: nothing moved, nothing counted
    assert good.data[0] == 1.0 and bad.data[0] == 2.0
    assert state.step == 0
    assert np.all(state.m["layer0/weights"] == 0.0)


def test_missing_gradient_is_an_error():
    p = make_param([1.0])
    params = [("w", p)]
    state = AdamState.for_params(params)
    with pytest.raises(ValueError, match="no gradient"):
        adam_step(params, state, lr=0.1)


def test_state_shape_mismatch_detected():
    p = make_param([1.0, 2.0])
    params = [("w", p)]
    state = AdamState.for_params(params)
    p.data = np.zeros(3)
    p.grad = np.zeros(3)
    with pytest.raises(ValueError, match="shape mismatch"):
        adam_step(params, state, lr=0.1)
