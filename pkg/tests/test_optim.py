import copy

import numpy as np
import pytest

from rgp.numcore import (
    OptimizerState,
    Tensor,
    adam_state,
    adam_step,
    gd_state,
    gd_step,
)


def param(values):
    t = Tensor(values, requires_grad=True)
    t.grad = np.zeros_like(t.data)
    return t


class TestAdam:
    def test_zero_grad_no_decay_is_fixed_point(self):
        p = param([[1.0, -2.0]])
        state = adam_state(learning_rate=1e-3)
        before = p.data.copy()
        for _ in range(5):
            adam_step({"p": p}, state)
        np.testing.assert_array_equal(p.data, before)

    def test_first_step_magnitude_is_lr_times_sign(self):
        for g in (0.7, -3.0, 12.5):
            p = param([[1.0]])
            p.grad = np.array([[g]])
            state = adam_state(learning_rate=1e-3)
            adam_step({"p": p}, state)
            assert p.data[0, 0] == pytest.approx(1.0 - 1e-3 * np.sign(g), abs=1e-6)

    def test_repeated_from_identical_state_is_bit_identical(self):
        def run():
            rng = np.random.default_rng(3)
            p = param(rng.normal(0, 1, (3, 3)))
            state = adam_state(learning_rate=1e-2, weight_decay=1e-4)
            for step in range(20):
                p.grad = np.sin(p.data + step)  # deterministic pseudo-grads
                adam_step({"p": p}, state)
            return p.data

        np.testing.assert_array_equal(run(), run())

    def test_purity_given_state_snapshot(self):
        # Applying one step to identical (params, grads, state) copies
        # must produce bit-identical params and state buffers.
        rng = np.random.default_rng(5)
        p1 = param(rng.normal(0, 1, (2, 2)))
        p1.grad = rng.normal(0, 1, (2, 2))
        state1 = adam_state(1e-3, weight_decay=1e-5)
        adam_step({"p": p1}, state1)  # warm up moment buffers

        p2 = param(p1.data.copy())
        p2.grad = p1.grad.copy()
        state2 = copy.deepcopy(state1)
        adam_step({"p": p1}, state1)
        adam_step({"p": p2}, state2)
        np.testing.assert_array_equal(p1.data, p2.data)
        np.testing.assert_array_equal(state1.first_moment["p"], state2.first_moment["p"])
        np.testing.assert_array_equal(state1.second_moment["p"], state2.second_moment["p"])
        assert state1.step_count == state2.step_count == 2

    def test_step_count_increments_by_one(self):
        p = param([[0.0]])
        state = adam_state(1e-3)
        for expected in (1, 2, 3):
            adam_step({"p": p}, state)
            assert state.step_count == expected

    def test_wrong_kind_rejected(self):
        with pytest.raises(ValueError, match="adam_step"):
            adam_step({}, gd_state(0.1))

    def test_decoupled_weight_decay_applies_without_gradient(self):
        p = param([[10.0]])
        state = adam_state(learning_rate=0.1, weight_decay=0.5)
        adam_step({"p": p}, state)
        # decay only (zero grad): p *= 1 - lr*wd
        assert p.data[0, 0] == pytest.approx(10.0 * (1 - 0.05), abs=1e-12)

    def test_moment_shapes_track_params(self):
        p = param([[1.0, 2.0]])
        state = adam_state(1e-3)
        adam_step({"p": p}, state)
        assert state.first_moment["p"].shape == (1, 2)
        assert state.second_moment["p"].shape == (1, 2)


class TestGd:
    def test_zero_grad_unchanged(self):
        p = param([[4.0]])
        gd_step({"p": p}, gd_state(0.1))
        assert p.data[0, 0] == 4.0

    def test_definition(self):
        p = param([[1.0]])
        p.grad = np.array([[2.0]])
        gd_step({"p": p}, gd_state(0.1))
        assert p.data[0, 0] == pytest.approx(0.8, abs=1e-15)

    def test_quadratic_bowl_monotone_descent(self):
        # f(x) = 0.5 * x^2, grad = x, lr small
        p = param([[3.0]])
        state = gd_state(0.05)
        losses = []
        for _ in range(100):
            losses.append(0.5 * p.data[0, 0] ** 2)
            p.grad = p.data.copy()
            gd_step({"p": p}, state)
        diffs = np.diff(losses)
        assert np.all(diffs < 0)

    def test_wrong_kind_rejected(self):
        with pytest.raises(ValueError, match="gd_step"):
            gd_step({}, adam_state(0.1))


def test_optimizer_state_dataclass_defaults():
    state = OptimizerState(kind="adam", learning_rate=1e-3)
    assert state.beta1 == 0.9 and state.beta2 == 0.999 and state.epsilon == 1e-8
    assert state.step_count == 0
