import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from surfvote.optim import Adam, learning_rate, optimizer_step


@pytest.mark.parametrize(
    "iteration,expected",
    [(0, 0.0), (5, 0.5), (10, 1.0), (55, 0.525), (100, 0.05), (150, 0.05)],
)
def test_learning_rate(iteration, expected):
    assert learning_rate(iteration, 1.0, 100, warmup=10, alpha=0.05) == (
        pytest.approx(expected)
    )


def test_learning_rate_without_warmup():
    assert learning_rate(0, 2e-3, 10) == pytest.approx(2e-3)


class TestAdam:
    def test_first_step(self):
        # bias correction makes the first step lr * sign(g)
        params = {"a": np.array([1.0, 2.0])}
        adam = Adam()
        assert adam.step(params, {"a": np.array([0.5, -2.0])}, lr=0.1)
        assert_allclose(params["a"], [0.9, 2.1], rtol=1e-6)
        assert adam.step_count == 1
        assert_allclose(adam.m["a"], [0.05, -0.2])
        assert_allclose(adam.v["a"], [0.00025, 0.004])

    def test_second_step(self):
        beta1, beta2 = 0.9, 0.999
        params = {"a": np.array([0.0])}
        adam = Adam(beta1, beta2, eps=0.0)
        adam.step(params, {"a": np.array([1.0])}, lr=1.0)
        adam.step(params, {"a": np.array([3.0])}, lr=1.0)
        m = (beta1 * 0.1 + 3.0 * (1 - beta1)) / (1 - beta1 ** 2)
        v = (beta2 * 0.001 + 9 * (1 - beta2)) / (1 - beta2 ** 2)
        assert_allclose(params["a"], [-1.0 - m / np.sqrt(v)])

    def test_zero_gradient_leaves_parameters(self):
        params = {"a": np.array([1.0, -1.0])}
        Adam().step(params, {"a": np.zeros(2)}, lr=0.5)
        assert_array_equal(params["a"], [1.0, -1.0])

    def test_updates_in_place(self):
        array = np.ones(3)
        Adam().step({"a": array}, {"a": np.ones(3)}, lr=0.1)
        assert_allclose(array, 0.9)

    def test_non_finite_gradient_skips_step(self):
        params = {"a": np.ones(2), "b": np.ones(1)}
        adam = Adam()
        grads = {"a": np.ones(2), "b": np.array([np.nan])}
        assert not optimizer_step(params, grads, adam, 0.1)
        assert_array_equal(params["a"], 1.0)
        assert adam.step_count == 0 and not adam.m

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            Adam().step({"a": np.ones(2)}, {"a": np.ones(3)}, lr=0.1)

    def test_keeps_dtype(self):
        params = {"a": np.ones(2, dtype=np.float32)}
        Adam().step(params, {"a": np.ones(2)}, lr=0.1)
        assert params["a"].dtype == np.float32
