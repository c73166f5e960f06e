import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from surfvote import ops
from surfvote._core.graph import CompGraph, eager_on_arrays, evaluate, gradients
from surfvote._core.op import Constant, Input, Op
from surfvote.exceptions import ShapeMismatchError
from surfvote.ops.nn import BoundParameters, MlpParameters, apply_mlp

from tests.helpers.fixtures import teardown
from tests.helpers.gradcheck import graph_gradients, relative_error


class Fails(Op):
    def compute(self, a):
        raise ZeroDivisionError("boom")


def test_forward_identity(teardown):
    x = Input(name="x")
    graph = CompGraph(x, x)
    assert_array_equal(graph.forward(np.array([1.0, 2.0, 3.0])), [1.0, 2.0, 3.0])


def test_forward_product(teardown):
    x = Input(name="x")
    y = Input(name="y")
    graph = CompGraph([x, y], x * y)
    assert graph.forward([2.0, 3.0]) == 6.0
    assert graph.forward({"x": 4.0, y: 0.5}) == 2.0


def test_forward_with_wrong_number_of_inputs(teardown):
    x = Input(name="x")
    y = Input(name="y")
    graph = CompGraph([x, y], x + y)
    with pytest.raises(ValueError):
        graph.forward([1.0])


def test_backward_square(teardown):
    x = Input(name="x")
    graph = CompGraph(x, x * x)
    graph.forward(3.0)
    assert float(graph.backward()[x]) == 6.0


def test_backward_sum(teardown):
    x = Input(name="x")
    y = Input(name="y")
    graph = CompGraph([x, y], x + y)
    graph.forward([1.5, -2.0])
    grads = graph.backward()
    assert float(grads[x]) == 1.0 and float(grads[y]) == 1.0


def test_backward_with_seed(teardown):
    x = Input(name="x")
    graph = CompGraph(x, 2.0 * x)
    graph.forward(np.array([1.0, 2.0]))
    assert_array_equal(graph.backward(seed=np.array([3.0, -1.0]))[x], [6.0, -2.0])


def test_backward_before_forward(teardown):
    x = Input(name="x")
    graph = CompGraph(x, x * x)
    with pytest.raises(RuntimeError):
        graph.backward()
    with pytest.raises(RuntimeError):
        graph.evaluate(x)
    with pytest.raises(RuntimeError):
        graph.value(x)


def test_unused_input_gets_zero_gradient(teardown):
    x = Input(name="x")
    unused = Input(name="unused")
    graph = CompGraph([x, unused], ops.square(x))
    graph.forward([2.0, np.ones(4)])
    grads = graph.backward()
    assert float(grads[x]) == 4.0
    assert_array_equal(grads[unused], np.zeros(4))


def test_input_shape_check(teardown):
    x = Input(shape=(None, 3), name="x")
    graph = CompGraph(x, x * 2.0)
    graph.forward(np.zeros((5, 3)))
    with pytest.raises(ShapeMismatchError) as info:
        graph.forward(np.zeros((5, 2)))
    assert info.value.node_name == "x"


def test_incompatible_operands(teardown):
    a = Input(name="a")
    b = Input(name="b")
    graph = CompGraph([a, b], a + b)
    with pytest.raises(ShapeMismatchError):
        graph.forward([np.zeros(3), np.zeros(4)])


def test_compute_failure_carries_cause(teardown):
    x = Input(name="x")
    y = Fails(name="fails")(x)
    graph = CompGraph(x, y)
    with pytest.raises(RuntimeError, match="compute failed at fails") as info:
        graph.forward(1.0)
    assert isinstance(info.value.__cause__, ZeroDivisionError)


def test_duplicated_op_names(teardown):
    x = Input(name="x")
    y = ops.math.Exp(name="same")(x)
    z = ops.math.Sin(name="same")(y)
    with pytest.raises(ValueError, match="duplicated"):
        CompGraph(x, z)


def test_missing_input(teardown):
    x = Input(name="x")
    y = Input(name="y")
    with pytest.raises(ValueError, match="y"):
        CompGraph(x, x + y)


def test_ops_are_single_use(teardown):
    x = Input(name="x")
    op = ops.math.Exp()
    op(x)
    with pytest.raises(RuntimeError):
        op(x)


def test_automatic_names(teardown):
    Op._clear_names()
    first = ops.math.Exp()
    second = ops.math.Exp()
    assert (first.name, second.name) == ("Exp_0", "Exp_1")

    CompGraph._clear_names()
    graph = CompGraph(Input(), Constant(1.0))
    assert graph.name == "CompGraph_0"


def test_value_and_evaluate_reuse_forward(teardown):
    x = Input(name="x")
    hidden = ops.exp(x)
    graph = CompGraph(x, hidden + 1.0)
    graph.forward(0.0)
    assert graph.value(hidden) == 1.0
    assert graph.evaluate(hidden * 3.0) == 3.0


def test_module_evaluate():
    x = Input(name="x")
    y = x * 3.0
    assert evaluate(y, {x: 2.0}) == 6.0
    assert evaluate([y, x], {x: 1.0}) == [3.0, 1.0]
    with pytest.raises(ValueError):
        evaluate(y)


def test_gradients_without_dependence(teardown):
    x = Input(name="x")
    y = Input(name="y")
    (gx, gy) = gradients(ops.square(x), [x, y])
    assert gy is None
    assert evaluate(gx, {x: 5.0}) == 10.0


def test_second_order_gradient(teardown):
    x = Input(name="x")
    y = x * x * x
    (dy,) = gradients(y, [x])
    (d2y,) = gradients(dy, [x])
    assert evaluate(d2y, {x: 2.0}) == pytest.approx(12.0)


def test_stop_gradient(teardown):
    x = Input(name="x")
    (g,) = gradients(x * ops.stop_gradient(x), [x])
    assert evaluate(g, {x: 3.0}) == 3.0


def test_eager_on_arrays():
    @eager_on_arrays
    def twice(a):
        return ops.multiply(a, 2.0)

    assert twice(np.float64(1.5)) == 3.0
    assert isinstance(twice(1.5), float)
    assert_array_equal(twice(np.ones(2)), [2.0, 2.0])

    x = Input(name="x")
    assert not isinstance(twice(x), (float, np.ndarray))


def test_mlp_gradients_match_finite_differences(teardown):
    rng = np.random.default_rng(0)
    params = MlpParameters.random(
        [3, 5, 1], ["softplus", "linear"], rng, softplus_beta=5.0
    )
    bound = BoundParameters(params.to_dict("mlp"))
    x = Input(shape=(None, 3), name="points")
    loss = ops.reduce_sum(ops.square(apply_mlp(x, params, bound, "mlp")))
    graph = CompGraph([x] + bound.tensors, loss)

    feed = {x: rng.normal(size=(4, 3))}
    feed.update(bound.feed())
    for tensor, (symbolic, numerical) in graph_gradients(graph, feed).items():
        assert relative_error(symbolic, numerical) < 1e-5, tensor.name


def test_gradient_of_gradient_norm(teardown):
    # d/dx of |grad f|^2 for f = x . x is 8x
    x = Input(name="x")
    (grad,) = gradients(ops.reduce_sum(x * x), [x])
    (second,) = gradients(ops.reduce_sum(grad * grad), [x])
    point = np.array([0.5, -1.0, 2.0])
    assert_allclose(evaluate(second, {x: point}), 8.0 * point)
