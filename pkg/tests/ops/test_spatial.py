import numpy as np
import pytest
from numpy.testing import assert_array_equal

from surfvote import ops
from surfvote._core.graph import CompGraph, evaluate, gradients
from surfvote._core.op import Input
from surfvote.exceptions import ShapeMismatchError

from tests.helpers.fixtures import teardown

POINTS = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]])


def test_nearest_neighbors():
    queries = np.array([[0.9, 0.1, 0.0], [0.0, 1.5, 0.0], [-1.0, 0.0, 0.0]])
    assert_array_equal(ops.nearest_neighbors(queries, POINTS), [1, 2, 0])


def test_nearest_neighbors_with_mask():
    queries = np.array([[0.9, 0.1, 0.0]])
    mask = np.array([1.0, 0.0, 1.0])
    assert_array_equal(ops.nearest_neighbors(queries, POINTS, mask), [0])


def test_nearest_neighbors_needs_candidates():
    with pytest.raises(ValueError):
        ops.nearest_neighbors(np.zeros((1, 3)), POINTS, np.zeros(3))


def test_nearest_index_op(teardown):
    queries = Input(shape=(None, 3), name="queries")
    index = ops.nearest_index(queries, POINTS)
    graph = CompGraph(queries, index)
    assert_array_equal(graph.forward(np.array([[0.0, 1.9, 0.1]])), [2])
    assert_array_equal(graph.forward(np.zeros((0, 3))), np.zeros(0))


def test_nearest_index_with_empty_mask():
    index = evaluate(ops.nearest_index(np.ones((2, 3)), POINTS, np.zeros(3)))
    assert_array_equal(index, [0, 0])


def test_nearest_index_shape_checks(teardown):
    queries = Input(name="queries")
    graph = CompGraph(queries, ops.nearest_index(queries, POINTS))
    with pytest.raises(ShapeMismatchError):
        graph.forward(np.zeros((2, 2)))
    with pytest.raises(ShapeMismatchError):
        evaluate(ops.nearest_index(np.zeros((1, 3)), POINTS, np.ones(2)))


def test_distance_to_nearest_point_is_differentiable(teardown):
    # gradient flows through the gathered neighbour, not through the index
    queries = Input(name="queries")
    nearest = ops.gather(POINTS, ops.nearest_index(queries, POINTS))
    distance = ops.reduce_sum(ops.square(queries - nearest))
    (grad,) = gradients(distance, [queries])
    value = np.array([[0.9, 0.2, 0.0]])
    assert np.allclose(evaluate(grad, {queries: value}), 2.0 * (value - POINTS[1]))


def test_lookup():
    def table(points):
        return points[:, 0] * 2.0, points[:, 1] > 0

    doubled, positive = evaluate(ops.lookup(table, POINTS, n_outputs=2))
    assert_array_equal(doubled, [0.0, 2.0, 0.0])
    assert_array_equal(positive, [False, False, True])

    single = evaluate(ops.lookup(lambda p: (p[:, 2],), POINTS, n_outputs=1))
    assert_array_equal(single, [0.0, 0.0, 0.0])
