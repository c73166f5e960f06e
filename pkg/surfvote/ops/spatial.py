"""Spatial queries inside computation graphs: nearest neighbours and lookups
into precomputed grids."""
from typing import Callable, Optional, Tuple

import numpy as np
from sklearn.neighbors import KDTree

from surfvote._core.op import Op

__all__ = ["nearest_index", "nearest_neighbors", "lookup"]


def nearest_neighbors(
    queries: np.ndarray, points: np.ndarray, mask: Optional[np.ndarray] = None
) -> np.ndarray:
    """Index into ``points`` of the nearest neighbour of every query.

    If ``mask`` is given, only the points where it is positive are candidates.
    """
    queries = np.asarray(queries, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    candidates = np.arange(len(points))
    if mask is not None:
        candidates = np.flatnonzero(np.asarray(mask) > 0)
    if len(queries) == 0 or len(candidates) == 0:
        raise ValueError("Nearest-neighbour queries need non-empty point sets.")
    tree = KDTree(points[candidates])
    _, indices = tree.query(queries, k=1)
    return candidates[indices[:, 0]]


class NearestIndex(Op):
    """For every row of ``queries``, the index of its nearest row in ``points``
    (optionally among the rows selected by a 0/1 mask).

    Selecting the neighbour is piecewise constant, so the op has no gradient;
    distances are differentiated through a ``gather`` of the selected points.
    A mask selecting nothing yields index 0 for every query, for callers that
    weight the result by the same mask.
    """

    differentiable = False

    def compute(self, queries, points, *mask):
        if mask and not np.any(np.asarray(mask[0]) > 0):
            return np.zeros(len(queries), dtype=np.intp)
        if len(queries) == 0:
            return np.zeros(0, dtype=np.intp)
        return nearest_neighbors(queries, points, mask[0] if mask else None)

    def infer_shape(self, queries, points, *mask):
        if len(queries) != 2 or len(points) != 2 or queries[1] != points[1]:
            raise ValueError(
                "Expected (n, d) and (m, d) point sets. Got {} and {}.".format(
                    queries, points
                )
            )
        if mask and tuple(mask[0]) != (points[0],):
            raise ValueError("The mask must have shape ({},).".format(points[0]))
        return [(queries[0],)]


class Lookup(Op):
    """Evaluate a non-differentiable table lookup at points.

    ``function`` maps an (n, 3) array to a tuple of per-point arrays; the op has
    one output per returned array.
    """

    differentiable = False

    def __init__(
        self,
        function: Callable[[np.ndarray], Tuple[np.ndarray, ...]],
        n_outputs: int,
        name=None,
    ):
        super().__init__(name=name, n_outputs=n_outputs)
        self.function = function

    def compute(self, points):
        values = tuple(self.function(np.asarray(points)))
        return values[0] if self.n_outputs == 1 else values


def nearest_index(queries, points, mask=None):
    if mask is None:
        return NearestIndex()(queries, points)
    return NearestIndex()(queries, points, mask)


def lookup(function, points, n_outputs: int):
    return Lookup(function, n_outputs)(points)
