"""Global geometric refinement.

Query samples are pulled onto the zero-level set of the field
(``x_q = x - f(x) grad f(x) / |grad f(x)|``), the pulled points that fall into
valid cells of the buffer snapshot form the filtered set ``x_q'``, and three
losses compare them with the target points ``x_t`` resampled from the buffer:

- ``l_cd``: bidirectional Chamfer distance between ``x_q`` and ``x_t``;
- ``l_surf``: hit-weighted mean of the absolute buffer SDF at ``x_q'``;
- ``l_global``: absolute difference between that mean and the one-way Chamfer
  distance from ``x_q'`` to ``x_t``.

Every function builds graph fragments when given tensors and evaluates them when
given arrays. Masks are 0/1 float arrays so that graph shapes never depend on data.
"""
import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional, Tuple, Union

import numpy as np

from surfvote import ops
from surfvote._core.graph import eager_on_arrays, evaluate
from surfvote._core.op import as_tensor
from surfvote._core.tensor import Tensor
from surfvote._core.utils import check_points
from surfvote.exceptions import DegenerateBatchError
from surfvote.fields import gradient_tensor
from surfvote.weight_buffer import BufferSnapshot

logger = logging.getLogger(__name__)

GRADIENT_EPS = 1e-8

ArrayOrTensor = Union[np.ndarray, Tensor]


@dataclass
class SurfacePointSet:
    """Pulled points with the buffer statistics of their cells.

    Attributes
    ----------
    points
        Pulled points ``x_q``, shape (n, 3).

    mask
        1 for the points of ``x_q'`` (inside [-1, 1]^3 and in a valid cell), else 0.

    sdf
        Averaged buffer SDF of the owning cell (0 where masked out).

    counts
        Hit count of the owning cell (0 where masked out).
    """

    points: ArrayOrTensor
    mask: ArrayOrTensor
    sdf: ArrayOrTensor
    counts: ArrayOrTensor

    @property
    def count(self) -> int:
        """Size of ``x_q'`` (arrays only)."""
        return int(np.sum(np.asarray(self.mask) > 0))

    def selected(self) -> np.ndarray:
        """The points of ``x_q'`` (arrays only)."""
        return np.asarray(self.points)[np.asarray(self.mask) > 0]


@dataclass
class TargetPointSet:
    """Target points ``x_t`` resampled from the buffer. They are supervision and
    enter graphs as constants."""

    points: np.ndarray

    def __post_init__(self):
        self.points = check_points("points", self.points)

    def __len__(self):
        return len(self.points)

    @classmethod
    def resample(cls, snapshot: BufferSnapshot, count: int, rng=None):
        return cls(snapshot.resample_targets(count, rng))


def pull_points(x, sdf, grad, eps: float = GRADIENT_EPS) -> Tuple[Tensor, Tensor]:
    """Pull points given their SDF values (n, 1) and gradients (n, 3).

    Returns the pulled points and a 0/1 mask of the points whose gradient norm
    exceeds ``eps``; the others are left in place.
    """
    length = ops.norm(grad, axis=-1, keepdims=True)
    keep = ops.greater(length, eps)
    step = sdf * grad / ops.maximum(length, eps)
    pulled = as_tensor(x) - step * keep
    return pulled, ops.reshape(keep, (-1,))


def pull_to_surface(field: Callable, points, eps: float = GRADIENT_EPS):
    """Move query points onto the zero-level set of ``field`` along its gradient.

    With a points tensor, returns the tensors ``(x_q, keep)`` where ``keep`` flags
    the points with a usable gradient. With an array, returns the pulled points
    of shape (m, 3) after dropping the points whose gradient norm is <= ``eps``.

    Raises
    ------
    DegenerateBatchError
        If every point of an array batch had to be dropped.
    """
    symbolic = isinstance(points, Tensor)
    if not symbolic:
        points = check_points("points", points)
    x, sdf, _, grad = gradient_tensor(field, points)
    pulled, keep = pull_points(x, sdf, grad, eps)
    if symbolic:
        return pulled, keep
    pulled, keep = evaluate([pulled, keep])
    kept = np.asarray(keep) > 0
    n_dropped = int(np.count_nonzero(~kept))
    if n_dropped == len(kept) and len(kept) > 0:
        raise DegenerateBatchError(
            "All {} query points have a vanishing gradient.".format(len(kept))
        )
    if n_dropped:
        logger.info(
            "Dropped {} query points with a vanishing gradient.".format(n_dropped)
        )
    return np.asarray(pulled)[kept]


def _lookup_function(snapshot: BufferSnapshot):
    def function(points):
        sdf, counts, valid = snapshot.lookup_sdf(points)
        return sdf, counts.astype(np.float64), valid.astype(np.float64)

    return function


def filter_valid(
    points: ArrayOrTensor,
    snapshot: BufferSnapshot,
    keep: Optional[ArrayOrTensor] = None,
) -> SurfacePointSet:
    """Attach buffer statistics to pulled points and mask out the points outside
    [-1, 1]^3, in never-hit cells or (when given) with ``keep`` = 0."""
    if isinstance(points, Tensor) or isinstance(keep, Tensor):
        sdf, counts, valid = ops.lookup(_lookup_function(snapshot), points, 3)
    else:
        points = check_points("points", points)
        sdf, counts, valid = _lookup_function(snapshot)(points)
    mask = valid if keep is None else valid * keep
    return SurfacePointSet(points, mask, sdf, counts)


def with_live_sdf(points_set: SurfacePointSet, sdf_values) -> SurfacePointSet:
    """Replace the buffer SDF by the field's own values at the points (shape (n,)
    or (n, 1)), so the surface terms carry gradients into the field."""
    values = ops.reshape(as_tensor(sdf_values), (-1,)) * points_set.mask
    return replace(points_set, sdf=values)


@eager_on_arrays
def chamfer_one_way(a, b, squared: bool = True, mask=None, b_mask=None):
    """Mean distance from every point of ``a`` to its nearest point of ``b``.

    Distances are squared Euclidean by default. ``mask`` weights the points of
    ``a`` (a masked mean, 0 when nothing is selected); ``b_mask`` restricts the
    candidates in ``b``.

    Raises
    ------
    ValueError
        If either point set is empty.
    """
    for name, value in (("a", a), ("b", b)):
        if not isinstance(value, Tensor) and np.shape(value)[0] == 0:
            raise ValueError("Point set {} is empty.".format(name))
    a, b = as_tensor(a), as_tensor(b)
    if b_mask is None:
        index = ops.nearest_index(ops.stop_gradient(a), ops.stop_gradient(b))
    else:
        index = ops.nearest_index(
            ops.stop_gradient(a), ops.stop_gradient(b), b_mask
        )
    offset = a - ops.gather(b, index)
    squared_distance = ops.reduce_sum(ops.square(offset), axis=-1)
    distance = squared_distance if squared else ops.sqrt(squared_distance)
    if mask is None:
        return ops.reduce_mean(distance)
    return ops.reduce_sum(distance * mask) / ops.maximum(ops.reduce_sum(mask), 1.0)


@eager_on_arrays
def l_cd(pulled, targets, mask=None, squared: bool = True):
    """Bidirectional Chamfer distance ``(d(x_q, x_t) + d(x_t, x_q)) / 2``.

    ``mask`` (optional) excludes pulled points from both directions. With every
    pulled point excluded the distance is 0 and no gradient flows.
    """
    if isinstance(targets, TargetPointSet):
        targets = targets.points
    forward = chamfer_one_way(pulled, targets, squared, mask=mask)
    backward = chamfer_one_way(targets, pulled, squared, b_mask=mask)
    if mask is not None:
        backward = backward * ops.minimum(ops.reduce_sum(mask), 1.0)
    return 0.5 * (forward + backward)


def _surface_sdf_mean(points_set: SurfacePointSet):
    mask = as_tensor(points_set.mask)
    weighted = ops.abs(points_set.sdf) / ops.maximum(points_set.counts, 1.0) * mask
    return ops.reduce_sum(weighted) / ops.maximum(ops.reduce_sum(mask), 1.0)


@eager_on_arrays
def l_surf(points_set: SurfacePointSet):
    """``sum_i |f(x'_q,i)| / n_i`` over the filtered points, divided by their
    number. 0 when no point is selected."""
    return _surface_sdf_mean(points_set)


@eager_on_arrays
def l_global(points_set: SurfacePointSet, targets, squared: bool = True):
    """``|mean_i |f(x'_q,i)| - d(x_q', x_t)|`` with the hit-weighted mean of
    :func:`l_surf` and the one-way Chamfer distance from the filtered points."""
    if isinstance(targets, TargetPointSet):
        targets = targets.points
    distance = chamfer_one_way(
        points_set.points, targets, squared, mask=points_set.mask
    )
    return ops.abs(_surface_sdf_mean(points_set) - distance)


@eager_on_arrays
def l_geo(cd, surf, global_, w_surf: float = 1.0, w_global: float = 1.0):
    """``l_cd + w_surf * l_surf + w_global * l_global``."""
    if w_surf < 0 or w_global < 0:
        raise ValueError("Loss weights must be >= 0.")
    total = as_tensor(cd)
    if w_surf:
        total = total + as_tensor(surf) * w_surf
    if w_global:
        total = total + as_tensor(global_) * w_global
    return total


@dataclass
class GeometryLosses:
    """Tensors of the refinement losses of one batch."""

    pulled: Tensor
    keep: Tensor
    points_set: SurfacePointSet
    n_valid: Tensor
    sdf_mean: Tensor
    cd_valid: Tensor
    l_cd: Tensor
    l_surf: Tensor
    l_global: Tensor
    l_geo: Tensor


def build_geometry_losses(
    x,
    sdf,
    grad,
    snapshot: BufferSnapshot,
    targets: TargetPointSet,
    w_surf: float = 1.0,
    w_global: float = 1.0,
    surface_sdf: str = "buffer",
    field: Optional[Callable] = None,
) -> GeometryLosses:
    """Wire the refinement losses on top of the query samples ``x`` (m, 3) with
    their SDF values (m, 1) and gradients (m, 3).

    With ``surface_sdf="field"`` the surface terms read ``field`` at the pulled
    points instead of the buffer averages.
    """
    pulled, keep = pull_points(x, sdf, grad)
    points_set = filter_valid(pulled, snapshot, keep)
    if surface_sdf == "field":
        if field is None:
            raise ValueError("surface_sdf=\"field\" needs the field.")
        live, _ = field(pulled)
        points_set = with_live_sdf(points_set, live)
    elif surface_sdf != "buffer":
        raise ValueError("Unknown surface_sdf {!r}.".format(surface_sdf))

    cd = l_cd(pulled, targets.points, keep)
    surf = l_surf(points_set)
    sdf_mean = _surface_sdf_mean(points_set)
    cd_valid = chamfer_one_way(pulled, targets.points, mask=points_set.mask)
    global_ = ops.abs(sdf_mean - cd_valid)
    geo = l_geo(cd, surf, global_, w_surf, w_global)
    return GeometryLosses(
        pulled=pulled,
        keep=keep,
        points_set=points_set,
        n_valid=ops.reduce_sum(points_set.mask),
        sdf_mean=sdf_mean,
        cd_valid=cd_valid,
        l_cd=cd,
        l_surf=surf,
        l_global=global_,
        l_geo=geo,
    )
