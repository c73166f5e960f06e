"""Reductions and scans."""
from typing import Optional, Tuple, Union

import numpy as np

from surfvote._core.op import Op
from surfvote.ops.math import broadcast_like, sqrt
from surfvote.ops.shape import reshape_like

__all__ = ["reduce_sum", "reduce_mean", "exclusive_cumprod", "norm"]

Axis = Optional[Union[int, Tuple[int, ...]]]


def _normalize_axis(axis: Axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = axis if isinstance(axis, tuple) else (axis,)
    return tuple(sorted(a % ndim for a in axes))


def _keepdims_shape(shape, axis: Axis):
    axes = _normalize_axis(axis, len(shape))
    return tuple(1 if i in axes else size for i, size in enumerate(shape))


class Sum(Op):
    def __init__(self, axis: Axis = None, keepdims: bool = False, name=None):
        super().__init__(name=name)
        self.axis = axis
        self.keepdims = keepdims

    def compute(self, a):
        return np.sum(a, axis=self.axis, keepdims=self.keepdims)

    def gradient(self, grads, wrt):
        (g,) = grads
        (a,) = self.inputs
        if self.axis is not None and not self.keepdims:
            g = KeepDims(self.axis)(g, a)
        return [broadcast_like(g, a)]


class KeepDims(Op):
    """Reshape a reduced array to the keepdims shape of the reduction of a
    reference array, so that it broadcasts against the reference."""

    def __init__(self, axis: Axis, name=None):
        super().__init__(name=name)
        self.axis = axis

    def compute(self, g, reference):
        return np.reshape(g, _keepdims_shape(np.shape(reference), self.axis))

    def gradient(self, grads, wrt):
        g, _ = self.inputs
        return [reshape_like(grads[0], g) if wrt[0] else None, None]


class InverseCount(Op):
    """One over the number of elements a reduction over ``axis`` averages."""

    differentiable = False

    def __init__(self, axis: Axis = None, name=None):
        super().__init__(name=name)
        self.axis = axis

    def compute(self, a):
        shape = np.shape(a)
        count = 1
        for i in _normalize_axis(self.axis, len(shape)):
            count *= shape[i]
        if count == 0:
            raise ValueError("Cannot average over an empty axis.")
        return 1.0 / count


class ExclusiveCumprod(Op):
    """Exclusive cumulative product along the last axis:
    ``out[..., i] = prod(x[..., :i])`` with ``out[..., 0] = 1``.

    Used for transmittance. The gradient is computed with a reverse recursion
    (no division), so it stays exact when a factor is zero.
    """

    def compute(self, x):
        x = np.asarray(x)
        out = np.ones_like(x)
        if x.shape[-1] > 1:
            out[..., 1:] = np.cumprod(x[..., :-1], axis=-1)
        return out

    def infer_shape(self, x):
        return [x]

    def gradient(self, grads, wrt):
        (x,) = self.inputs
        return [ExclusiveCumprodGrad()(grads[0], x, self.outputs[0])]


class ExclusiveCumprodGrad(Op):
    """d/dx_k sum_i g_i T_i = T_k * S_k with S_k = g_{k+1} + x_{k+1} S_{k+1}."""

    def compute(self, g, x, t):
        g = np.broadcast_to(g, np.shape(x))
        tail = np.zeros_like(t)
        running = np.zeros(np.shape(x)[:-1], dtype=t.dtype)
        for k in range(np.shape(x)[-1] - 2, -1, -1):
            running = g[..., k + 1] + x[..., k + 1] * running
            tail[..., k] = running
        return t * tail

    def gradient(self, grads, wrt):
        raise NotImplementedError(
            "Second-order gradients through exclusive_cumprod are not supported."
        )


def reduce_sum(a, axis: Axis = None, keepdims: bool = False):
    return Sum(axis=axis, keepdims=keepdims)(a)


def reduce_mean(a, axis: Axis = None, keepdims: bool = False):
    return Sum(axis=axis, keepdims=keepdims)(a) * InverseCount(axis)(a)


def exclusive_cumprod(x):
    return ExclusiveCumprod()(x)


def norm(x, axis: int = -1, keepdims: bool = True, eps: float = 0.0):
    """Euclidean norm along ``axis``. A positive ``eps`` is added under the root
    to keep the gradient finite at zero."""
    squared = reduce_sum(x * x, axis=axis, keepdims=keepdims)
    if eps:
        squared = squared + eps
    return sqrt(squared)
