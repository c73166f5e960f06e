"""Shape manipulation: reshape, indexing, gather/scatter, concatenation and
splitting. Every op here has its adjoint here as well, so gradients of
gradients stay inside this module."""
from typing import List, Sequence

import numpy as np

from surfvote._core.op import Op
from surfvote._core.utils import listify

__all__ = [
    "reshape",
    "reshape_like",
    "expand_dims",
    "getitem",
    "scatter_like",
    "gather",
    "scatter_add",
    "concatenate",
    "stack",
    "split",
]


def _is_basic_index(key) -> bool:
    parts = key if isinstance(key, tuple) else (key,)
    return all(
        part is None or part is Ellipsis or isinstance(part, (int, slice))
        for part in parts
    )


class Reshape(Op):
    def __init__(self, shape: Sequence[int], name=None):
        super().__init__(name=name)
        self.shape = tuple(shape)

    def compute(self, a):
        return np.reshape(a, self.shape)

    def gradient(self, grads, wrt):
        return [reshape_like(grads[0], self.inputs[0])]


class ReshapeLike(Op):
    def compute(self, x, reference):
        return np.reshape(x, np.shape(reference))

    def infer_shape(self, x, reference):
        return [reference]

    def gradient(self, grads, wrt):
        x, _ = self.inputs
        return [reshape_like(grads[0], x) if wrt[0] else None, None]


class ExpandDims(Op):
    def __init__(self, axis: int, name=None):
        super().__init__(name=name)
        self.axis = axis

    def compute(self, a):
        return np.expand_dims(a, self.axis)

    def gradient(self, grads, wrt):
        return [reshape_like(grads[0], self.inputs[0])]


class GetItem(Op):
    """numpy indexing with a key fixed at graph-construction time."""

    def __init__(self, key, name=None):
        super().__init__(name=name)
        self.key = key

    def compute(self, a):
        return np.asarray(a)[self.key]

    def gradient(self, grads, wrt):
        return [scatter_like(grads[0], self.inputs[0], self.key)]


class ScatterLike(Op):
    """Adjoint of GetItem: zeros shaped like the reference, with the incoming
    values added at ``key`` (repeated indices accumulate)."""

    def __init__(self, key, name=None):
        super().__init__(name=name)
        self.key = key

    def compute(self, g, reference):
        out = np.zeros(np.shape(reference), dtype=np.result_type(g, reference))
        if _is_basic_index(self.key):
            out[self.key] = g
        else:
            np.add.at(out, self.key, g)
        return out

    def infer_shape(self, g, reference):
        return [reference]

    def gradient(self, grads, wrt):
        return [getitem(grads[0], self.key) if wrt[0] else None, None]


class Gather(Op):
    """Rows of ``a`` picked by an index array computed at run time."""

    def compute(self, a, indices):
        return np.asarray(a)[np.asarray(indices, dtype=np.intp)]

    def gradient(self, grads, wrt):
        a, indices = self.inputs
        return [scatter_add(grads[0], indices, a) if wrt[0] else None, None]


class ScatterAdd(Op):
    """Adjoint of Gather."""

    def compute(self, g, indices, reference):
        out = np.zeros(np.shape(reference), dtype=np.result_type(g, reference))
        np.add.at(out, np.asarray(indices, dtype=np.intp), g)
        return out

    def infer_shape(self, g, indices, reference):
        return [reference]

    def gradient(self, grads, wrt):
        _, indices, _ = self.inputs
        return [gather(grads[0], indices) if wrt[0] else None, None, None]


class Concatenate(Op):
    """Op for concatenating arrays.

    Parameters
    ----------
    axis
        The axis of concatenation (default is -1, the last axis).

    name
        Name of the op (optional). If no name is passed, a name will be
        automatically generated.
    """

    def __init__(self, axis: int = -1, name=None):
        super().__init__(name=name)
        self.axis = axis

    def compute(self, *arrays):
        return np.concatenate(arrays, axis=self.axis)

    def gradient(self, grads, wrt):
        pieces = listify(SplitLike(self.axis, len(self.inputs))(grads[0], *self.inputs))
        return [piece if flag else None for piece, flag in zip(pieces, wrt)]


class SplitLike(Op):
    """Split an array into pieces sized like the reference arrays along ``axis``.
    Adjoint of Concatenate."""

    def __init__(self, axis: int, n_pieces: int, name=None):
        super().__init__(name=name, n_outputs=n_pieces)
        self.axis = axis

    def compute(self, x, *references):
        sizes = [np.shape(r)[self.axis] for r in references]
        pieces = np.split(x, np.cumsum(sizes)[:-1], axis=self.axis)
        return pieces[0] if self.n_outputs == 1 else pieces

    def gradient(self, grads, wrt):
        references = self.inputs[1:]
        filled = [
            grad if grad is not None else zeros_like_tensor(reference)
            for grad, reference in zip(grads, references)
        ]
        return [concatenate(filled, axis=self.axis)] + [None] * len(references)


class Split(Op):
    """Op for splitting arrays.

    Parameters
    ----------
    indices_or_sections
        If an integer (N) is passed, the array will be divided into N equal arrays along
        axis. If an 1-D array of sorted integers is passed, the entries indicate where
        along axis the array is split.

    axis
        The axis on where to split the array (default is -1, the last axis).

    name
        Name of the op (optional). If no name is passed, a name will be
        automatically generated.
    """

    def __init__(self, indices_or_sections, axis: int = -1, name=None):
        try:
            n_outputs = len(indices_or_sections) + 1
        except TypeError:
            n_outputs = indices_or_sections
        super().__init__(name=name, n_outputs=n_outputs)
        self.indices_or_sections = indices_or_sections
        self.axis = axis

    def compute(self, x):
        return np.split(x, self.indices_or_sections, axis=self.axis)

    def gradient(self, grads, wrt):
        filled = [
            grad if grad is not None else zeros_like_tensor(output)
            for grad, output in zip(grads, self.outputs)
        ]
        return [concatenate(filled, axis=self.axis)]


def zeros_like_tensor(x):
    from surfvote.ops.math import zeros_like

    return zeros_like(x)


def reshape(a, shape: Sequence[int]):
    return Reshape(shape)(a)


def reshape_like(x, reference):
    return ReshapeLike()(x, reference)


def expand_dims(a, axis: int):
    return ExpandDims(axis)(a)


def getitem(a, key):
    return GetItem(key)(a)


def scatter_like(g, reference, key):
    return ScatterLike(key)(g, reference)


def gather(a, indices):
    return Gather()(a, indices)


def scatter_add(g, indices, reference):
    return ScatterAdd()(g, indices, reference)


def concatenate(arrays: List, axis: int = -1):
    return Concatenate(axis)(*arrays)


def stack(arrays: List, axis: int = -1):
    return concatenate([expand_dims(a, axis) for a in arrays], axis=axis)


def split(x, indices_or_sections, axis: int = -1):
    return listify(Split(indices_or_sections, axis)(x))
