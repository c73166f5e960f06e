"""Elementwise math, broadcasting helpers and matrix products."""
from typing import Tuple

import numpy as np

from surfvote._core.op import Op

__all__ = [
    "add",
    "subtract",
    "multiply",
    "divide",
    "negative",
    "power",
    "square",
    "sqrt",
    "exp",
    "log",
    "abs",
    "sign",
    "sin",
    "cos",
    "sigmoid",
    "softplus",
    "maximum",
    "minimum",
    "greater",
    "greater_equal",
    "less",
    "less_equal",
    "stop_gradient",
    "zeros_like",
    "ones_like",
    "sum_like",
    "broadcast_like",
    "matmul",
    "transpose",
]


def _broadcast(*shapes: Tuple[int, ...]):
    return [np.broadcast_shapes(*shapes)]


def _sum_to_shape(x, shape):
    x = np.asarray(x)
    if x.shape == tuple(shape):
        return x
    n_extra = x.ndim - len(shape)
    if n_extra > 0:
        x = x.sum(axis=tuple(range(n_extra)))
    axes = tuple(
        i for i, size in enumerate(shape) if size == 1 and x.shape[i] != 1
    )
    if axes:
        x = x.sum(axis=axes, keepdims=True)
    return x


def _stable_sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class _Elementwise(Op):
    def infer_shape(self, *shapes):
        return _broadcast(*shapes)


class Add(_Elementwise):
    def compute(self, a, b):
        return a + b

    def gradient(self, grads, wrt):
        (g,) = grads
        a, b = self.inputs
        return [
            sum_like(g, a) if wrt[0] else None,
            sum_like(g, b) if wrt[1] else None,
        ]


class Subtract(_Elementwise):
    def compute(self, a, b):
        return a - b

    def gradient(self, grads, wrt):
        (g,) = grads
        a, b = self.inputs
        return [
            sum_like(g, a) if wrt[0] else None,
            sum_like(negative(g), b) if wrt[1] else None,
        ]


class Multiply(_Elementwise):
    def compute(self, a, b):
        return a * b

    def gradient(self, grads, wrt):
        (g,) = grads
        a, b = self.inputs
        return [
            sum_like(g * b, a) if wrt[0] else None,
            sum_like(g * a, b) if wrt[1] else None,
        ]


class Divide(_Elementwise):
    def compute(self, a, b):
        return a / b

    def gradient(self, grads, wrt):
        (g,) = grads
        a, b = self.inputs
        (out,) = self.outputs
        return [
            sum_like(g / b, a) if wrt[0] else None,
            sum_like(negative(g * out) / b, b) if wrt[1] else None,
        ]


class Negative(_Elementwise):
    def compute(self, a):
        return -a

    def gradient(self, grads, wrt):
        return [negative(grads[0])]


class Power(_Elementwise):
    """Raise to a fixed (non-differentiable) exponent."""

    def __init__(self, exponent: float, name=None):
        super().__init__(name=name)
        self.exponent = exponent

    def compute(self, a):
        return a ** self.exponent

    def gradient(self, grads, wrt):
        (g,) = grads
        (a,) = self.inputs
        p = self.exponent
        if p == 1:
            return [g]
        if p == 2:
            return [g * (2.0 * a)]
        return [g * (p * power(a, p - 1))]


class Sqrt(_Elementwise):
    def compute(self, a):
        return np.sqrt(a)

    def gradient(self, grads, wrt):
        return [grads[0] / (2.0 * self.outputs[0])]


class Exp(_Elementwise):
    def compute(self, a):
        return np.exp(a)

    def gradient(self, grads, wrt):
        return [grads[0] * self.outputs[0]]


class Log(_Elementwise):
    def compute(self, a):
        return np.log(a)

    def gradient(self, grads, wrt):
        return [grads[0] / self.inputs[0]]


class Abs(_Elementwise):
    def compute(self, a):
        return np.abs(a)

    def gradient(self, grads, wrt):
        return [grads[0] * sign(self.inputs[0])]


class Sign(_Elementwise):
    differentiable = False

    def compute(self, a):
        return np.sign(a)


class Sin(_Elementwise):
    def compute(self, a):
        return np.sin(a)

    def gradient(self, grads, wrt):
        return [grads[0] * cos(self.inputs[0])]


class Cos(_Elementwise):
    def compute(self, a):
        return np.cos(a)

    def gradient(self, grads, wrt):
        return [negative(grads[0] * sin(self.inputs[0]))]


class Sigmoid(_Elementwise):
    def compute(self, a):
        return _stable_sigmoid(a)

    def gradient(self, grads, wrt):
        out = self.outputs[0]
        return [grads[0] * (out * (1.0 - out))]


class Softplus(_Elementwise):
    """Smooth ReLU ``log(1 + exp(beta * x)) / beta``. Its derivative is
    ``sigmoid(beta * x)``, so the op is C-infinity and can be differentiated
    as many times as needed."""

    def __init__(self, beta: float = 1.0, name=None):
        super().__init__(name=name)
        self.beta = beta

    def compute(self, a):
        return np.logaddexp(0.0, self.beta * a) / self.beta

    def gradient(self, grads, wrt):
        return [grads[0] * sigmoid(self.beta * self.inputs[0])]


class Compare(_Elementwise):
    """Elementwise comparison returning a 0/1 mask of the operands' dtype."""

    differentiable = False

    _functions = {
        "greater": np.greater,
        "greater_equal": np.greater_equal,
        "less": np.less,
        "less_equal": np.less_equal,
    }

    def __init__(self, kind: str, name=None):
        if kind not in self._functions:
            raise ValueError("Unknown comparison {}.".format(kind))
        super().__init__(name=name)
        self.kind = kind

    def compute(self, a, b):
        dtype = np.result_type(a, b)
        if not np.issubdtype(dtype, np.floating):
            dtype = np.float64
        return self._functions[self.kind](a, b).astype(dtype)


class Maximum(_Elementwise):
    def compute(self, a, b):
        return np.maximum(a, b)

    def gradient(self, grads, wrt):
        (g,) = grads
        a, b = self.inputs
        mask = greater_equal(a, b)
        return [
            sum_like(g * mask, a) if wrt[0] else None,
            sum_like(g * (1.0 - mask), b) if wrt[1] else None,
        ]


class Minimum(_Elementwise):
    def compute(self, a, b):
        return np.minimum(a, b)

    def gradient(self, grads, wrt):
        (g,) = grads
        a, b = self.inputs
        mask = less_equal(a, b)
        return [
            sum_like(g * mask, a) if wrt[0] else None,
            sum_like(g * (1.0 - mask), b) if wrt[1] else None,
        ]


class StopGradient(_Elementwise):
    """Identity in the forward pass, blocks gradients in the backward pass."""

    differentiable = False

    def compute(self, a):
        return a


class ZerosLike(_Elementwise):
    differentiable = False

    def compute(self, a):
        return np.zeros_like(a)


class OnesLike(_Elementwise):
    differentiable = False

    def compute(self, a):
        return np.ones_like(a)


class SumLike(Op):
    """Sum a broadcast array back down to the shape of a reference array.

    This is the adjoint of broadcasting and is what elementwise ops use in
    their gradients. The reference only provides the shape.
    """

    def compute(self, x, reference):
        return _sum_to_shape(x, np.shape(reference))

    def infer_shape(self, x, reference):
        return [reference]

    def gradient(self, grads, wrt):
        x, _ = self.inputs
        return [broadcast_like(grads[0], x) if wrt[0] else None, None]


class BroadcastLike(Op):
    """Broadcast an array to the shape of a reference array."""

    def compute(self, x, reference):
        return np.broadcast_to(x, np.shape(reference))

    def infer_shape(self, x, reference):
        np.broadcast_shapes(x, reference)
        return [reference]

    def gradient(self, grads, wrt):
        x, _ = self.inputs
        return [sum_like(grads[0], x) if wrt[0] else None, None]


class MatMul(Op):
    def compute(self, a, b):
        return np.matmul(a, b)

    def infer_shape(self, a, b):
        if len(a) != 2 or len(b) != 2 or a[1] != b[0]:
            raise ValueError(
                "matmul expects 2-D operands with matching inner dimension. "
                "Got {} and {}.".format(a, b)
            )
        return [(a[0], b[1])]

    def gradient(self, grads, wrt):
        (g,) = grads
        a, b = self.inputs
        return [
            matmul(g, transpose(b)) if wrt[0] else None,
            matmul(transpose(a), g) if wrt[1] else None,
        ]


class Transpose(Op):
    """Swap the last two axes."""

    def compute(self, a):
        return np.swapaxes(a, -1, -2)

    def gradient(self, grads, wrt):
        return [transpose(grads[0])]


def add(a, b):
    return Add()(a, b)


def subtract(a, b):
    return Subtract()(a, b)


def multiply(a, b):
    return Multiply()(a, b)


def divide(a, b):
    return Divide()(a, b)


def negative(a):
    return Negative()(a)


def power(a, exponent: float):
    return Power(exponent)(a)


def square(a):
    return Power(2)(a)


def sqrt(a):
    return Sqrt()(a)


def exp(a):
    return Exp()(a)


def log(a):
    return Log()(a)


def abs(a):
    return Abs()(a)


def sign(a):
    return Sign()(a)


def sin(a):
    return Sin()(a)


def cos(a):
    return Cos()(a)


def sigmoid(a):
    return Sigmoid()(a)


def softplus(a, beta: float = 1.0):
    return Softplus(beta)(a)


def maximum(a, b):
    return Maximum()(a, b)


def minimum(a, b):
    return Minimum()(a, b)


def greater(a, b):
    return Compare("greater")(a, b)


def greater_equal(a, b):
    return Compare("greater_equal")(a, b)


def less(a, b):
    return Compare("less")(a, b)


def less_equal(a, b):
    return Compare("less_equal")(a, b)


def stop_gradient(a):
    return StopGradient()(a)


def zeros_like(a):
    return ZerosLike()(a)


def ones_like(a):
    return OnesLike()(a)


def sum_like(x, reference):
    return SumLike()(x, reference)


def broadcast_like(x, reference):
    return BroadcastLike()(x, reference)


def matmul(a, b):
    return MatMul()(a, b)


def transpose(a):
    return Transpose()(a)
