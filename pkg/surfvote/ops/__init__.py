"""Differentiable op library. Functions build ops and return tensors."""
from surfvote.ops.math import (
    abs,
    add,
    broadcast_like,
    cos,
    divide,
    exp,
    greater,
    greater_equal,
    less,
    less_equal,
    log,
    matmul,
    maximum,
    minimum,
    multiply,
    negative,
    ones_like,
    power,
    sigmoid,
    sign,
    sin,
    softplus,
    sqrt,
    square,
    stop_gradient,
    subtract,
    sum_like,
    transpose,
    zeros_like,
)
from surfvote.ops.reduce import exclusive_cumprod, norm, reduce_mean, reduce_sum
from surfvote.ops.shape import (
    concatenate,
    expand_dims,
    gather,
    getitem,
    reshape,
    reshape_like,
    scatter_add,
    scatter_like,
    split,
    stack,
)
from surfvote.ops.spatial import lookup, nearest_index, nearest_neighbors
from surfvote.ops.nn import (
    BoundParameters,
    MlpParameters,
    PositionalEncodingConfig,
    apply_mlp,
    positional_encode,
)
