"""The two implicit functions: the signed distance field f(x), which also emits a
feature vector, and the color field g(x, d, n, feature). Plus the field-level
regularizers (eikonal and curvature).

Fields are callables that build graph fragments: ``field(x)`` returns the
tensors ``(f, feature)`` for points ``x`` of shape (n, 3). Called directly, the
parameters enter as constants; ``field.bind(bound)`` returns a callable that
reads them from graph inputs instead, so losses can be differentiated with
respect to them. Any callable with the same signature (e.g. an analytic SDF)
can stand in for an SdfField.
"""
import logging
from typing import Callable, Dict, Mapping, Optional, Tuple

import numpy as np

from surfvote import ops
from surfvote._core.graph import eager_on_arrays, evaluate, gradients
from surfvote._core.op import Constant, as_tensor
from surfvote._core.tensor import Tensor
from surfvote._core.utils import as_rng, check_finite, check_points
from surfvote.config import ColorFieldConfig, SdfFieldConfig
from surfvote.ops.nn import (
    MlpParameters,
    PositionalEncodingConfig,
    apply_mlp,
    positional_encode,
)

logger = logging.getLogger(__name__)

SdfNetwork = Callable[[Tensor], Tuple[Tensor, Optional[Tensor]]]


class SdfField:
    """Coordinate MLP housing the signed distance f(x) (positive outside) and a
    feature vector handed to the color field.

    Parameters
    ----------
    config
        Layer sizes, encoding and initialization options.

    params
        Existing parameters (optional). If not given, they are initialized,
        geometrically when ``config.geometric_init`` is set so that initially
        ``f(x) ~ |x| - init_radius``.

    rng
        Seed or generator used for initialization.

    dtype
        Floating point type of the parameters.
    """

    prefix = "sdf"

    def __init__(
        self,
        config: Optional[SdfFieldConfig] = None,
        params: Optional[MlpParameters] = None,
        rng=None,
        dtype=np.float64,
    ):
        self.config = config if config is not None else SdfFieldConfig()
        self.encoding = PositionalEncodingConfig(
            self.config.num_frequencies, self.config.include_input
        )
        if params is None:
            params = self._initialize(as_rng(rng), np.dtype(dtype))
        elif params.input_width != self.encoding.encoded_dim(3):
            raise ValueError(
                "Parameters expect {} input channels, the encoding yields {}.".format(
                    params.input_width, self.encoding.encoded_dim(3)
                )
            )
        self.params = params

    @property
    def feature_width(self) -> int:
        return self.params.output_width - 1

    @property
    def dtype(self) -> np.dtype:
        return self.params.weights[0].dtype

    def _initialize(self, rng: np.random.Generator, dtype) -> MlpParameters:
        cfg = self.config
        widths = (
            [self.encoding.encoded_dim(3)]
            + [cfg.hidden_width] * cfg.n_layers
            + [1 + cfg.feature_width]
        )
        activations = ["softplus"] * cfg.n_layers + ["linear"]
        if not cfg.geometric_init:
            return MlpParameters.random(
                widths, activations, rng, dtype, cfg.softplus_beta
            )

        weights, biases = [], []
        n_linear = len(widths) - 1
        for layer, (fan_in, fan_out) in enumerate(zip(widths[:-1], widths[1:])):
            if layer == n_linear - 1:
                weight = rng.normal(
                    np.sqrt(np.pi) / np.sqrt(fan_in), 1e-4, size=(fan_in, fan_out)
                )
                bias = np.full(fan_out, -cfg.init_radius)
            elif layer == 0 and self.encoding.num_frequencies > 0:
                # only the raw coordinates feed the first layer at start
                weight = np.zeros((fan_in, fan_out))
                std = np.sqrt(2) / np.sqrt(fan_out)
                weight[:3] = rng.normal(0.0, std, (3, fan_out))
                bias = np.zeros(fan_out)
            else:
                std = np.sqrt(2) / np.sqrt(fan_out)
                weight = rng.normal(0.0, std, (fan_in, fan_out))
                bias = np.zeros(fan_out)
            weights.append(weight.astype(dtype))
            biases.append(bias.astype(dtype))
        return MlpParameters(weights, biases, activations, cfg.softplus_beta)

    def parameters(self) -> Dict[str, np.ndarray]:
        return self.params.to_dict(self.prefix)

    def load_parameters(self, arrays: Mapping[str, np.ndarray]) -> None:
        self.params.update_from(arrays, self.prefix)

    def bind(self, bound: Mapping[str, Tensor]) -> SdfNetwork:
        return lambda x: self._build(x, bound)

    def __call__(self, x) -> Tuple[Tensor, Tensor]:
        return self._build(x, None)

    def _build(self, x, bound) -> Tuple[Tensor, Tensor]:
        encoded = positional_encode(x, self.encoding)
        out = apply_mlp(encoded, self.params, bound, self.prefix)
        sdf = ops.getitem(out, (slice(None), slice(0, 1)))
        feature = ops.getitem(out, (slice(None), slice(1, None)))
        return sdf, feature


class ColorField:
    """Coordinate MLP for radiance, conditioned on position, view direction,
    surface normal and the SDF feature vector. The output goes through a sigmoid
    so colors stay within [0, 1].
    """

    prefix = "color"

    def __init__(
        self,
        config: Optional[ColorFieldConfig] = None,
        feature_width: int = 64,
        params: Optional[MlpParameters] = None,
        rng=None,
        dtype=np.float64,
    ):
        self.config = config if config is not None else ColorFieldConfig()
        self.view_encoding = PositionalEncodingConfig(
            self.config.view_frequencies, include_input=True
        )
        self.feature_width = feature_width
        if params is None:
            widths = (
                [self.input_width]
                + [self.config.hidden_width] * self.config.n_layers
                + [3]
            )
            activations = ["softplus"] * self.config.n_layers + ["sigmoid"]
            params = MlpParameters.random(
                widths, activations, as_rng(rng), dtype, self.config.softplus_beta
            )
        self.params = params

    @property
    def input_width(self) -> int:
        return 3 + self.view_encoding.encoded_dim(3) + 3 + self.feature_width

    @property
    def dtype(self) -> np.dtype:
        return self.params.weights[0].dtype

    def parameters(self) -> Dict[str, np.ndarray]:
        return self.params.to_dict(self.prefix)

    def load_parameters(self, arrays: Mapping[str, np.ndarray]) -> None:
        self.params.update_from(arrays, self.prefix)

    def bind(self, bound: Mapping[str, Tensor]):
        return lambda x, d, normal, feature: self._build(x, d, normal, feature, bound)

    def __call__(self, x, d, normal, feature) -> Tensor:
        return self._build(x, d, normal, feature, None)

    def _build(self, x, d, normal, feature, bound) -> Tensor:
        encoded_d = positional_encode(d, self.view_encoding)
        inputs = ops.concatenate(
            [as_tensor(x), encoded_d, as_tensor(normal), as_tensor(feature)]
        )
        return apply_mlp(inputs, self.params, bound, self.prefix)


def _check_input_points(points) -> np.ndarray:
    points = check_points("points", points)
    check_finite("points", points)
    return points


def field_dtype(field) -> np.dtype:
    """Floating point type the field computes in: that of its parameters, or
    float64 for plain callables such as analytic SDFs."""
    return np.dtype(getattr(field, "dtype", np.float64))


def sdf_eval(
    field: SdfNetwork, points, chunk_size: int = 65536
) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """Evaluate the SDF (and feature vector) at points of shape (n, 3).

    Returns the (n,) signed distances and the (n, F) features (None for fields
    without features). Evaluation is batched in chunks of ``chunk_size`` points.

    Raises
    ------
    NonFiniteError
        If any coordinate is not finite.
    """
    points = _check_input_points(points).astype(field_dtype(field), copy=False)
    values, features = [], []
    for start in range(0, max(len(points), 1), chunk_size):
        chunk = points[start : start + chunk_size]
        sdf, feature = field(Constant(chunk))
        if feature is None:
            values.append(evaluate(sdf))
        else:
            sdf_value, feature_value = evaluate([sdf, feature])
            values.append(sdf_value)
            features.append(feature_value)
    f = np.concatenate([np.reshape(v, (-1,)) for v in values])
    return f, (np.concatenate(features) if features else None)


def gradient_tensor(
    field: SdfNetwork, x
) -> Tuple[Tensor, Tensor, Optional[Tensor], Tensor]:
    """Build f, its x-gradient and the feature at the points tensor ``x``.

    Returns ``(x, f, feature, grad)`` with ``grad`` of shape (n, 3). The gradient is
    symbolic, so it can itself be differentiated (eikonal loss, pulling, normals).
    """
    x = as_tensor(x)
    sdf, feature = field(x)
    (grad,) = gradients(ops.reduce_sum(sdf), [x])
    if grad is None:
        grad = ops.zeros_like(x)
    return x, sdf, feature, grad


def sdf_gradient(field: SdfNetwork, points, chunk_size: int = 65536) -> np.ndarray:
    """Exact reverse-mode gradient of f with respect to the points, shape (n, 3)."""
    points = _check_input_points(points).astype(field_dtype(field), copy=False)
    grads = []
    for start in range(0, max(len(points), 1), chunk_size):
        chunk = Constant(points[start : start + chunk_size])
        _, _, _, grad = gradient_tensor(field, chunk)
        grads.append(np.asarray(evaluate(grad)))
    return np.concatenate(grads)


@eager_on_arrays
def color_eval(field: ColorField, x, d, normal, feature):
    """Colors in [0, 1] for positions, unit view directions, normals and features."""
    return field(x, d, normal, feature)


@eager_on_arrays
def eikonal_loss(grads):
    """Mean of (|grad f| - 1)^2 over the (n, 3) gradients.

    Raises
    ------
    ValueError
        If no gradient is given.
    """
    if not isinstance(grads, Tensor) and np.shape(grads)[0] == 0:
        raise ValueError("eikonal_loss needs at least one gradient.")
    lengths = ops.norm(grads, axis=-1, keepdims=False, eps=1e-20)
    return ops.reduce_mean(ops.square(lengths - 1.0))


@eager_on_arrays
def curvature_loss(field: SdfNetwork, points, fd_step: float):
    """Mean absolute Laplacian of f, the Laplacian being the central finite
    difference of the analytic gradient along each axis:
    ``sum_a (df/dx_a(x + h e_a) - df/dx_a(x - h e_a)) / 2h``.

    Pass ``points`` as a tensor when ``field`` reads bound parameters, so the
    loss stays symbolic instead of being evaluated.
    """
    if fd_step <= 0:
        raise ValueError("fd_step must be > 0.")
    x = as_tensor(points)
    shifted = []
    for sign in (1.0, -1.0):
        for axis in range(3):
            offset = np.zeros(3)
            offset[axis] = sign * fd_step
            shifted.append(x + offset)
    _, _, _, grad = gradient_tensor(field, ops.concatenate(shifted, axis=0))
    blocks = ops.split(grad, 6, axis=0)
    laplacian = None
    for axis in range(3):
        term = ops.getitem(blocks[axis], (slice(None), axis)) - ops.getitem(
            blocks[axis + 3], (slice(None), axis)
        )
        laplacian = term if laplacian is None else laplacian + term
    laplacian = laplacian / (2.0 * fd_step)
    return ops.reduce_mean(ops.abs(laplacian))
