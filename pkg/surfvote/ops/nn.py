"""Building blocks for coordinate networks: positional encoding, MLP parameter
sets and their symbolic application."""
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from surfvote._core.op import Input, as_tensor
from surfvote._core.tensor import Tensor
from surfvote._core.utils import make_name, make_repr
from surfvote.exceptions import NonFiniteError
from surfvote.ops.math import cos, matmul, sigmoid, sin, softplus
from surfvote.ops.shape import concatenate, getitem

__all__ = [
    "PositionalEncodingConfig",
    "positional_encode",
    "MlpParameters",
    "BoundParameters",
    "apply_mlp",
]

ACTIVATIONS = ("softplus", "sigmoid", "linear")


@dataclass
class PositionalEncodingConfig:
    """Frequency encoding of coordinates.

    Attributes
    ----------
    num_frequencies
        Number of octaves L (>= 0).

    include_input
        Whether the raw coordinates lead the encoding.
    """

    num_frequencies: int = 6
    include_input: bool = True

    def __post_init__(self):
        if self.num_frequencies < 0:
            raise ValueError("num_frequencies must be >= 0.")

    def encoded_dim(self, input_dim: int) -> int:
        raw = input_dim if self.include_input else 0
        return raw + 2 * self.num_frequencies * input_dim


def positional_encode(x, config: PositionalEncodingConfig) -> Tensor:
    """Encode ``x`` (shape (n, d)) as
    ``[x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)]``
    along the last axis, the raw ``x`` being present only if ``include_input``.
    """
    x = as_tensor(x)
    parts = [x] if config.include_input else []
    for k in range(config.num_frequencies):
        scaled = x * float(2.0 ** k * np.pi)
        parts.append(sin(scaled))
        parts.append(cos(scaled))
    if not parts:
        return getitem(x, (Ellipsis, slice(0, 0)))
    if len(parts) == 1:
        return parts[0]
    return concatenate(parts, axis=-1)


@dataclass
class MlpParameters:
    """Weights and biases of a fully connected network.

    ``weights[i]`` has shape (in, out) and multiplies row vectors; ``biases[i]``
    has shape (out,). ``activations[i]`` is applied after layer ``i`` and is one
    of ``softplus``, ``sigmoid`` or ``linear``.
    """

    weights: List[np.ndarray]
    biases: List[np.ndarray]
    activations: List[str]
    softplus_beta: float = 100.0

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError(
                "weights, biases and activations must have the same length."
            )
        if not self.weights:
            raise ValueError("An MLP needs at least one layer.")
        for i, (weight, bias, activation) in enumerate(
            zip(self.weights, self.biases, self.activations)
        ):
            if weight.ndim != 2 or bias.shape != (weight.shape[1],):
                raise ValueError(
                    "Layer {} has weight {} and bias {}.".format(
                        i, weight.shape, bias.shape
                    )
                )
            if i > 0 and self.weights[i - 1].shape[1] != weight.shape[0]:
                raise ValueError(
                    "Layer {} outputs {} columns but layer {} expects {}.".format(
                        i - 1, self.weights[i - 1].shape[1], i, weight.shape[0]
                    )
                )
            if activation not in ACTIVATIONS:
                raise ValueError("Unknown activation {}.".format(activation))
            if not (np.all(np.isfinite(weight)) and np.all(np.isfinite(bias))):
                raise NonFiniteError("Layer {} has non-finite entries.".format(i))

    @property
    def input_width(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_width(self) -> int:
        return self.weights[-1].shape[1]

    @property
    def widths(self) -> List[int]:
        return [self.input_width] + [w.shape[1] for w in self.weights]

    @classmethod
    def random(
        cls,
        widths: Sequence[int],
        activations: Sequence[str],
        rng: np.random.Generator,
        dtype=np.float64,
        softplus_beta: float = 100.0,
    ) -> "MlpParameters":
        """He-normal weights and zero biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            std = np.sqrt(2.0 / fan_in)
            weights.append(rng.normal(0.0, std, size=(fan_in, fan_out)).astype(dtype))
            biases.append(np.zeros(fan_out, dtype=dtype))
        return cls(weights, biases, list(activations), softplus_beta)

    def items(self, prefix: str) -> Iterator[Tuple[str, np.ndarray]]:
        for i, (weight, bias) in enumerate(zip(self.weights, self.biases)):
            yield make_name(prefix, "w{}".format(i)), weight
            yield make_name(prefix, "b{}".format(i)), bias

    def to_dict(self, prefix: str) -> Dict[str, np.ndarray]:
        return OrderedDict(self.items(prefix))

    def update_from(self, arrays: Mapping[str, np.ndarray], prefix: str) -> None:
        """Replace the arrays from a name -> array mapping (as built by to_dict)."""
        for i in range(len(self.weights)):
            self.weights[i] = arrays[make_name(prefix, "w{}".format(i))]
            self.biases[i] = arrays[make_name(prefix, "b{}".format(i))]


class BoundParameters(Mapping):
    """A set of named parameter arrays bound to fresh graph inputs.

    Graphs are built per batch, so parameters enter every graph as inputs that
    are fed with the current arrays. Map names to input tensors; ``feed()``
    gives the values to run the graph with, and ``named(grads)`` maps gradients
    keyed by tensors back to parameter names.
    """

    def __init__(self, arrays: Mapping[str, np.ndarray]):
        self.arrays = arrays
        self._tensors = OrderedDict(
            (name, Input(shape=np.shape(value), name=name))
            for name, value in arrays.items()
        )  # type: Dict[str, Tensor]

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __iter__(self):
        return iter(self._tensors)

    def __len__(self):
        return len(self._tensors)

    def __repr__(self):
        return make_repr(self, ["names"])

    @property
    def names(self) -> List[str]:
        return list(self._tensors)

    @property
    def tensors(self) -> List[Tensor]:
        return list(self._tensors.values())

    def feed(self) -> Dict[Tensor, np.ndarray]:
        return {tensor: self.arrays[name] for name, tensor in self._tensors.items()}

    def named(self, grads: Mapping[Tensor, np.ndarray]) -> Dict[str, np.ndarray]:
        return OrderedDict(
            (name, grads[tensor]) for name, tensor in self._tensors.items()
        )


def _activate(h, activation: str, beta: float):
    if activation == "softplus":
        return softplus(h, beta)
    if activation == "sigmoid":
        return sigmoid(h)
    return h


def apply_mlp(
    x,
    params: MlpParameters,
    bound: Optional[Mapping[str, Tensor]] = None,
    prefix: str = "mlp",
) -> Tensor:
    """Apply the network to ``x`` (shape (n, input_width)).

    If ``bound`` is given, layer arrays are taken from its tensors (named as in
    ``params.to_dict(prefix)``) so the graph can be differentiated with respect
    to them; otherwise they enter the graph as constants.
    """
    h = x
    for i, activation in enumerate(params.activations):
        if bound is not None:
            weight = bound[make_name(prefix, "w{}".format(i))]
            bias = bound[make_name(prefix, "b{}".format(i))]
        else:
            weight, bias = params.weights[i], params.biases[i]
        h = _activate(matmul(h, weight) + bias, activation, params.softplus_beta)
    return h
