import threading
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from surfvote._core.tensor import Tensor
from surfvote._core.utils import make_name, make_repr, unlistify
from surfvote.exceptions import ShapeMismatchError

Shape = Tuple[int, ...]
Grads = List[Optional[Tensor]]


class Op:
    """Base class of the nodes of a computation graph.

    An op is called on tensors (or arrays, which are wrapped as constants) and
    returns the tensors of its outputs. Subclasses implement

    - ``compute(*arrays)``: the numpy forward computation. It returns an array,
      or a tuple of arrays when the op has several outputs.
    - ``gradient(grads, wrt)``: the vector-Jacobian product, built symbolically
      from other ops so that it can be differentiated again. ``grads`` holds one
      tensor (or None, meaning zero) per output; ``wrt`` flags the inputs whose
      gradient is needed. It returns one tensor (or None) per input.
    - ``infer_shape(*shapes)`` (optional): the output shapes declared for the
      given input shapes. Raising ``ValueError`` marks incompatible inputs.

    Ops are single-use: an instance is wired into a graph by calling it once.

    Parameters
    ----------
    name
        Name of the op (optional). If no name is passed, a name will be
        automatically generated.

    n_outputs
        Number of outputs the op produces.
    """

    # used to keep track of number of instances and make unique names
    _names = dict()  # type: Dict[str, int]
    # graphs may be built from several threads (see meshing)
    _names_lock = threading.Lock()

    # ops without a gradient (masks, indices) set this to False
    differentiable = True

    def __init__(self, name: Optional[str] = None, n_outputs: int = 1):
        # Use name as is if it was specified by the user, to avoid the user a surprise
        self._name = name if name is not None else self._generate_unique_name()
        self._n_outputs = n_outputs
        self._inputs = None  # type: Optional[List[Tensor]]
        self._outputs = None  # type: Optional[List[Tensor]]

    def _generate_unique_name(self) -> str:
        name = self.__class__.__name__
        with self._names_lock:
            n_instances = self._names.get(name, 0)
            self._names[name] = n_instances + 1
        return make_name(name, n_instances, sep="_")

    @classmethod
    def _clear_names(cls):
        # For testing purposes only.
        cls._names.clear()

    @property
    def name(self) -> str:
        return self._name

    @property
    def n_outputs(self) -> int:
        return self._n_outputs

    @property
    def inputs(self) -> List[Tensor]:
        if self._inputs is None:
            raise AttributeError("{} has not been called yet.".format(self.name))
        return self._inputs

    @property
    def outputs(self) -> List[Tensor]:
        if self._outputs is None:
            raise AttributeError("{} has not been called yet.".format(self.name))
        return self._outputs

    def __call__(self, *inputs) -> Union[Tensor, List[Tensor]]:
        if self._inputs is not None:
            raise RuntimeError(
                "{} has already been called. Ops are single-use, "
                "create a new instance instead.".format(self.name)
            )
        self._inputs = [as_tensor(input) for input in inputs]
        if self._n_outputs == 1:
            self._outputs = [Tensor(self, 0, self._name)]
        else:
            self._outputs = [
                Tensor(self, i, make_name(self._name, i))
                for i in range(self._n_outputs)
            ]
        return unlistify(list(self._outputs))

    def compute(self, *values):
        raise NotImplementedError

    def gradient(self, grads: Grads, wrt: Sequence[bool]) -> Grads:
        if not self.differentiable:
            return [None] * len(self.inputs)
        raise NotImplementedError(
            "{} does not define a gradient.".format(self.__class__.__name__)
        )

    def infer_shape(self, *shapes: Shape) -> Optional[List[Shape]]:
        return None

    def __repr__(self):
        return make_repr(self, ["name"])


class InputOp(Op):
    """Placeholder op whose value is fed when the graph is executed.

    Parameters
    ----------
    shape
        Declared shape. ``None`` entries are wildcards; a ``None`` shape accepts
        anything.

    dtype
        If given, fed arrays are cast to it.

    name
        Name of the input (optional).
    """

    def __init__(
        self,
        shape: Optional[Sequence[Optional[int]]] = None,
        dtype=None,
        name: Optional[str] = None,
    ):
        super().__init__(name=name)
        self.shape = None if shape is None else tuple(shape)
        self.dtype = dtype

    def compute(self):
        raise RuntimeError("Input {} was not fed.".format(self.name))

    def gradient(self, grads, wrt):
        return []

    def check(self, value) -> np.ndarray:
        """Cast the fed value and verify it against the declared shape."""
        value = np.asarray(value, dtype=self.dtype)
        if self.shape is None:
            return value
        if value.ndim != len(self.shape) or any(
            expected is not None and expected != got
            for expected, got in zip(self.shape, value.shape)
        ):
            raise ShapeMismatchError(
                self.name,
                "expected shape {}, got {}.".format(self.shape, value.shape),
            )
        return value

    def __repr__(self):
        return make_repr(self, ["name", "shape", "dtype"])


class ConstantOp(Op):
    """Op holding a fixed value. Python scalars are kept as such so they do not
    promote the dtype of the arrays they are combined with."""

    def __init__(self, value, name: Optional[str] = None):
        super().__init__(name=name)
        if isinstance(value, (bool, int, float)):
            self.value = value
        else:
            self.value = np.asarray(value)

    def compute(self):
        return self.value

    def gradient(self, grads, wrt):
        return []

    def infer_shape(self):
        return [np.shape(self.value)]


def Input(
    shape: Optional[Sequence[Optional[int]]] = None,
    dtype=None,
    name: Optional[str] = None,
) -> Tensor:
    """Create a graph input. Returns the tensor to build the graph from."""
    return InputOp(shape=shape, dtype=dtype, name=name)()


def Constant(value, name: Optional[str] = None) -> Tensor:
    """Wrap a value (array or scalar) as a graph constant."""
    return ConstantOp(value, name=name)()


def as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Constant(value)
