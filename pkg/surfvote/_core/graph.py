import dataclasses
import functools
import logging
from typing import Dict, Iterable, List, Optional, Sequence, Set, Union

import numpy as np

from surfvote._core.digraph import DiGraph
from surfvote._core.op import InputOp, Op
from surfvote._core.tensor import Tensor, is_tensor_list
from surfvote._core.typing import ArrayLike
from surfvote._core.utils import (
    SimpleCache,
    find_duplicated_items,
    listify,
    make_name,
    safezip2,
    unlistify,
)
from surfvote.exceptions import ShapeMismatchError

logger = logging.getLogger(__name__)

# Just to avoid function signatures painful to the eye
Tensors = Union[Tensor, List[Tensor]]
ArrayLikes = Union[ArrayLike, List[ArrayLike]]
FeedDict = Dict[Union[Tensor, str], ArrayLike]


def try_and_raise_with_cause(action):
    """Decorator to raise exception with information about where in the graph
    the error happened with the original cause.

    Shape errors already carry the node name and are passed through untouched.
    """

    def decorator(func):
        def decorated(op, *args, **kwargs):
            try:
                return func(op, *args, **kwargs)
            except ShapeMismatchError:
                raise
            except Exception as e:
                message = "{} failed at {}. See above for details.".format(
                    action, op.name
                )
                raise RuntimeError(message) from e

        return decorated

    return decorator


@try_and_raise_with_cause(action="compute")
def _run(op: Op, values: List[ArrayLike]) -> List[ArrayLike]:
    output_data = op.compute(*values)
    if op.n_outputs == 1:
        return [output_data]
    output_data = list(output_data)
    if len(output_data) != op.n_outputs:
        raise ValueError(
            "The number of output data elements ({}) does not match "
            "the number of outputs ({}).".format(len(output_data), op.n_outputs)
        )
    return output_data


def _compute_op(op: Op, results: Dict[Tensor, ArrayLike]) -> None:
    values = [results[input] for input in op.inputs]
    try:
        declared = op.infer_shape(*[np.shape(v) for v in values])
    except ValueError as e:
        raise ShapeMismatchError(op.name, str(e)) from e

    output_data = _run(op, values)

    if declared is not None:
        for output, data, shape in zip(op.outputs, output_data, declared):
            if np.shape(data) != tuple(shape):
                raise ShapeMismatchError(
                    output.name,
                    "computed shape {} differs from declared shape {}.".format(
                        np.shape(data), tuple(shape)
                    ),
                )
    results.update(safezip2(op.outputs, output_data))


def build_graph_from_outputs(
    outputs: Iterable[Tensor], stop: Iterable[Tensor] = ()
) -> DiGraph:
    """Backtrack from the outputs to collect the ops that produce them.

    Backtracking stops at the tensors in ``stop`` (values that will be given).
    """
    stop = set(stop)
    graph = DiGraph()
    visited = set()  # type: Set[Op]
    pending = [output.op for output in outputs if output not in stop]

    while pending:
        op = pending.pop()
        if op in visited:
            continue
        visited.add(op)
        graph.add_node(op)
        for input in op.inputs:
            if input in stop:
                continue
            parent = input.op
            graph.add_node(parent)
            graph.add_edge(parent, op, input)
            if parent not in visited:
                pending.append(parent)
    return graph


def _missing_inputs(ops: Iterable[Op]) -> List[str]:
    return sorted(op.name for op in ops if isinstance(op, InputOp))


def evaluate(outputs: Tensors, feed: Optional[Dict[Tensor, ArrayLike]] = None):
    """Compute tensors, given values for some of their ancestors.

    Parameters
    ----------
    outputs
        Tensor or list of tensors to compute.

    feed
        Values of tensors known in advance (inputs, cached intermediates).

    Returns
    -------
    array-like or list of array-like
        The computed values, in the order of ``outputs``.
    """
    outputs_list = listify(outputs)
    results = dict(feed or {})  # type: Dict[Tensor, ArrayLike]
    graph = build_graph_from_outputs(outputs_list, stop=results)

    missing = _missing_inputs(graph)
    if missing:
        raise ValueError(
            "The following inputs are required but were not given:\n"
            "{}".format(",".join(missing))
        )

    for op in graph.topological_sort():
        _compute_op(op, results)

    values = [results[output] for output in outputs_list]
    return values if isinstance(outputs, list) else values[0]


def _accumulate(terms: List[Tensor]) -> Tensor:
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total


def gradients(
    ys: Tensors, xs: Tensors, grad_ys: Optional[Tensors] = None
) -> List[Optional[Tensor]]:
    """Build the symbolic gradients of ``sum(grad_ys * ys)`` with respect to ``xs``.

    Parameters
    ----------
    ys
        Tensors to differentiate.

    xs
        Tensors to differentiate with respect to. Any tensor of the graph
        qualifies, not only inputs.

    grad_ys
        Seeds, one per ``ys`` (optional). Defaults to ones.

    Returns
    -------
    list
        One gradient tensor per ``xs``; None where ``ys`` does not depend on it.
    """
    from surfvote.ops import ones_like

    ys = listify(ys)
    xs = listify(xs)
    if grad_ys is None:
        grad_ys = [ones_like(y) for y in ys]
    grad_ys = listify(grad_ys)

    graph = build_graph_from_outputs(ys)
    xs_set = set(xs)
    reachable = set()  # type: Set[Op]
    for x in xs:
        if x.op in graph:
            reachable.add(x.op)
            reachable |= graph.descendants(x.op)

    def needed(tensor: Tensor) -> bool:
        return tensor in xs_set or tensor.op in reachable

    collected = {}  # type: Dict[Tensor, List[Tensor]]
    for y, grad_y in safezip2(ys, grad_ys):
        collected.setdefault(y, []).append(grad_y)

    for op in reversed(graph.topological_sort()):
        if op not in reachable:
            continue
        output_grads = [
            _accumulate(collected[output]) if output in collected else None
            for output in op.outputs
        ]
        if all(grad is None for grad in output_grads):
            continue
        wrt = [needed(input) for input in op.inputs]
        if not any(wrt):
            continue
        input_grads = op.gradient(output_grads, wrt)
        for input, grad, flag in zip(op.inputs, input_grads, wrt):
            if flag and grad is not None:
                collected.setdefault(input, []).append(grad)

    return [_accumulate(collected[x]) if x in collected else None for x in xs]


class CompGraph:
    """A computation graph defined from its inputs and outputs.

    The graph is built by backtracking from the outputs down to the given inputs
    and sorting the ops topologically. ``forward`` feeds the inputs and caches
    every intermediate value; ``backward`` then differentiates the outputs with
    respect to the inputs by building (once, then cached) the gradient graph and
    evaluating it on top of the cached forward values.

    Parameters
    ----------
    inputs
        Inputs of the graph. Usually tensors created with ``Input``; any tensor
        may be given, in which case its value is fed instead of computed.

    outputs
        Outputs of the graph.

    name
        Name of the graph (optional). If no name is passed, a name will be
        automatically generated.
    """

    _names = dict()  # type: Dict[str, int]

    def __init__(self, inputs: Tensors, outputs: Tensors, name: Optional[str] = None):
        def check(this: Tensors, what: str) -> List[Tensor]:
            this = listify(this)
            if not is_tensor_list(this):
                raise ValueError("{} must be of type Tensor.".format(what))
            if len(set(this)) != len(this):
                raise ValueError("{} must be unique.".format(what))
            return this

        if name is None:
            n_instances = self._names.get("CompGraph", 0)
            self._names["CompGraph"] = n_instances + 1
            name = make_name("CompGraph", n_instances, sep="_")
        self.name = name
        self._inputs = check(inputs, "inputs")
        self._outputs = check(outputs, "outputs")
        self._single_output = not isinstance(outputs, (list, tuple))
        self._build()

    def _build(self):
        self._graph = build_graph_from_outputs(self._outputs, stop=self._inputs)

        duplicated = find_duplicated_items(op.name for op in self._graph)
        if duplicated:
            raise ValueError(
                "Ops must have unique names. Found duplicated: {}".format(
                    ",".join(duplicated)
                )
            )

        # Fail early if graph is cyclic
        self._ops_sorted = self._graph.topological_sort()

        missing = _missing_inputs(self._graph)
        if missing:
            raise ValueError(
                "The following inputs are required but were not given:\n"
                "{}".format(",".join(missing))
            )

        self._tensors = {}  # type: Dict[str, Tensor]
        for op in self._graph:
            for output in op.outputs:
                self._tensors[output.name] = output
        for input in self._inputs:
            self._tensors[input.name] = input

        self._values = None  # type: Optional[Dict[Tensor, ArrayLike]]
        self._gradients_cache = SimpleCache()

    @classmethod
    def _clear_names(cls):
        # For testing purposes only.
        cls._names.clear()

    @property
    def inputs(self) -> List[Tensor]:
        return list(self._inputs)

    @property
    def outputs(self) -> List[Tensor]:
        return list(self._outputs)

    @property
    def ops(self) -> List[Op]:
        """Ops of the graph in topological order."""
        return list(self._ops_sorted)

    @property
    def graph(self) -> DiGraph:
        return self._graph

    def get_tensor(self, name: str) -> Tensor:
        if name in self._tensors:
            return self._tensors[name]
        raise ValueError("{} was not found in the graph.".format(name))

    def _normalize_feed(
        self, feed: Union[ArrayLikes, FeedDict]
    ) -> Dict[Tensor, ArrayLike]:
        if isinstance(feed, dict):
            return {
                (key if isinstance(key, Tensor) else self.get_tensor(key)): value
                for key, value in feed.items()
            }
        feed = listify(feed)
        try:
            return dict(safezip2(self._inputs, feed))
        except ValueError as e:
            message = (
                "When passing inputs as a list or a single array, the number of "
                "arrays must match the number of inputs specified at instantiation. "
                "Got {}, expected: {}.".format(len(feed), len(self._inputs))
            )
            raise ValueError(message) from e

    def forward(self, feed: Union[ArrayLikes, FeedDict]):
        """Execute the graph on the given input data.

        Parameters
        ----------
        feed
            It can be either of:

                - A single array-like object (in the case of a single input)
                - A list of array-like objects (in the case of multiple inputs)
                - A dictionary mapping input tensors (or their names) to
                  array-like objects.

        Returns
        -------
        array-like or list of array-like
            The computed outputs.

        Raises
        ------
        ShapeMismatchError
            If a fed array does not match the declared shape of its input, or an
            op receives incompatible operands.
        """
        results = self._normalize_feed(feed)
        for input in self._inputs:
            if input not in results:
                raise ValueError("Missing input {}.".format(input.name))
            if isinstance(input.op, InputOp):
                results[input] = input.op.check(results[input])

        for op in self._ops_sorted:
            _compute_op(op, results)

        self._values = results
        output_data = [results[output] for output in self._outputs]
        return output_data[0] if self._single_output else output_data

    def value(self, tensor: Union[Tensor, str]) -> ArrayLike:
        """Cached forward value of any tensor of the graph (useful for debugging
        and for reading intermediate results)."""
        if self._values is None:
            raise RuntimeError("{} has not been run forward yet.".format(self.name))
        if not isinstance(tensor, Tensor):
            tensor = self.get_tensor(tensor)
        return self._values[tensor]

    def evaluate(self, tensors: Tensors):
        """Compute tensors of the graph, or built on top of it, reusing the cached
        forward values."""
        if self._values is None:
            raise RuntimeError("{} has not been run forward yet.".format(self.name))
        return evaluate(tensors, dict(self._values))

    def gradient_tensors(self, wrt: Optional[Sequence[Tensor]] = None):
        """Symbolic gradients of the outputs (weighted by seed inputs) with respect
        to ``wrt``. Returns the seed inputs and the gradient tensors."""
        from surfvote._core.op import Input

        wrt = self._inputs if wrt is None else listify(wrt)
        key = tuple(wrt)
        if key in self._gradients_cache:
            return self._gradients_cache[key]
        seeds = [
            Input(name=make_name(self.name, "seed", i))
            for i in range(len(self._outputs))
        ]
        grads = gradients(self._outputs, wrt, seeds)
        self._gradients_cache[key] = (seeds, grads)
        return seeds, grads

    def backward(
        self,
        seed: Optional[ArrayLikes] = None,
        wrt: Optional[Sequence[Tensor]] = None,
    ) -> Dict[Tensor, np.ndarray]:
        """Differentiate ``sum(seed * outputs)`` with respect to the inputs.

        Parameters
        ----------
        seed
            One array per output (optional). Defaults to ones, so a scalar
            output yields plain gradients.

        wrt
            Tensors to differentiate with respect to (optional). Defaults to the
            graph inputs.

        Returns
        -------
        dict
            Gradient array per tensor of ``wrt``. Tensors the outputs do not
            depend on get zeros.

        Raises
        ------
        RuntimeError
            If forward has not run on this graph.
        """
        if self._values is None:
            raise RuntimeError(
                "backward called before forward on {}.".format(self.name)
            )
        wrt = self._inputs if wrt is None else listify(wrt)
        seed_inputs, grads = self.gradient_tensors(wrt)

        if seed is None:
            seed_values = [np.ones_like(self._values[o]) for o in self._outputs]
        else:
            seed_values = [np.asarray(s) for s in listify(seed)]
        feed = dict(self._values)
        feed.update(safezip2(seed_inputs, seed_values))

        connected = [g for g in grads if g is not None]
        values = iter(evaluate(connected, feed)) if connected else iter(())

        result = {}  # type: Dict[Tensor, np.ndarray]
        for x, grad in zip(wrt, grads):
            if grad is None:
                result[x] = np.zeros_like(self._values[x])
            else:
                result[x] = np.asarray(next(values))
        return result


def contains_tensor(obj) -> bool:
    if isinstance(obj, Tensor):
        return True
    if isinstance(obj, (list, tuple)):
        return any(contains_tensor(item) for item in obj)
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return any(
            contains_tensor(getattr(obj, f.name)) for f in dataclasses.fields(obj)
        )
    return False


def eager_on_arrays(func):
    """Decorator for functions that build graph fragments.

    When none of the arguments is symbolic, the fragment is evaluated at once and
    plain arrays are returned (a 0-d result becomes a float). With symbolic
    arguments the tensors are returned untouched, to be wired into a larger graph.
    """

    @functools.wraps(func)
    def decorated(*args, **kwargs):
        result = func(*args, **kwargs)
        if contains_tensor(args) or contains_tensor(tuple(kwargs.values())):
            return result
        if isinstance(result, tuple):
            tensors = [value for value in result if isinstance(value, Tensor)]
            computed = dict(zip(tensors, evaluate(tensors))) if tensors else {}
            return tuple(
                _to_plain(computed[value] if isinstance(value, Tensor) else value)
                for value in result
            )
        return _to_plain(evaluate(result) if isinstance(result, Tensor) else result)

    return decorated


def _to_plain(value):
    if value is None:
        return None
    value = np.asarray(value)
    return float(value) if value.ndim == 0 else value
