from typing import TYPE_CHECKING

from surfvote._core.utils import make_repr

if TYPE_CHECKING:  # pragma: no cover
    from surfvote._core.op import Op


def is_tensor_list(items) -> bool:
    return all(isinstance(item, Tensor) for item in items)


def _ops():
    # Deferred: the op library imports this module.
    from surfvote import ops

    return ops


class Tensor:
    """Symbolic handle to one output of an Op.

    Tensors are the half-edges of a computation graph: they keep track of which op
    produced them (and at which output index), and serve as the keys that map
    the actual arrays to the graph at forward time. They hold no data nor shape
    information themselves.

    Arithmetic operators build new ops, so ``(x * w + b)`` reads like the numpy
    expression it stands for. Comparisons are deliberately not overloaded (use
    ``ops.greater`` and friends) so tensors stay hashable by identity.
    """

    # Makes numpy defer binary operators with ndarrays to our reflected methods.
    __array_ufunc__ = None

    def __init__(self, op: "Op", index: int, name: str):
        self._op = op
        self._index = index
        self._name = name

    @property
    def op(self) -> "Op":
        return self._op

    @property
    def index(self) -> int:
        return self._index

    @property
    def name(self) -> str:
        return self._name

    def __repr__(self):
        return make_repr(self, ["name", "index"])

    def __add__(self, other):
        return _ops().add(self, other)

    def __radd__(self, other):
        return _ops().add(other, self)

    def __sub__(self, other):
        return _ops().subtract(self, other)

    def __rsub__(self, other):
        return _ops().subtract(other, self)

    def __mul__(self, other):
        return _ops().multiply(self, other)

    def __rmul__(self, other):
        return _ops().multiply(other, self)

    def __truediv__(self, other):
        return _ops().divide(self, other)

    def __rtruediv__(self, other):
        return _ops().divide(other, self)

    def __neg__(self):
        return _ops().negative(self)

    def __pow__(self, exponent):
        return _ops().power(self, exponent)

    def __matmul__(self, other):
        return _ops().matmul(self, other)

    def __rmatmul__(self, other):
        return _ops().matmul(other, self)

    def __getitem__(self, key):
        return _ops().getitem(self, key)
