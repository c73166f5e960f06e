from typing import Any, Dict, Hashable, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from surfvote.exceptions import NonFiniteError


def listify(x: Union[Any, List[Any], Tuple[Any, ...]]) -> List[Any]:
    if isinstance(x, list):
        return x
    if isinstance(x, tuple):
        return list(x)
    return [x]


def unlistify(x: List[Any]) -> Union[List[Any], Any]:
    if not isinstance(x, list):
        raise ValueError("x must be a list.")
    if len(x) == 1:
        return x[0]
    return x


def safezip2(seq1: Sequence, seq2: Sequence):
    """A zip that raises an error when the sequences have different length.
    It can only handle two sequences.
    """
    if len(seq1) != len(seq2):
        raise ValueError(
            "Lengths of iterators differ: {} != {}.".format(len(seq1), len(seq2))
        )
    return zip(seq1, seq2)


def make_name(*parts, sep: str = "/") -> str:
    return sep.join([str(p) for p in parts])


def make_args_from_attrs(obj, attrs: Iterable[str]) -> str:
    return ", ".join("{}={!r}".format(attr, getattr(obj, attr)) for attr in attrs)


def make_repr(obj, attrs: Iterable[str]) -> str:
    return "{}({})".format(obj.__class__.__name__, make_args_from_attrs(obj, attrs))


def find_duplicated_items(items: Iterable[Hashable]) -> List[Hashable]:
    counts = {}  # type: Dict[Hashable, int]
    for item in items:
        counts[item] = counts.get(item, 0) + 1
    return [item for item, count in counts.items() if count > 1]


def check_finite(name: str, *arrays) -> None:
    """Raise NonFiniteError if any of the arrays holds NaN or infinity."""
    for array in arrays:
        if not np.all(np.isfinite(array)):
            raise NonFiniteError("{} must be finite.".format(name))


def check_points(name: str, points) -> np.ndarray:
    points = np.asarray(points)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError(
            "{} must have shape (n, 3). Got {}.".format(name, points.shape)
        )
    return points


def as_rng(seed: Optional[Union[int, np.random.Generator]]) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


class SimpleCache:
    """A simple cache that updates its stats upon checking (not retrieval)
    """

    def __init__(self):
        self._hits = 0
        self._misses = 0
        self._cache = {}  # type: Dict[Hashable, Any]

    def __contains__(self, key):
        if key in self._cache:
            self._hits += 1
            return True
        self._misses += 1
        return False

    def __getitem__(self, key):
        return self._cache[key]

    def __setitem__(self, key, value):
        self._cache[key] = value

    def clear(self):
        self._cache.clear()

    @property
    def hits(self) -> int:
        return self._hits

    @property
    def misses(self) -> int:
        return self._misses
