import numpy as np
import pytest

from surfvote._core.utils import (
    SimpleCache,
    as_rng,
    check_finite,
    check_points,
    find_duplicated_items,
    listify,
    make_name,
    safezip2,
    unlistify,
)
from surfvote.exceptions import NonFiniteError

from tests.helpers.fixtures import does_not_raise


@pytest.mark.parametrize("x,expected", [(1, [1]), ((1,), [1]), ([1], [1])])
def test_listify(x, expected):
    assert listify(x) == expected


@pytest.mark.parametrize(
    "x,expected,raises",
    [
        ([1], 1, does_not_raise()),
        ((1,), None, pytest.raises(ValueError)),
        ([1, 2], [1, 2], does_not_raise()),
    ],
)
def test_unlistify(x, expected, raises):
    with raises:
        assert unlistify(x) == expected


@pytest.mark.parametrize(
    "x,y,raises",
    [
        ((1, 2), (1, 2), does_not_raise()),
        ((1,), (1, 2), pytest.raises(ValueError)),
    ],
)
def test_safezip2(x, y, raises):
    with raises:
        assert list(safezip2(x, y)) == list(zip(x, y))


@pytest.mark.parametrize("sep,expected", [("/", "sdf/w0"), ("_", "sdf_w0")])
def test_make_name(sep, expected):
    assert make_name("sdf", "w0", sep=sep) == expected


@pytest.mark.parametrize(
    "x,expected", [((1, 1, 2, 2), [1, 2]), ((1, 2, 3), []), ([], [])]
)
def test_find_duplicated_items(x, expected):
    assert find_duplicated_items(x) == expected


@pytest.mark.parametrize(
    "points,raises",
    [
        (np.zeros((4, 3)), does_not_raise()),
        (np.zeros((0, 3)), does_not_raise()),
        (np.zeros(3), pytest.raises(ValueError)),
        (np.zeros((4, 2)), pytest.raises(ValueError)),
    ],
)
def test_check_points(points, raises):
    with raises:
        assert check_points("points", points).shape == points.shape


@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_check_finite(bad):
    check_finite("x", np.zeros(3))
    with pytest.raises(NonFiniteError, match="x must be finite"):
        check_finite("x", np.zeros(3), np.array([0.0, bad]))


def test_as_rng():
    rng = np.random.default_rng(3)
    assert as_rng(rng) is rng
    assert as_rng(3).uniform() == np.random.default_rng(3).uniform()


def test_simple_cache():
    cache = SimpleCache()
    assert "a" not in cache
    assert cache.hits == 0 and cache.misses == 1
    cache["a"] = 1
    assert "a" in cache
    assert cache.hits == 1 and cache["a"] == 1
    cache.clear()
    assert "a" not in cache
    with pytest.raises(KeyError):
        cache["a"]
