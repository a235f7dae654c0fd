import numpy as np
import pytest

from cladlab.rng import derive_key, stream


def test_same_path_reproduces_sequence():
    a = stream(7, "sample", 3, 12).random(8)
    b = stream(7, "sample", 3, 12).random(8)
    assert np.array_equal(a, b)


def test_different_paths_are_independent():
    a = stream(7, "sample", 3, 12).random(8)
    b = stream(7, "sample", 3, 13).random(8)
    c = stream(8, "sample", 3, 12).random(8)
    assert not np.array_equal(a, b)
    assert not np.array_equal(a, c)


def test_construction_order_is_irrelevant():
    first = stream(1, "x").random(4)
    _ = stream(2, "y").random(100)
    again = stream(1, "x").random(4)
    assert np.array_equal(first, again)


def test_string_and_int_parts_do_not_collide():
    assert derive_key(1, "2") != derive_key(1, 2)
    assert derive_key("ab", "c") != derive_key("a", "bc")


def test_rejects_non_int_str_parts():
    with pytest.raises(TypeError):
        derive_key(1.5)
    with pytest.raises(TypeError):
        derive_key(True)
