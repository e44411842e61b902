"""Deterministic stream derivation tests."""

import numpy as np
import pytest

from cutinsim.rng import derive_key, stream


def test_same_triple_same_stream():
    a = stream(1234, "demo", 3).random(8)
    b = stream(1234, "demo", 3).random(8)
    assert np.array_equal(a, b)


def test_streams_differ_by_seed_tag_and_index():
    base = stream(1, "x", 0).random(4)
    assert not np.array_equal(base, stream(2, "x", 0).random(4))
    assert not np.array_equal(base, stream(1, "y", 0).random(4))
    assert not np.array_equal(base, stream(1, "x", 1).random(4))


def test_derive_key_is_stable():
    # frozen so that on-disk artifacts stay reproducible across releases
    assert derive_key(0, "") == (5320194405097760469, 8186581587344277713)
    assert derive_key(1234, "follower-noise") == derive_key(1234, "follower-noise")


def test_stream_order_independence():
    # drawing stream 5 before or after stream 2 must not matter
    a5 = stream(7, "t", 5).random(3)
    _ = stream(7, "t", 2).random(3)
    b5 = stream(7, "t", 5).random(3)
    assert np.array_equal(a5, b5)


def test_bad_inputs():
    with pytest.raises(TypeError):
        stream("not-an-int", "t")
    with pytest.raises(ValueError):
        stream(1, "t", -1)
