import numpy as np
import pytest
from hypothesis import given, strategies as st

from sct.modular.interleave import deinterleave, interleave, permutation


def test_bijection():
    p = permutation(1024, 5)
    assert np.array_equal(np.sort(p), np.arange(1024))
    assert not np.array_equal(p, np.arange(1024))


def test_same_seed_same_permutation():
    assert np.array_equal(permutation(100, 3), permutation(100, 3))
    assert not np.array_equal(permutation(100, 3), permutation(100, 4))


@given(st.lists(st.integers(0, 1), max_size=500), st.integers(0, 2**32 - 1))
def test_round_trip(bits, seed):
    x = np.asarray(bits)
    assert np.array_equal(deinterleave(interleave(x, seed), seed), x)


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        deinterleave(np.zeros(10), 1, n=12)
