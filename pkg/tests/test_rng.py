import numpy as np
import pytest

from newsvendor_lab.rng import MAX_SEED, check_seed, replication_rng


def test_streams_depend_only_on_seed_and_index():
    a = replication_rng(7, 3).random(5)
    replication_rng(7, 2).random(100)  # unrelated draws in between
    b = replication_rng(7, 3).random(5)
    assert np.array_equal(a, b)


def test_streams_differ_across_index_seed_and_stream():
    base = replication_rng(7, 3).random(4)
    for other in (replication_rng(7, 4), replication_rng(8, 3), replication_rng(7, 3, stream=1)):
        assert not np.array_equal(base, other.random(4))


@pytest.mark.parametrize("bad", [-1, MAX_SEED + 1, 1.5, "3", True])
def test_seed_validation(bad):
    with pytest.raises(ValueError):
        check_seed(bad)


def test_full_range_seed_accepted():
    assert check_seed(MAX_SEED) == MAX_SEED
    replication_rng(MAX_SEED, 0).random()
