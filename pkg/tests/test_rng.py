import numpy as np
import pytest

from fraglab.rng import STREAMS, check_seed, substream


def test_same_stream_same_draws():
    assert np.array_equal(substream(7, "noise").random(5), substream(7, "noise").random(5))


def test_streams_differ_by_name_index_and_seed():
    base = substream(7, "noise").random(5)
    assert not np.array_equal(base, substream(7, "exposure").random(5))
    assert not np.array_equal(base, substream(8, "noise").random(5))
    assert not np.array_equal(substream(7, "mc-rep", 0).random(5), substream(7, "mc-rep", 1).random(5))


def test_replication_stream_independent_of_order():
    late = substream(3, "mc-rep", 41).random(3)
    for i in range(41):
        substream(3, "mc-rep", i).random(100)
    assert np.array_equal(late, substream(3, "mc-rep", 41).random(3))


def test_unknown_stream_and_bad_seed():
    with pytest.raises(KeyError):
        substream(0, "nope")
    with pytest.raises(ValueError):
        check_seed(-1)
    with pytest.raises(ValueError):
        check_seed(2**64)
    assert check_seed(2**64 - 1) == 2**64 - 1


def test_stream_ids_unique():
    assert len(set(STREAMS.values())) == len(STREAMS)
