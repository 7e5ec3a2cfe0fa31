import numpy as np
import pytest

from collective_twa.rng import (
    STREAM_INITIAL,
    STREAM_NOISE,
    CounterRNG,
    block_normals,
    block_words,
    philox4x64,
)


def test_philox_matches_numpy_bit_generator():
    # numpy bumps the counter before its first block, so that block uses counter (1, 0, 0, 0)
    bg = np.random.Philox(key=np.array([7, 9], dtype=np.uint64), counter=np.zeros(4, dtype=np.uint64))
    expected = bg.random_raw(8)
    got = [philox4x64(np.uint64(c), np.uint64(0), np.uint64(0), np.uint64(0), np.uint64(7), np.uint64(9))
           for c in (1, 2)]
    assert np.array_equal(np.array(got, dtype=np.uint64).ravel(), expected)
    assert expected[0] == 0x5AC49A5AA6B07890


def test_noise_variance_within_one_percent():
    z = block_normals(2024, np.arange(10_000), 0, 100)
    assert z.size == 1_000_000
    assert abs(z.mean()) < 5e-3
    assert abs(z.var() - 1.0) < 1e-2


def test_normals_independent_of_block_composition():
    full = block_normals(5, np.arange(64), 17, 10)
    part = block_normals(5, np.array([40, 3]), 17, 10)
    assert np.array_equal(part, full[[40, 3]])


def test_counter_rng_walks_steps():
    r = CounterRNG(9, trajectory=4)
    a, b = r.normals(6), r.normals(6)
    assert np.array_equal(a, block_normals(9, [4], 0, 6)[0])
    assert np.array_equal(b, block_normals(9, [4], 1, 6)[0])
    assert r.step == 2


def test_streams_and_seeds_differ():
    base = block_words(1, [0], 0, 8, stream=STREAM_INITIAL)
    assert not np.array_equal(base, block_words(2, [0], 0, 8, stream=STREAM_INITIAL))
    assert not np.array_equal(base, block_words(1, [0], 0, 8, stream=STREAM_NOISE))
    assert not np.array_equal(base, block_words(1, [1], 0, 8, stream=STREAM_INITIAL))


@pytest.mark.parametrize("width", [1, 2, 3, 4, 5, 9])
def test_odd_widths_are_prefixes(width):
    wide = block_normals(3, [0, 1], 2, 12)
    assert np.array_equal(block_normals(3, [0, 1], 2, width), wide[:, :width])


def test_increments_uncorrelated_across_steps_and_components():
    z = np.stack([block_normals(11, np.arange(20_000), s, 2) for s in range(2)])
    c = np.corrcoef(np.concatenate([z[0], z[1]], axis=1).T)
    off = c[~np.eye(4, dtype=bool)]
    assert np.abs(off).max() < 4 / np.sqrt(20_000)
