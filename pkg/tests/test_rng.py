import numpy as np
import pytest

from staylor.rng import XorShift64Star, splitmix64


def _reference_stream(seed, n):
    # same recurrences in numpy uint64 arithmetic (wraps mod 2^64)
    with np.errstate(over="ignore"):
        z = np.uint64(seed) + np.uint64(0x9E3779B97F4A7C15)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        x = z ^ (z >> np.uint64(31))
        out = []
        for _ in range(n):
            x ^= x >> np.uint64(12)
            x ^= x << np.uint64(25)
            x ^= x >> np.uint64(27)
            out.append(int(x * np.uint64(0x2545F4914F6CDD1D)))
    return out


@pytest.mark.parametrize("seed", [0, 1, 7, 2**63 + 5])
def test_stream_matches_uint64_reference(seed):
    rng = XorShift64Star(seed)
    assert [rng.next_u64() for _ in range(50)] == _reference_stream(seed, 50)


def test_splitmix_known_value():
    # first output of splitmix64 seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF


def test_same_seed_same_stream():
    a, b = XorShift64Star(42), XorShift64Star(42)
    assert [a.random() for _ in range(20)] == [b.random() for _ in range(20)]


def test_random_in_unit_interval():
    rng = XorShift64Star(3)
    xs = [rng.random() for _ in range(2000)]
    assert min(xs) >= 0.0 and max(xs) < 1.0
    assert abs(np.mean(xs) - 0.5) < 0.03


def test_below_range_and_coverage():
    rng = XorShift64Star(11)
    draws = [rng.below(6) for _ in range(3000)]
    assert set(draws) == set(range(6))
    counts = np.bincount(draws)
    assert counts.min() > 400


def test_permutation_is_a_permutation():
    rng = XorShift64Star(5)
    for n in range(1, 9):
        assert sorted(rng.permutation(n)) == list(range(n))


def test_sample_without_replacement():
    rng = XorShift64Star(9)
    s = rng.sample(list(range(10)), 4)
    assert len(set(s)) == 4 and set(s) <= set(range(10))


def test_normal_moments():
    rng = XorShift64Star(1)
    xs = np.array([rng.normal() for _ in range(20000)])
    assert abs(xs.mean()) < 0.03
    assert abs(xs.std() - 1.0) < 0.03
