import json
import math

import numpy as np
import pytest
from scipy import stats

from tmd.distributions import (
    CountHistogram,
    Distribution,
    binomial_count_model,
    default_n_max,
    poisson_distribution,
)


def test_poisson_vacuum():
    d = poisson_distribution(0.0, 5)
    np.testing.assert_array_equal(d.values, np.eye(6)[0])
    assert d.physical


def test_poisson_single_value():
    assert poisson_distribution(1.0, 4).values[1] == pytest.approx(math.exp(-1), rel=1e-15)


def test_poisson_tail_flag():
    d = poisson_distribution(3.77, 8)
    tail = 1 - sum(3.77**n * math.exp(-3.77) / math.factorial(n) for n in range(9))
    assert d.metadata["tail_mass"] == pytest.approx(tail, rel=1e-9)
    assert tail > 1e-2
    assert d.warnings and "truncation" in d.warnings[0]
    assert not d.physical


def test_poisson_default_truncation():
    assert default_n_max(1.0) == 16
    assert default_n_max(13.1) == 53
    assert poisson_distribution(2.0).n_max == 16


def test_binomial_model_limits():
    np.testing.assert_array_equal(binomial_count_model(0.0, 16).values, np.eye(17)[0])
    np.testing.assert_array_equal(binomial_count_model(math.inf, 16).values, np.eye(17)[16])
    assert binomial_count_model(1e4, 16).values[16] == pytest.approx(1.0)


def test_binomial_model_per_mode_vacuum():
    p = binomial_count_model(13.1, 16).values
    p0 = math.exp(-13.1 / 16)
    for k in (0, 9, 16):
        expect = math.comb(16, k) * p0 ** (16 - k) * (1 - p0) ** k
        assert p[k] == pytest.approx(expect, rel=1e-12)
    assert int(np.argmax(p)) == 9


def test_distribution_invariants():
    with pytest.raises(ValueError):
        Distribution([0.5, 0.6])
    with pytest.raises(ValueError):
        Distribution([-0.1, 1.1])
    d = Distribution([-0.1, 1.1], physical=False, diagnostics=("negative_entries",))
    assert d.diagnostics == ("negative_entries",)


def test_distribution_json_round_trip_is_bit_exact(rng):
    v = rng.dirichlet(np.ones(12))
    v[-1] = 1 - math.fsum(v[:-1])
    d = Distribution(v, metadata={"mu": 0.1 + 0.2})
    back = Distribution.from_dict(json.loads(json.dumps(d.to_dict())))
    assert back.values.tobytes() == d.values.tobytes()
    assert back.metadata == d.metadata


def test_histogram_invariants():
    h = CountHistogram([5, 3, 2])
    assert h.pulses == 10
    assert h.modes == 2
    np.testing.assert_allclose(h.frequencies(), [0.5, 0.3, 0.2])
    with pytest.raises(ValueError):
        CountHistogram([5, 3], pulses=9)
    with pytest.raises(ValueError):
        CountHistogram([1.5, 2])
    assert CountHistogram.from_counts([0, 2, 2, 1], 3).tallies.tolist() == [1, 1, 2, 0]


def test_poisson_against_scipy():
    d = poisson_distribution(5.5, 40)
    np.testing.assert_allclose(d.values, stats.poisson.pmf(np.arange(41), 5.5), rtol=1e-13)
