import math

import numpy as np
import pytest

from bosonic_moe.errors import ConfigurationError, TruncationError
from bosonic_moe.fock import (
    FockDistribution,
    PassiveDistribution,
    entropy_budget,
    g,
    g_inverse,
    passive_rearrange,
    sample_passive_with_entropy,
    shannon_entropy,
    temper_to_entropy,
    thermal_distribution,
    total_variation,
)


def test_entropy_point_mass_and_uniform():
    assert shannon_entropy(np.eye(5)[0]) == 0.0
    assert shannon_entropy(np.full(4, 0.25)) == pytest.approx(math.log(4), abs=1e-15)


def test_entropy_of_truncated_thermal():
    p = thermal_distribution(1.0, 200)
    assert abs(shannon_entropy(p) - 2 * math.log(2)) < 1e-9


def test_entropy_rejects_bad_normalisation():
    with pytest.raises(ValueError):
        shannon_entropy(np.array([0.5, 0.4]))
    with pytest.raises(ValueError):
        shannon_entropy(np.array([1.2, -0.2]))


def test_entropy_rejects_large_tail():
    p = FockDistribution(np.array([0.5, 0.5 - 1e-6]), tail_bound=1e-6)
    with pytest.raises(TruncationError):
        shannon_entropy(p)


def test_g_values():
    assert g(0) == 0.0
    assert g(1) == pytest.approx(1.3862944, abs=1e-7)
    assert g(1) == pytest.approx(2 * math.log(2), rel=1e-15)
    with pytest.raises(ValueError):
        g(-0.1)


@pytest.mark.parametrize("nbar, tol", [(2.7, 1e-10), (1.0, 1e-10), (10.0, 1e-8), (1e-6, 1e-16), (1e4, 1e-6)])
def test_g_inverse_round_trip(nbar, tol):
    assert g_inverse(g(nbar)) == pytest.approx(nbar, abs=tol)
    assert abs(g(g_inverse(g(nbar))) - g(nbar)) <= 1e-12


def test_g_inverse_zero_exact():
    assert g_inverse(0.0) == 0.0
    assert g_inverse(2 * math.log(2)) == pytest.approx(1.0, abs=1e-10)


def test_thermal_distribution_law():
    p = thermal_distribution(1.0, 64)
    assert p.probs[:3] == pytest.approx([0.5, 0.25, 0.125], abs=1e-16)
    ratios = p.probs[1:] / p.probs[:-1]
    assert np.allclose(ratios, 0.5, rtol=1e-13)
    assert p.tail_bound == pytest.approx(0.5**64, rel=1e-12)
    assert isinstance(p, PassiveDistribution)


def test_thermal_vacuum_and_truncation():
    p = thermal_distribution(0.0, 8)
    assert p.probs[0] == 1.0 and p.probs[1:].sum() == 0.0
    with pytest.raises(TruncationError):
        thermal_distribution(5.0, 10)


def test_passive_rearrange():
    out = passive_rearrange([0.2, 0.5, 0.3])
    assert out.probs.tolist() == [0.5, 0.3, 0.2]
    assert passive_rearrange(out).probs.tolist() == out.probs.tolist()


def test_passive_invariants_and_support():
    with pytest.raises(ValueError):
        PassiveDistribution(np.array([0.3, 0.7]))
    p = PassiveDistribution(np.array([0.6, 0.4, 0.0, 0.0]))
    assert p.support == 1
    assert PassiveDistribution(np.array([0.6, 0.3, 0.1])).support is None


def test_distribution_is_read_only():
    p = FockDistribution(np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        p.probs[0] = 0.5


def test_total_variation_pads():
    assert total_variation([1.0], [0.5, 0.5]) == pytest.approx(0.5)


def test_entropy_budget_shrinks_with_tail():
    b = [entropy_budget(thermal_distribution(2.0, d, max_tail=None).tail_bound, d) for d in (40, 60, 80, 120)]
    assert all(x > y for x, y in zip(b, b[1:]))


def test_sampler_examples():
    assert sample_passive_with_entropy(0.0, 10, 1).probs[0] == 1.0
    p = sample_passive_with_entropy(g(1), 200, 7)
    assert abs(shannon_entropy(p) - g(1)) <= 1e-10
    q = sample_passive_with_entropy(g(1), 200, 7)
    assert np.array_equal(p.probs, q.probs)


def test_sampler_full_support():
    for seed in range(10):
        p = sample_passive_with_entropy(1.0, 128, seed, full_support=True)
        assert np.all(p.probs > 0)


def test_sampler_unreachable_entropy():
    with pytest.raises(ConfigurationError):
        sample_passive_with_entropy(math.log(4), 4, 0)


def test_temper_keeps_zeros():
    q = temper_to_entropy(np.array([0.5, 0.3, 0.2, 0.0]), 0.9)
    assert q[3] == 0.0
    assert abs(shannon_entropy(q) - 0.9) < 1e-10
