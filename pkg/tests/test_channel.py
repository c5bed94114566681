import math

import numpy as np
import pytest

from bosonic_moe.channel import (
    DIVERGENT,
    Additive,
    Amplifier,
    ChannelParams,
    LindbladSpec,
    Loss,
    entropy_derivative_at_zero,
    entropy_derivative_fd,
    evolve,
    generator_apply,
    kind_from_params,
    lindblad_from_kind,
    output_entropy,
    params_from_kind,
    params_from_lindblad,
    pure_loss_binomial,
    thermal_entropy_rate,
    thermal_output_nbar,
)
from bosonic_moe.errors import ConfigurationError, TruncationError
from bosonic_moe.fock import (
    g,
    sample_passive_with_entropy,
    shannon_entropy,
    thermal_distribution,
    thermal_probs,
    total_variation,
)


def test_lindblad_from_kind():
    s = lindblad_from_kind(Loss(0.5, 0))
    assert (s.gamma_plus, s.gamma_minus) == (0.0, 1.0) and s.t == pytest.approx(math.log(2))
    s = lindblad_from_kind(Amplifier(2, 0))
    assert (s.gamma_plus, s.gamma_minus) == (1.0, 0.0) and s.t == pytest.approx(math.log(2))
    assert lindblad_from_kind(Additive(0.3)) == LindbladSpec(1, 1, 0.3)


def test_kind_ranges():
    for bad in (lambda: Loss(1.0), lambda: Loss(0.0), lambda: Amplifier(1.0), lambda: Additive(-1)):
        with pytest.raises(ConfigurationError):
            bad()
    with pytest.raises(ConfigurationError):
        LindbladSpec(-1, 0, 1)


def test_params_from_kind():
    assert params_from_kind(Loss(0.5, 0)) == ChannelParams(0.5, 0.5)
    assert params_from_kind(Amplifier(2, 0)) == ChannelParams(2, 1)
    p = params_from_kind(Additive(0.3))
    assert p.tau == 1 and p.y == pytest.approx(0.6)


@pytest.mark.parametrize("kind", [Loss(0.3, 0.7), Amplifier(2.5, 1.2), Additive(0.4), Loss(0.9, 0), Amplifier(1.1, 0)])
def test_params_consistent_between_parameterisations(kind):
    a = params_from_kind(kind)
    b = params_from_lindblad(lindblad_from_kind(kind))
    assert a.tau == pytest.approx(b.tau, rel=1e-13)
    assert a.y == pytest.approx(b.y, rel=1e-12)
    back = kind_from_params(a)
    assert type(back) is type(kind)


def test_unphysical_params_rejected():
    with pytest.raises(ConfigurationError):
        ChannelParams(2.0, 0.5)


def test_generator_examples():
    N = 0.8
    th = thermal_distribution(N, 200)
    assert np.max(np.abs(generator_apply(LindbladSpec(N, N + 1, 1), th))) < 1e-13
    d0 = np.eye(6)[0]
    assert generator_apply(LindbladSpec(1, 0, 1), d0).tolist() == [-1, 1, 0, 0, 0, 0]
    d1 = np.eye(6)[1]
    assert generator_apply(LindbladSpec(0, 1, 1), d1).tolist() == [1, -1, 0, 0, 0, 0]


def test_generator_conserves_mass_away_from_cutoff():
    p = thermal_distribution(0.5, 120)
    dp = generator_apply(LindbladSpec(0.7, 1.3, 1), p)
    assert abs(dp.sum()) < 1e-14


def test_evolve_identity():
    p = sample_passive_with_entropy(1.0, 64, 1)
    assert evolve(LindbladSpec(1, 1, 0), p) is p or np.array_equal(evolve(LindbladSpec(1, 1, 0), p).probs, p.probs)


@pytest.mark.parametrize("engine", ["expm", "rk"])
def test_evolve_thermal_loss(engine):
    kind = Loss(0.5, 0.2)
    out = evolve(lindblad_from_kind(kind), thermal_distribution(1.0, 256), engine=engine)
    assert thermal_output_nbar(params_from_kind(kind), 1.0) == pytest.approx(0.6)
    assert total_variation(out, thermal_probs(0.6, 256)) < 1e-6


def test_semigroup_example():
    s = lindblad_from_kind(Amplifier(1.3, 0.2))
    p = sample_passive_with_entropy(1.0, 200, 4)
    a = evolve(s.with_time(0.5), evolve(s.with_time(0.3), p))
    b = evolve(s.with_time(0.8), p)
    assert total_variation(a, b) < 1e-9


def test_tail_bound_accumulates_leak():
    s = LindbladSpec(1, 0, 1.0)
    p = np.zeros(20)
    p[0] = 1.0
    out = evolve(s, p, max_tail=None)
    assert out.tail_bound > 1e-5
    assert out.mass + out.tail_bound == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(TruncationError):
        evolve(s, p)


def test_pure_loss_binomial_small_case():
    out = pure_loss_binomial([0, 0, 1.0], 0.5)
    assert out == pytest.approx([0.25, 0.5, 0.25])


def test_thermal_output_nbar_examples():
    nb = 1.7
    for eta, N in [(0.3, 0.5), (0.8, 0.0)]:
        assert thermal_output_nbar(params_from_kind(Loss(eta, N)), nb) == pytest.approx(eta * nb + (1 - eta) * N)
    assert thermal_output_nbar(params_from_kind(Amplifier(2, 0)), 0.0) == pytest.approx(1.0)
    assert thermal_output_nbar(params_from_kind(Additive(0.4)), nb) == pytest.approx(nb + 0.4)


def test_output_entropy_examples():
    s = lindblad_from_kind(Amplifier(2, 0))
    est = output_entropy(s, np.eye(256)[0])
    assert abs(est.value - g(1)) < 1e-6
    p = sample_passive_with_entropy(1.0, 64, 2)
    assert output_entropy(LindbladSpec(1, 1, 0), p).value == shannon_entropy(p)


def test_derivative_examples():
    N = 1.3
    th = thermal_distribution(N, 256)
    assert abs(entropy_derivative_at_zero(LindbladSpec(N, N + 1, 1), th)) < 1e-10
    assert entropy_derivative_at_zero(LindbladSpec(1, 0, 1), np.eye(8)[0]) == DIVERGENT
    # pure loss on a finite-support state stays finite
    assert math.isfinite(entropy_derivative_at_zero(LindbladSpec(0, 1, 1), np.r_[0.5, 0.5, np.zeros(6)]))


def test_derivative_against_finite_differences_geometric():
    p = thermal_distribution(0.7, 256)
    s = LindbladSpec(0.4, 1.1, 1.0)
    exact = entropy_derivative_at_zero(s, p)
    assert exact == pytest.approx(thermal_entropy_rate(s, 0.7), rel=1e-10)
    for scheme in ("central", "forward"):
        assert entropy_derivative_fd(s, p, scheme=scheme) == pytest.approx(exact, rel=1e-4)
