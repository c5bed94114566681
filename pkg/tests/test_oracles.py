"""Frozen reference values derived by hand or by an independent route.

Each test pins one closed-form or previously computed number; a change in
any of them means the numerics moved and needs an explanation.
"""

import math

import numpy as np
import pytest

from bosonic_moe.channel import (
    Additive,
    Amplifier,
    LindbladSpec,
    Loss,
    entropy_derivative_at_zero,
    entropy_derivative_fd,
    evolve,
    generator_apply,
    lindblad_from_kind,
    output_entropy,
    params_from_kind,
    thermal_output_nbar,
)
from bosonic_moe.contravariant import (
    ContravariantParams,
    contravariant_output_entropy,
    covariant_partner,
    decompose,
    min_output_entropy_contravariant,
)
from bosonic_moe.critical import SUPEREXPONENTIAL, distribution_from_ratios, find_critical_points, master_residual
from bosonic_moe.fock import (
    g,
    g_inverse,
    passive_rearrange,
    sample_passive_with_entropy,
    shannon_entropy,
    thermal_distribution,
    thermal_probs,
    total_variation,
)
from bosonic_moe.verify import (
    DenseState,
    check_discretization,
    check_finite_support_divergence,
    dense_evolve,
    local_search_min_entropy,
    von_neumann_entropy,
)

LN2 = math.log(2.0)


# -- photon-number distributions ------------------------------------------


def test_truncated_thermal_entropy():
    assert abs(shannon_entropy(thermal_distribution(1.0, 200)) - 2 * LN2) < 1e-9


def test_g_of_one():
    assert g(1.0) == pytest.approx(1.3862944, abs=5e-8)


def test_g_inverse_values():
    assert abs(g_inverse(2 * LN2) - 1.0) < 1e-10
    assert abs(g_inverse(g(10.0)) - 10.0) < 1e-8


def test_thermal_probabilities():
    p = thermal_distribution(1.0, 64).probs
    assert p[:3].tolist() == pytest.approx([0.5, 0.25, 0.125], abs=1e-16)


def test_rearrangement_keeps_entropy():
    rng = np.random.default_rng(89)
    for _ in range(100):
        p = rng.dirichlet(np.ones(int(rng.integers(2, 40))))
        assert abs(shannon_entropy(passive_rearrange(p)) - shannon_entropy(p)) < 1e-13


def test_sampler_seed_7():
    assert abs(shannon_entropy(sample_passive_with_entropy(g(1), 200, 7)) - g(1)) <= 1e-10


# -- generator and evolution ----------------------------------------------


@pytest.mark.parametrize("N", [0.3, 1.0, 2.0])
def test_thermal_is_stationary_for_its_generator(N):
    assert np.max(np.abs(generator_apply(LindbladSpec(N, N + 1, 1), thermal_distribution(N, 256)))) < 1e-13


def test_single_level_rates():
    assert generator_apply(LindbladSpec(1, 0, 1), np.eye(4)[0]).tolist() == [-1, 1, 0, 0]
    assert generator_apply(LindbladSpec(0, 1, 1), np.eye(4)[1]).tolist() == [1, -1, 0, 0]


def test_loss_on_thermal():
    out = evolve(lindblad_from_kind(Loss(0.5, 0.2)), thermal_distribution(1.0, 256))
    assert total_variation(out, thermal_probs(0.6, 256)) < 1e-6


def test_thermal_output_closed_forms():
    for eta, N, nb in [(0.5, 0.2, 1.0), (0.3, 1.5, 0.7), (0.9, 0.0, 2.0)]:
        assert thermal_output_nbar(params_from_kind(Loss(eta, N)), nb) == pytest.approx(eta * nb + (1 - eta) * N, rel=1e-13)
    assert thermal_output_nbar(params_from_kind(Amplifier(2.0, 0.0)), 0.0) == pytest.approx(1.0, rel=1e-14)
    assert thermal_output_nbar(params_from_kind(Additive(0.4)), 1.3) == pytest.approx(1.7, rel=1e-14)


def test_vacuum_through_amplifier():
    assert abs(output_entropy(lindblad_from_kind(Amplifier(2, 0)), np.eye(256)[0]).value - g(1)) < 1e-6


def test_thermal_output_entropy_matches_closed_form():
    rng = np.random.default_rng(199)
    for kind in (Loss(0.4, 0.5), Amplifier(1.3, 0.2), Additive(0.6)):
        nb = float(rng.uniform(0.2, 1.0))
        est = output_entropy(lindblad_from_kind(kind), thermal_distribution(nb, 256))
        assert abs(est.value - g(thermal_output_nbar(params_from_kind(kind), nb))) < 1e-6


def test_derivative_zero_for_stationary_thermal():
    assert abs(entropy_derivative_at_zero(LindbladSpec(0.8, 1.8, 1), thermal_distribution(0.8, 256))) < 1e-10


def test_derivative_against_central_fd_at_h_1e5():
    p = thermal_distribution(0.6, 256)
    s = LindbladSpec(0.9, 0.4, 1.0)
    exact = entropy_derivative_at_zero(s, p)
    assert entropy_derivative_fd(s, p, h=1e-5) == pytest.approx(exact, rel=1e-4)


# -- critical points ------------------------------------------------------


def test_constant_ratios_give_thermal():
    z = 0.3
    d = distribution_from_ratios(np.full(399, z), 400)
    assert total_variation(d, thermal_probs(z / (1 - z), 400)) < 1e-14


def test_amplifier_geometric_point_residual():
    pts = find_critical_points(1.0, 0.0, g(1), grid=(40, 40))
    geo = pts[0]
    assert abs(geo.z0 - 0.5) < 1e-12
    assert np.max(np.abs(master_residual(geo.ratios))) < 1e-10


def test_amplifier_first_superexponential_point_frozen():
    pts = find_critical_points(1.0, 0.0, g(1))
    se = [p for p in pts if p.branch == SUPEREXPONENTIAL]
    assert len(se) >= 150
    first = se[0]
    assert first.grid_index == (0, 231)
    assert first.mu == pytest.approx(-3.5573049591110366, abs=1e-12)
    assert first.z0 == pytest.approx(0.9032870544796459, rel=1e-8)
    assert first.ratios.log_z.size == 7
    assert first.entropy_rate == pytest.approx(2.158992636553484, rel=1e-6)


# -- verification helpers -------------------------------------------------


def test_local_search_from_thermal_stays():
    res = local_search_min_entropy(lindblad_from_kind(Amplifier(1.5, 0)), g(1), 48, 30, seed=0, init="thermal")
    assert abs(res.output_entropy - res.baseline) < 1e-8


def test_local_search_pure_loss_converges():
    res = local_search_min_entropy(lindblad_from_kind(Loss(0.7, 0)), g(1), 64, 400, seed=3, gradient="adjoint")
    assert abs(res.gap) < 1e-6


def test_local_search_amplifier_stays_above():
    res = local_search_min_entropy(lindblad_from_kind(Amplifier(1.5, 0)), g(1), 64, 400, seed=3, gradient="adjoint")
    assert res.gap >= -1e-7


def test_dense_diagonal_input_stays_diagonal():
    p = np.r_[np.sort(np.random.default_rng(3).dirichlet(np.ones(8)))[::-1], np.zeros(8)]
    spec = lindblad_from_kind(Loss(0.6, 0.1))
    out = dense_evolve(spec, DenseState.from_diagonal(p))
    assert np.max(np.abs(out - np.diag(np.diag(out)))) < 1e-12
    assert total_variation(np.diag(out).real, evolve(spec, p, max_tail=None).probs) < 1e-9


def test_dense_superposition_is_a_state():
    psi = np.zeros(16, dtype=complex)
    psi[:2] = 1 / math.sqrt(2)
    out = dense_evolve(LindbladSpec(0, 1, LN2), DenseState(np.outer(psi, psi.conj())))
    assert abs(np.trace(out) - 1) < 1e-10
    assert np.max(np.abs(out - out.conj().T)) < 1e-12
    assert np.linalg.eigvalsh(out).min() > -1e-10


def test_unsorted_diagonal_not_below_passive():
    rng = np.random.default_rng(395)
    spec = lindblad_from_kind(Loss(0.6, 0.1))
    for _ in range(20):
        p = np.r_[rng.dirichlet(np.ones(8)), np.zeros(8)]
        S_dense = von_neumann_entropy(dense_evolve(spec, DenseState.from_diagonal(p)))
        S_pass = shannon_entropy(evolve(spec, passive_rearrange(p), max_tail=None), max_tail=math.inf)
        assert S_dense - S_pass >= -1e-9


def test_divergence_leading_ratio_at_smallest_step():
    tab = check_finite_support_divergence(LindbladSpec(1.0, 0.0, 1.0), 2)
    assert tab.dt[-1] == 1e-8
    assert abs(tab.leading_ratio - 1.0) < 0.1


def test_discretization_loss_chain():
    spec = lindblad_from_kind(Loss(0.5, 0.0))
    tab = check_discretization(spec, g(1), 10)
    dt = spec.t / 10
    for k, nb in enumerate(tab.nbar, start=1):
        assert nb == pytest.approx(math.exp(-k * dt), rel=1e-12)
    assert check_discretization(spec, g(1), 20).max_composition_tv < 1e-9


# -- contravariant --------------------------------------------------------


@pytest.mark.parametrize("kappa", [1.1, 3.0, 10.0])
def test_partner_is_physical(kappa):
    P = covariant_partner(kappa)
    assert P.y >= abs(P.tau - 1.0)


def test_quantum_limited_decomposition_values():
    dec = decompose(ContravariantParams(-1.0, 2.0))
    assert (dec.eta, dec.kappa) == (1.0, 2.0)


def test_lossy_decomposition_values():
    dec = decompose(ContravariantParams(-0.5, 2.0))
    assert dec.kappa == pytest.approx(1.75, abs=1e-15)
    assert dec.eta == pytest.approx(2.0 / 3.0, abs=1e-15)


@pytest.mark.parametrize("nbar, kappa", [(0.0, 2.0), (0.5, 1.5), (1.0, 3.0)])
def test_conjugator_on_thermal(nbar, kappa):
    P = ContravariantParams(1.0 - kappa, kappa)
    out = contravariant_output_entropy(P, thermal_distribution(nbar, 128), 384)
    assert abs(out.value - g((kappa - 1) * (nbar + 1))) < 1e-6


@pytest.mark.parametrize("kappa", [1.5, 2.0, 4.0])
def test_zero_entropy_minimum(kappa):
    assert min_output_entropy_contravariant(ContravariantParams(1.0 - kappa, kappa), 0.0) == pytest.approx(g(kappa - 1), abs=1e-12)


def test_minimum_example():
    assert abs(min_output_entropy_contravariant(ContravariantParams(-1, 2), g(1)) - g(2)) < 1e-6
