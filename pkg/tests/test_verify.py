import math

import numpy as np
import pytest

from bosonic_moe.channel import Additive, Amplifier, LindbladSpec, Loss, lindblad_from_kind
from bosonic_moe.errors import ConfigurationError
from bosonic_moe.fock import g, thermal_distribution
from bosonic_moe.verify import (
    DenseState,
    check_discretization,
    check_finite_support_divergence,
    check_passive_reduction,
    dense_diagonal_agreement,
    dense_evolve,
    haar_unitary,
    local_search_min_entropy,
    random_dense_state,
    trial_seed,
    verify_conjecture_finite,
    verify_conjecture_infinitesimal,
    von_neumann_entropy,
)

LOSS = lindblad_from_kind(Loss(0.7, 0))
AMP = lindblad_from_kind(Amplifier(1.5, 0))
ADD = lindblad_from_kind(Additive(0.3))


def test_trial_seed_is_stable():
    assert trial_seed(1, 2) == trial_seed(1, 2)
    assert trial_seed(1, 2) != trial_seed(1, 3)
    assert trial_seed(1, 2) != trial_seed(2, 2)


@pytest.mark.parametrize("spec", [LOSS, AMP, ADD])
def test_finite_check_small(spec):
    rep = verify_conjecture_finite(spec, g(1), 40, seed=5)
    assert rep.violations == 0 and rep.status == "PASS"
    assert abs(rep.thermal_self_gap) < 1e-6
    assert rep.min_gap > -rep.entropy_error_budget
    d = rep.to_dict()
    assert d["status"] == "PASS" and d["trials"] == 40


def test_finite_check_independent_of_workers():
    a = verify_conjecture_finite(LOSS, g(1), 30, seed=9, workers=1)
    b = verify_conjecture_finite(LOSS, g(1), 30, seed=9, workers=3)
    assert a.to_dict() == b.to_dict()


def test_finite_rejects_zero_entropy():
    with pytest.raises(ConfigurationError):
        verify_conjecture_finite(LOSS, 0.0, 5, 0)


def test_infinitesimal_check():
    rep = verify_conjecture_infinitesimal(AMP, g(1), 40, seed=2)
    assert rep.violations == 0 and abs(rep.thermal_self_gap) < 1e-8
    rep = verify_conjecture_infinitesimal(AMP, g(1), 20, seed=2, full_support=False)
    assert rep.divergent > 0


def test_local_search_does_not_beat_thermal():
    for gradient in ("fd", "adjoint"):
        res = local_search_min_entropy(ADD.with_time(0.2), g(1), 32, 60, seed=1, gradient=gradient)
        assert res.gap > -1e-9
        assert res.history[0] >= res.history[-1]


def test_local_search_thermal_start_is_stationary():
    res = local_search_min_entropy(LOSS, g(1), 32, 20, seed=0, init="thermal", gradient="adjoint")
    assert abs(res.gap) < 1e-9


def test_haar_unitary_is_unitary():
    U = haar_unitary(np.random.default_rng(0), 6)
    assert np.allclose(U @ U.conj().T, np.eye(6), atol=1e-12)


def test_random_dense_state_spectrum():
    rho, spec = random_dense_state(np.random.default_rng(1), 8, 4)
    ev = np.sort(np.linalg.eigvalsh(rho.matrix))[::-1]
    assert np.allclose(ev, np.sort(spec)[::-1], atol=1e-12)
    assert von_neumann_entropy(rho.matrix) == pytest.approx(-np.sum(spec[spec > 0] * np.log(spec[spec > 0])), abs=1e-10)


def test_dense_state_validation():
    with pytest.raises(ValueError):
        DenseState(np.diag([0.5, 0.6]))
    with pytest.raises(ValueError):
        dense_evolve(LOSS, DenseState.from_diagonal(np.r_[1.0, np.zeros(40)]))


def test_dense_and_diagonal_agree():
    p = thermal_distribution(0.3, 16, max_tail=None).probs
    for spec in (LOSS, AMP, ADD):
        assert dense_diagonal_agreement(spec, p) < 1e-9


def test_dense_evolution_keeps_coherence_decay():
    # a coherent superposition of |0> and |1> under loss loses purity
    psi = np.zeros(8, dtype=complex)
    psi[:2] = 1 / math.sqrt(2)
    rho = DenseState(np.outer(psi, psi.conj()))
    out = dense_evolve(LOSS, rho)
    assert abs(out[0, 1]) == pytest.approx(0.5 * math.sqrt(0.7), rel=1e-10)


def test_passive_reduction_small():
    rep = check_passive_reduction(lindblad_from_kind(Loss(0.6, 0.1)), dim=10, trials=20, seed=0)
    assert rep.violations == 0 and rep.extra["strict_violations"] == 0
    assert abs(rep.thermal_self_gap) < 1e-9


def test_divergence_table():
    tab = check_finite_support_divergence(LindbladSpec(1, 0, 1), 3)
    assert tab.strictly_increasing
    assert len(tab.rows) == 7
    assert 0.5 < tab.leading_ratio < 2


def test_discretization_chain():
    tab = check_discretization(AMP, g(1), 5)
    assert tab.max_entropy_error < 1e-8 and tab.max_composition_tv < 1e-9
    assert tab.time[-1] == pytest.approx(AMP.t)
    with pytest.raises(ConfigurationError):
        check_discretization(AMP, g(1), 0)
