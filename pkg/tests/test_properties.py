import math

import numpy as np
from hypothesis import assume, given
from hypothesis import strategies as st

from bosonic_moe.channel import (
    Additive,
    Amplifier,
    ChannelParams,
    LindbladSpec,
    Loss,
    evolve,
    generator_apply,
    lindblad_from_kind,
    lindblad_from_params,
    params_from_kind,
    params_from_lindblad,
    thermal_output_nbar,
)
from bosonic_moe.contravariant import ContravariantParams, decompose, decomposition_residual
from bosonic_moe.critical import classify_seed, geometric_mu, h_func, iterate_recursion
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

rates = st.floats(0.0, 3.0)
nbars = st.floats(0.0, 4.0)
times = st.floats(0.01, 1.0)
seeds = st.integers(0, 2**32 - 1)


def kinds():
    return st.one_of(
        st.builds(Loss, st.floats(0.05, 0.95), st.floats(0.0, 2.0)),
        st.builds(Amplifier, st.floats(1.05, 2.0), st.floats(0.0, 1.0)),
        st.builds(Additive, st.floats(0.0, 1.0)),
    )


def prob_vectors(max_dim=40):
    return st.lists(st.floats(0.0, 1.0), min_size=1, max_size=max_dim).filter(lambda v: sum(v) > 1e-3).map(
        lambda v: np.asarray(v) / np.sum(v)
    )


@given(nbars)
def test_g_monotone_and_invertible(nbar):
    assert g(nbar + 0.1) > g(nbar)
    assert abs(g(g_inverse(g(nbar))) - g(nbar)) <= 1e-12 * max(1.0, g(nbar))


@given(prob_vectors())
def test_entropy_bounds(p):
    S = shannon_entropy(p)
    assert -1e-15 <= S <= math.log(p.size) + 1e-12


@given(prob_vectors())
def test_passive_rearrange_keeps_entropy_and_is_idempotent(p):
    q = passive_rearrange(p)
    assert np.all(np.diff(q.probs) <= 0)
    assert abs(shannon_entropy(q) - shannon_entropy(p)) < 1e-12
    assert np.array_equal(passive_rearrange(q).probs, q.probs)


@given(st.floats(0.05, 3.0), seeds)
def test_sampler_hits_entropy(S0, seed):
    p = sample_passive_with_entropy(S0, 256, seed)
    assert abs(shannon_entropy(p) - S0) <= 1e-10
    assert np.all(np.diff(p.probs) <= 0)


@given(rates, rates, prob_vectors(30))
def test_generator_conserves_mass_with_leak(gp, gm, p):
    p = np.pad(p, (0, 10))
    dp = generator_apply(LindbladSpec(gp, gm, 1.0), p)
    leak = gp * p.size * p[-1]
    assert abs(dp.sum() + leak) < 1e-12


@given(kinds())
def test_parameter_maps_agree(kind):
    a = params_from_kind(kind)
    b = params_from_lindblad(lindblad_from_kind(kind))
    assert math.isclose(a.tau, b.tau, rel_tol=1e-12)
    assert math.isclose(a.y, b.y, rel_tol=1e-10, abs_tol=1e-12)


@given(st.floats(0.05, 3.0), st.floats(0.0, 3.0))
def test_covariant_params_round_trip(tau, excess):
    P = ChannelParams(tau, abs(tau - 1.0) + excess)
    assume(abs(tau - 1.0) > 1e-3 or excess > 1e-3)
    Q = params_from_lindblad(lindblad_from_params(P))
    assert math.isclose(Q.tau, P.tau, rel_tol=1e-10)
    assert math.isclose(Q.y, P.y, rel_tol=1e-9, abs_tol=1e-12)


@given(kinds(), st.floats(0.0, 1.5))
def test_thermal_maps_to_thermal(kind, nbar):
    spec = lindblad_from_kind(kind)
    nb_out = thermal_output_nbar(params_from_kind(kind), nbar)
    assume(nb_out < 4.0)
    out = evolve(spec, thermal_distribution(nbar, 256))
    assert total_variation(out, thermal_probs(nb_out, 256)) < 1e-8


@given(rates, rates, times, times, seeds)
def test_semigroup(gp, gm, t1, t2, seed):
    assume(gp + gm > 0.05 and gp * (t1 + t2) < 1.0)
    p = sample_passive_with_entropy(1.0, 128, seed)
    s = LindbladSpec(gp, gm, 1.0)
    a = evolve(s.with_time(t2), evolve(s.with_time(t1), p))
    b = evolve(s.with_time(t1 + t2), p)
    assert total_variation(a, b) < 1e-9


@given(rates, rates, times, seeds)
def test_evolution_keeps_passivity(gp, gm, t, seed):
    assume(gp * t < 1.0)
    p = sample_passive_with_entropy(1.0, 128, seed)
    out = evolve(LindbladSpec(gp, gm, t), p, max_tail=None)
    assert np.all(np.diff(out.probs) <= 1e-13)


@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.02, 0.98), st.floats(-3.0, 3.0))
def test_trichotomy(gp, gm, z0, dmu):
    assume(gp + gm > 0.05)
    mu = geometric_mu(gp, gm, z0) + dmu
    assume(abs(h_func(z0, gp, gm) - (gm - gp - mu)) > 1e-9)
    seq = iterate_recursion(z0, mu, gp, gm, 200)
    assert seq.trend == classify_seed(z0, mu, gp, gm)


@given(st.floats(0.01, 5.0), st.floats(0.0, 5.0))
def test_contravariant_round_trip(a, excess):
    P = ContravariantParams(-a, 1.0 + a + excess)
    dec = decompose(P)
    assert decomposition_residual(P, dec) < 1e-12 * max(1.0, P.y)
    assert 0 < dec.eta <= 1 and dec.kappa > 1
