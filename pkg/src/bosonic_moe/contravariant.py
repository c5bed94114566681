"""Phase-conjugating (gauge-contravariant) channels.

A contravariant channel acts on characteristic functions as
``chi(xi) -> chi(-sqrt|tau| xi*) exp(-y |xi|^2 / 2)`` with ``tau < 0``.  It
factors as a pure-loss channel ``E_eta`` followed by the quantum-limited
conjugator with gain ``kappa``; on Fock-diagonal inputs the conjugator's
output has the same spectrum as the covariant channel with
``tau = kappa - 1`` and ``y = kappa``, so every entropy here is computed
through that covariant partner.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .channel import (
    ChannelParams,
    EntropyEstimate,
    LindbladSpec,
    evolve,
    lindblad_from_params,
    output_entropy,
    thermal_output_nbar,
)
from .errors import ConfigurationError, NumericalError, TruncationError
from .fock import (
    FockDistribution,
    as_distribution,
    g,
    g_inverse,
    sample_passive_with_entropy,
    shannon_entropy,
    thermal_distribution,
)
from .verify import VerificationReport, _map, _reduce, trial_seed

RESIDUAL_TOL = 1e-12


@dataclass(frozen=True)
class ContravariantParams:
    tau: float
    y: float

    def __post_init__(self):
        tau, y = float(self.tau), float(self.y)
        if not (math.isfinite(tau) and math.isfinite(y)):
            raise ConfigurationError("tau and y must be finite")
        if not tau < 0:
            raise ConfigurationError(f"contravariant channels need tau < 0, got {tau}")
        if y < abs(tau - 1.0) - 1e-12 * max(1.0, abs(tau)):
            raise ConfigurationError(f"not a physical channel: requires y >= |tau - 1| = {abs(tau - 1.0)}, got y={y}")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "y", y)

    @property
    def quantum_limited(self) -> bool:
        return abs(self.y - (1.0 - self.tau)) <= 1e-12 * max(1.0, self.y)


@dataclass(frozen=True)
class ConjugatorDecomposition:
    """``E_eta`` (pure loss) followed by the quantum-limited conjugator of gain ``kappa``."""

    eta: float
    kappa: float

    def __post_init__(self):
        if not (0.0 < self.eta <= 1.0):
            raise ConfigurationError(f"eta must lie in (0, 1], got {self.eta}")
        if not self.kappa > 1.0:
            raise ConfigurationError(f"kappa must be > 1, got {self.kappa}")

    def recompose(self) -> tuple[float, float]:
        """``(tau, y) = (eta (1 - kappa), (kappa - 1)(1 - eta) + kappa)``."""
        k1 = self.kappa - 1.0
        return self.eta * -k1, k1 * (1.0 - self.eta) + self.kappa


def covariant_partner(kappa: float) -> ChannelParams:
    """Covariant channel with the conjugator's output spectrum: ``(kappa - 1, kappa)``."""
    kappa = float(kappa)
    if not kappa > 1.0:
        raise ConfigurationError(f"kappa must be > 1, got {kappa}")
    if kappa - 1.0 < 1e-9:
        warnings.warn(f"kappa={kappa} is at the attenuation-to-vacuum limit", RuntimeWarning, stacklevel=2)
    return ChannelParams(kappa - 1.0, kappa)


def decompose(params: ContravariantParams) -> ConjugatorDecomposition:
    """Closed-form ``(eta, kappa)``.

    From ``eta (kappa - 1) = |tau|`` and ``y = 2 kappa - 1 - |tau|``:
    ``kappa = (y + 1 + |tau|)/2`` and ``eta = 2|tau| / (y - 1 + |tau|)``.
    """
    a = -params.tau
    kappa = 0.5 * (params.y + 1.0 + a)
    denom = params.y - 1.0 + a
    eta = 1.0 if params.quantum_limited else min(1.0, 2.0 * a / denom)
    dec = ConjugatorDecomposition(eta, kappa)
    t, y = dec.recompose()
    res = max(abs(t - params.tau), abs(y - params.y))
    if res > RESIDUAL_TOL * max(1.0, abs(params.tau), params.y):
        raise NumericalError(f"decomposition residual {res:.2e} too large")
    return dec


def decomposition_residual(params: ContravariantParams, dec: ConjugatorDecomposition) -> float:
    t, y = dec.recompose()
    return max(abs(t - params.tau), abs(y - params.y))


def _loss_spec(eta: float) -> LindbladSpec:
    return LindbladSpec(0.0, 1.0, -math.log(eta))


def contravariant_output_entropy(params: ContravariantParams, p, dim: int | None = None) -> EntropyEstimate:
    """Output entropy for a Fock-diagonal input.

    ``p`` is zero-padded to ``dim`` levels so the amplifying partner has room.
    """
    dist = as_distribution(p)
    dim = dist.dim if dim is None else int(dim)
    if dim < dist.dim:
        raise ValueError("dim smaller than the input")
    probs = np.pad(dist.probs, (0, dim - dist.dim))
    work = FockDistribution(probs, dist.tail_bound)
    dec = decompose(params)
    if dec.eta < 1.0:
        work = evolve(_loss_spec(dec.eta), work)
    spec = lindblad_from_params(covariant_partner(dec.kappa))
    return output_entropy(spec, work)


def min_output_entropy_contravariant(params: ContravariantParams, S0: float) -> float:
    """Conjectured minimum: thermal input through the loss stage then the partner."""
    if S0 < 0:
        raise ConfigurationError("S0 must be >= 0")
    dec = decompose(params)
    n1 = dec.eta * g_inverse(S0)
    n2 = thermal_output_nbar(covariant_partner(dec.kappa), g_inverse(g(n1)))
    return g(n2)


def heterodyne_output_nbar(nbar: float, gain: float) -> float:
    """Mean photon number of the measure-and-prepare map on a thermal input.

    Heterodyne outcome ``alpha`` has density
    ``Q(alpha) = exp(-|alpha|^2/(nbar+1)) / (pi (nbar+1))``; preparing the
    coherent state ``|-sqrt(gain) alpha*>`` gives ``gain |alpha|^2`` photons.
    Evaluated by quadrature so the gain convention can be checked against
    the closed form ``(kappa - 1)(nbar + 1)``.
    """
    s = nbar + 1.0

    def integrand(r):
        return gain * r * r * math.exp(-r * r / s) / (math.pi * s) * 2.0 * math.pi * r

    val, _ = integrate.quad(integrand, 0.0, math.inf, epsabs=1e-13, epsrel=1e-12)
    return val


def verify_contravariant(
    params: ContravariantParams,
    S0: float,
    trials: int,
    seed: int,
    dim: int = 256,
    input_dim: int | None = None,
    workers: int | None = None,
) -> VerificationReport:
    """Monte-Carlo check that no sampled passive input beats the thermal one.

    Trial 0 is the thermal input itself; the others are sampled passive
    states on ``input_dim`` levels (default ``dim // 2``) padded to ``dim``.
    """
    if not (S0 > 0):
        raise ConfigurationError("S0 must be > 0")
    input_dim = dim // 2 if input_dim is None else input_dim
    nbar = g_inverse(S0)
    closed = min_output_entropy_contravariant(params, S0)
    th = contravariant_output_entropy(params, thermal_distribution(nbar, input_dim), dim)

    def one(i):
        s = trial_seed(seed, i)
        try:
            if i == 0:
                p = thermal_distribution(nbar, input_dim)
            else:
                p = sample_passive_with_entropy(S0, input_dim, s)
            out = contravariant_output_entropy(params, p, dim)
        except (TruncationError, NumericalError):
            return None
        base = min_output_entropy_contravariant(params, shannon_entropy(p, max_tail=math.inf))
        return out.value - base, out.budget + 1e-12, s, out.value

    res = _map(one, range(trials), workers)
    min_gap, argmin, viol, budget, excl, _ = _reduce(res)
    return VerificationReport(
        "contravariant",
        params,
        float(S0),
        int(trials),
        min_gap,
        argmin,
        viol,
        max(budget, th.budget),
        excluded=excl,
        thermal_self_gap=th.value - closed,
        baseline_closed_form=closed,
        baseline_evolved=th.value,
        extra={"dim": dim, "input_dim": input_dim},
    )
