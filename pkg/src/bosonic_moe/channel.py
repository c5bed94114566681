"""Gauge-covariant channels as birth-death semigroups on photon statistics.

A channel is described either by its Lindblad rates ``(gamma_plus,
gamma_minus, t)`` or by its characteristic-function parameters ``(tau, y)``.
On Fock-diagonal states the generator is the tridiagonal birth-death matrix

    dp_n/dt = gp [n p_{n-1} - (n+1) p_n] + gm [(n+1) p_{n+1} - n p_n].

The upward flux out of the top level, ``gp * dim * p_{dim-1}``, is not
reflected back; it is integrated as an extra absorbing state and added to
``tail_bound``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Union

import numpy as np
from scipy import linalg, stats

from . import _kernels
from ._accel import resolve
from .errors import ConfigurationError, NumericalError, TruncationError
from .fock import (
    MAX_TAIL,
    FockDistribution,
    as_distribution,
    entropy_budget,
    g,
    shannon_entropy,
)

CLAMP_TOL = 1e-12
RK_ATOL = 1e-12
DENSE_MAX_DIM = 512
DIVERGENT = math.inf


@dataclass(frozen=True)
class LindbladSpec:
    """Rates and duration of the semigroup ``exp(t (gp L+ + gm L-))``."""

    gamma_plus: float
    gamma_minus: float
    t: float

    def __post_init__(self):
        for name in ("gamma_plus", "gamma_minus", "t"):
            v = float(getattr(self, name))
            if not (v >= 0.0) or not math.isfinite(v):
                raise ConfigurationError(f"{name} must be finite and >= 0, got {v!r}")
            object.__setattr__(self, name, v)

    @property
    def is_identity(self) -> bool:
        """Zero time, or no rates at all (allowed, but does nothing)."""
        return self.t == 0.0 or (self.gamma_plus == 0.0 and self.gamma_minus == 0.0)

    def with_time(self, t: float) -> "LindbladSpec":
        return LindbladSpec(self.gamma_plus, self.gamma_minus, t)


@dataclass(frozen=True)
class ChannelParams:
    """Characteristic-function parameters: ``chi -> chi(sqrt(tau) xi) exp(-y|xi|^2/2)``.

    Physical (completely positive) exactly when ``y >= |tau - 1|``.
    """

    tau: float
    y: float

    def __post_init__(self):
        tau, y = float(self.tau), float(self.y)
        if not (math.isfinite(tau) and math.isfinite(y)):
            raise ConfigurationError("tau and y must be finite")
        if y < 0:
            raise ConfigurationError(f"y must be >= 0, got {y}")
        if y < abs(tau - 1.0) - 1e-12 * max(1.0, abs(tau)):
            raise ConfigurationError(f"not a physical channel: y={y} < |tau - 1|={abs(tau - 1.0)}")
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "y", y)

    @property
    def covariant(self) -> bool:
        return self.tau > 0


@dataclass(frozen=True)
class Loss:
    eta: float
    N: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.eta < 1.0):
            raise ConfigurationError(f"loss needs 0 < eta < 1, got {self.eta}")
        if not (self.N >= 0.0):
            raise ConfigurationError(f"thermal noise N must be >= 0, got {self.N}")


@dataclass(frozen=True)
class Amplifier:
    kappa: float
    N: float = 0.0

    def __post_init__(self):
        if not (self.kappa > 1.0) or not math.isfinite(self.kappa):
            raise ConfigurationError(f"amplifier needs kappa > 1, got {self.kappa}")
        if not (self.N >= 0.0):
            raise ConfigurationError(f"thermal noise N must be >= 0, got {self.N}")


@dataclass(frozen=True)
class Additive:
    N: float

    def __post_init__(self):
        if not (self.N >= 0.0) or not math.isfinite(self.N):
            raise ConfigurationError(f"additive noise N must be >= 0, got {self.N}")


ChannelKind = Union[Loss, Amplifier, Additive]


def lindblad_from_kind(kind: ChannelKind) -> LindbladSpec:
    if isinstance(kind, Loss):
        return LindbladSpec(kind.N, kind.N + 1.0, -math.log(kind.eta))
    if isinstance(kind, Amplifier):
        return LindbladSpec(kind.N + 1.0, kind.N, math.log(kind.kappa))
    if isinstance(kind, Additive):
        return LindbladSpec(1.0, 1.0, kind.N)
    raise TypeError(f"unknown channel kind {kind!r}")


def params_from_kind(kind: ChannelKind) -> ChannelParams:
    if isinstance(kind, Loss):
        return ChannelParams(kind.eta, (1.0 - kind.eta) * (2.0 * kind.N + 1.0))
    if isinstance(kind, Amplifier):
        return ChannelParams(kind.kappa, (kind.kappa - 1.0) * (2.0 * kind.N + 1.0))
    if isinstance(kind, Additive):
        return ChannelParams(1.0, 2.0 * kind.N)
    raise TypeError(f"unknown channel kind {kind!r}")


def params_from_lindblad(spec: LindbladSpec) -> ChannelParams:
    """``tau = exp(-(gm - gp) t)`` and ``y = (1 - tau)(gm + gp)/(gm - gp)``."""
    d = spec.gamma_minus - spec.gamma_plus
    s = spec.gamma_minus + spec.gamma_plus
    x = d * spec.t
    tau = math.exp(-x)
    if x == 0.0:
        y = s * spec.t
    else:
        y = -math.expm1(-x) / d * s
    return ChannelParams(tau, max(y, abs(tau - 1.0)))


def kind_from_params(params: ChannelParams) -> ChannelKind:
    """Inverse of ``params_from_kind`` for covariant channels."""
    tau, y = params.tau, params.y
    if tau <= 0:
        raise ConfigurationError("contravariant parameters have no birth-death representation")
    if tau == 1.0:
        return Additive(y / 2.0)
    N = max(0.0, (y / abs(1.0 - tau) - 1.0) / 2.0)
    return Loss(tau, N) if tau < 1.0 else Amplifier(tau, N)


def lindblad_from_params(params: ChannelParams) -> LindbladSpec:
    return lindblad_from_kind(kind_from_params(params))


def thermal_output_nbar(params: ChannelParams, nbar: float) -> float:
    """Mean photon number of the (thermal) output for a thermal input."""
    if nbar < 0:
        raise ValueError("nbar must be >= 0")
    out = (params.tau * (2.0 * nbar + 1.0) + params.y - 1.0) / 2.0
    if out < -1e-12:
        raise ConfigurationError(f"negative output photon number {out:.3e}: invalid parameters")
    return max(0.0, out)


# -- generator and evolution ----------------------------------------------


def generator_apply(spec: LindbladSpec, p) -> np.ndarray:
    """Time derivative of ``p`` under the truncated birth-death generator."""
    probs = np.asarray(getattr(p, "probs", p), dtype=float)
    up, down = _kernels.birth_death_rates(spec.gamma_plus, spec.gamma_minus, probs.size)
    y = np.append(probs, 0.0)
    return _kernels.rhs(y, up, down, backend="numpy")[:-1]


def generator_matrix(gamma_plus: float, gamma_minus: float, dim: int) -> np.ndarray:
    """``(dim+1) x (dim+1)`` generator; the last row collects leaked mass."""
    up, down = _kernels.birth_death_rates(gamma_plus, gamma_minus, dim)
    G = np.zeros((dim + 1, dim + 1))
    idx = np.arange(dim)
    G[idx, idx] = -(up + down)
    G[idx[1:], idx[:-1]] = up[:-1]
    G[idx[:-1], idx[1:]] = down[1:]
    G[dim, dim - 1] = up[-1]
    return G


@lru_cache(maxsize=64)
def _propagator(gamma_plus: float, gamma_minus: float, t: float, dim: int) -> np.ndarray:
    P = linalg.expm(t * generator_matrix(gamma_plus, gamma_minus, dim))
    P.flags.writeable = False
    return P


def _finish(raw: np.ndarray, tail_in: float, max_tail: float | None) -> FockDistribution:
    dim = raw.size - 1
    probs = raw[:dim].copy()
    worst = probs.min()
    if worst < -CLAMP_TOL:
        raise NumericalError(f"evolution produced probability {worst:.3e} below -{CLAMP_TOL:.0e}")
    probs[probs < 0] = 0.0
    leak = max(0.0, float(raw[dim]))
    tail = tail_in + leak
    if max_tail is not None and tail > max_tail:
        raise TruncationError(
            f"mass beyond the cutoff {tail:.3e} exceeds {max_tail:.1e}; increase dim (now {dim})",
            tail,
            dim,
        )
    # rounding can push the window mass a hair above 1
    total = math.fsum(probs)
    if total > 1.0:
        probs /= total
    return FockDistribution(probs, tail)


def evolve(
    spec: LindbladSpec,
    p,
    engine: str = "auto",
    backend: str | None = None,
    max_tail: float | None = MAX_TAIL,
) -> FockDistribution:
    """Return ``p(t)`` for the semigroup described by ``spec``.

    ``engine`` is ``"expm"`` (dense exponential, cached per spec and dim),
    ``"rk"`` (adaptive Dormand-Prince, absolute local error 1e-12) or
    ``"auto"`` (expm up to dim 512).  ``backend`` selects the numba or numpy
    kernel for the RK engine.
    """
    dist = as_distribution(p)
    if dist.tail_bound > MAX_TAIL:
        raise TruncationError(f"input tail_bound {dist.tail_bound:.3e} too large", dist.tail_bound, dist.dim)
    if spec.is_identity:
        return dist
    dim = dist.dim
    y0 = np.append(dist.probs, 0.0)
    if engine == "auto":
        engine = "expm" if dim <= DENSE_MAX_DIM else "rk"
    if engine == "expm":
        if dim > DENSE_MAX_DIM:
            raise ConfigurationError(f"dense engine limited to dim <= {DENSE_MAX_DIM}")
        raw = _propagator(spec.gamma_plus, spec.gamma_minus, spec.t, dim) @ y0
    elif engine == "rk":
        up, down = _kernels.birth_death_rates(spec.gamma_plus, spec.gamma_minus, dim)
        h0 = 0.5 / max(1e-300, float(np.max(up + down)))
        raw, _, _, ok = _kernels.dopri5(y0, up, down, spec.t, RK_ATOL, h0, 10_000_000, resolve(backend))
        if not ok:
            raise NumericalError("adaptive integrator exceeded its step budget")
    else:
        raise ValueError(f"unknown engine {engine!r}")
    return _finish(raw, dist.tail_bound, max_tail)


def pure_loss_binomial(p, eta: float) -> np.ndarray:
    """Pure-loss output by the binomial thinning rule, independent of the generator.

    ``p_out(m) = sum_{n >= m} p_n C(n, m) eta^m (1 - eta)^(n - m)``.
    """
    probs = np.asarray(getattr(p, "probs", p), dtype=float)
    n = np.arange(probs.size)
    T = stats.binom.pmf(n[:, None], n[None, :], eta)  # T[m, n]
    return T @ probs


class EntropyEstimate(NamedTuple):
    """Window entropy of an evolved state and its truncation error bound."""

    value: float
    budget: float
    tail_bound: float


def output_entropy(spec: LindbladSpec, p, engine: str = "auto", max_tail: float | None = MAX_TAIL) -> EntropyEstimate:
    out = evolve(spec, p, engine=engine, max_tail=max_tail)
    S = shannon_entropy(out, max_tail=math.inf)
    return EntropyEstimate(S, entropy_budget(out.tail_bound, out.dim), out.tail_bound)


def thermal_output_entropy(spec: LindbladSpec, nbar: float) -> float:
    """Closed-form entropy of the channel output for a thermal input."""
    return g(thermal_output_nbar(params_from_lindblad(spec), nbar))


def thermal_entropy_rate(spec: LindbladSpec, nbar: float) -> float:
    """``d/dt g(nbar(t))`` at t=0 along the semigroup, in closed form."""
    gp, gm = spec.gamma_plus, spec.gamma_minus
    dn = gp * (nbar + 1.0) - gm * nbar
    if nbar == 0.0:
        return DIVERGENT if gp > 0 else 0.0
    return math.log1p(1.0 / nbar) * dn


def finite_support(p) -> int | None:
    """Last occupied level if every entry above it is exactly zero, else None."""
    probs = np.asarray(getattr(p, "probs", p), dtype=float)
    nz = np.flatnonzero(probs)
    if nz.size == 0:
        raise ValueError("empty distribution")
    last = int(nz[-1])
    return last if last < probs.size - 1 else None


def entropy_derivative_at_zero(spec: LindbladSpec, p) -> float:
    """Initial rate of change of the output entropy, ``-sum (1 + ln p_n) p_n'(0)``.

    Returns ``DIVERGENT`` (+inf) when ``gamma_plus > 0`` and the state has
    finite support strictly inside the window: the level just above the
    support is populated at rate ``gp (N+1) p_N`` and ``-x ln x`` has
    infinite slope at zero.  Zero detection is exact.
    """
    probs = np.asarray(getattr(p, "probs", p), dtype=float)
    if spec.gamma_plus > 0 and finite_support(probs) is not None:
        return DIVERGENT
    dp = generator_apply(spec, probs)
    pos = probs > 0
    return -math.fsum((1.0 + np.log(probs[pos])) * dp[pos])


def entropy_derivative_fd(spec: LindbladSpec, p, h: float | None = None, scheme: str = "central") -> float:
    """Finite-difference estimate of ``d/dt S(Phi_t p)`` at ``t = 0``.

    ``"central"`` uses the formal backward propagator ``exp(-h G)`` of the
    truncated generator; it is not a channel, and a state whose backward
    image leaves the simplex raises NumericalError.  ``"forward"`` is the
    second-order one-sided stencil ``(-3 S(0) + 4 S(h) - S(2h)) / 2h``.
    """
    dist = as_distribution(p)
    if h is None:
        h = 1e-5 / max(1.0, spec.gamma_plus + spec.gamma_minus)
    y0 = np.append(dist.probs, 0.0)

    def S_at(t):
        raw = _propagator(spec.gamma_plus, spec.gamma_minus, t, dist.dim) @ y0
        return shannon_entropy(_finish(raw, dist.tail_bound, None), max_tail=math.inf)

    if scheme == "central":
        return (S_at(h) - S_at(-h)) / (2.0 * h)
    if scheme == "forward":
        return (-3.0 * shannon_entropy(dist) + 4.0 * S_at(h) - S_at(2.0 * h)) / (2.0 * h)
    raise ValueError(f"unknown scheme {scheme!r}")
