"""Photon-number distributions, thermal states and the entropy toolkit.

All entropies are in nats.  A distribution lives on the truncated window
``{0, ..., dim-1}`` and carries ``tail_bound``, an upper bound on the mass
that belongs beyond the cutoff.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .errors import ConfigurationError, TruncationError

NORM_TOL = 1e-12
MAX_TAIL = 1e-9
ENTROPY_TOL = 1e-10


@dataclass(frozen=True)
class FockDistribution:
    """Truncated probability vector over photon numbers."""

    probs: np.ndarray
    tail_bound: float = 0.0

    def __post_init__(self):
        p = np.array(self.probs, dtype=float, copy=True).ravel()
        if p.size == 0:
            raise ValueError("distribution needs at least one level")
        if not np.all(np.isfinite(p)):
            raise ValueError("non-finite probability")
        if np.any(p < 0):
            raise ValueError(f"negative probability {p.min():.3e}")
        tail = float(self.tail_bound)
        if not (tail >= 0):
            raise ValueError("tail_bound must be non-negative")
        total = math.fsum(p)
        if not (1.0 - tail - NORM_TOL <= total <= 1.0 + NORM_TOL):
            raise ValueError(
                f"probabilities sum to {total!r}, outside [1 - tail_bound, 1] "
                f"(tail_bound={tail:.3e})"
            )
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "tail_bound", tail)

    @property
    def dim(self) -> int:
        return self.probs.size

    @property
    def mass(self) -> float:
        return math.fsum(self.probs)

    def mean_photon_number(self) -> float:
        return float(np.dot(np.arange(self.dim), self.probs))


@dataclass(frozen=True)
class PassiveDistribution(FockDistribution):
    """Fock-diagonal state with non-increasing probabilities.

    ``support`` is the last occupied level ``N`` when every entry above it is
    exactly zero and ``N < dim - 1``; otherwise ``None`` (infinite support as
    far as the truncation window can tell).
    """

    support: int | None = field(init=False, default=None)

    def __post_init__(self):
        super().__post_init__()
        p = self.probs
        if np.any(np.diff(p) > 0):
            k = int(np.argmax(np.diff(p) > 0))
            raise ValueError(f"not passive: p[{k}] < p[{k + 1}]")
        nz = np.flatnonzero(p)
        last = int(nz[-1]) if nz.size else -1
        object.__setattr__(self, "support", last if last < p.size - 1 else None)


def as_distribution(p) -> FockDistribution:
    if isinstance(p, FockDistribution):
        return p
    return FockDistribution(np.asarray(p, dtype=float))


def total_variation(p, q) -> float:
    """Half the l1 distance, padding the shorter vector with zeros."""
    a = np.asarray(getattr(p, "probs", p), dtype=float)
    b = np.asarray(getattr(q, "probs", q), dtype=float)
    n = max(a.size, b.size)
    a = np.pad(a, (0, n - a.size))
    b = np.pad(b, (0, n - b.size))
    return 0.5 * float(np.abs(a - b).sum())


def _xlogx(p: np.ndarray) -> np.ndarray:
    # 0 ln 0 = 0
    return special.xlogy(p, p)


def shannon_entropy(p, max_tail: float = MAX_TAIL) -> float:
    """Return ``-sum p_n ln p_n`` with the convention ``0 ln 0 = 0``."""
    dist = as_distribution(p)
    if dist.tail_bound >= max_tail:
        raise TruncationError(
            f"tail_bound {dist.tail_bound:.3e} exceeds {max_tail:.1e}",
            dist.tail_bound,
            dist.dim,
        )
    return max(0.0, -math.fsum(_xlogx(dist.probs)))


def entropy_budget(tail_bound: float, dim: int) -> float:
    """Error bound on a window entropy caused by mass beyond the cutoff.

    Exact for a geometric tail with mean photon number at most ``dim``;
    a tail of mass ``t`` then carries entropy ``t * (g(nbar) - ln t)`` with
    ``g(nbar) <= 1 + ln(dim + 1)``.  A fixed 1e-12 covers summation rounding.
    """
    t = float(tail_bound)
    rounding = 1e-12
    if t <= 0.0:
        return rounding
    return t * (1.0 + math.log(dim + 1.0) - math.log(t)) + rounding


def g(nbar: float) -> float:
    """Entropy of the thermal state with mean photon number ``nbar``."""
    x = float(nbar)
    if x < 0 or math.isnan(x):
        raise ValueError(f"mean photon number must be >= 0, got {nbar!r}")
    if x == 0.0:
        return 0.0
    # (x+1)ln(x+1) - x ln x == ln(1+x) + x ln(1 + 1/x); for x < 1 split the
    # log so 1/x cannot overflow
    if x < 1.0:
        return math.log1p(x) + x * (math.log1p(x) - math.log(x))
    return math.log1p(x) + x * math.log1p(1.0 / x)


def g_prime(nbar: float) -> float:
    return math.log1p(1.0 / nbar) if nbar > 0 else math.inf


def g_inverse(S: float) -> float:
    """Mean photon number of the thermal state with entropy ``S``.

    Bisection on the bracket ``[0, max(1, e^S)]`` followed by Newton polish.
    """
    S = float(S)
    if S < 0 or math.isnan(S):
        raise ValueError(f"entropy must be >= 0, got {S!r}")
    if S == 0.0:
        return 0.0
    hi = max(1.0, math.exp(S))
    x = optimize.brentq(lambda n: g(n) - S, 0.0, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(3):
        gp = g_prime(x)
        step = (g(x) - S) / gp
        if not math.isfinite(step) or x - step <= 0:
            break
        x -= step
        if abs(step) <= 4e-16 * x:
            break
    return x


def thermal_probs(nbar: float, dim: int) -> np.ndarray:
    if nbar == 0.0:
        out = np.zeros(dim)
        out[0] = 1.0
        return out
    q = nbar / (1.0 + nbar)
    n = np.arange(dim)
    return np.exp(n * math.log(q) - math.log1p(nbar))


def thermal_tail(nbar: float, dim: int) -> float:
    if nbar == 0.0:
        return 0.0
    return math.exp(dim * math.log(nbar / (1.0 + nbar)))


def thermal_distribution(nbar: float, dim: int, max_tail: float | None = MAX_TAIL) -> PassiveDistribution:
    """Geometric distribution ``nbar^n / (1 + nbar)^(n+1)`` truncated at ``dim``."""
    nbar = float(nbar)
    if nbar < 0 or math.isnan(nbar):
        raise ValueError(f"mean photon number must be >= 0, got {nbar!r}")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    tail = thermal_tail(nbar, dim)
    if max_tail is not None and tail > max_tail:
        raise TruncationError(
            f"thermal state nbar={nbar} needs more than dim={dim} levels "
            f"(tail {tail:.3e} > {max_tail:.1e})",
            tail,
            dim,
        )
    return PassiveDistribution(thermal_probs(nbar, dim), tail)


def passive_rearrange(p) -> PassiveDistribution:
    """Sort the spectrum into non-increasing order."""
    dist = as_distribution(p)
    return PassiveDistribution(np.sort(dist.probs)[::-1], dist.tail_bound)


# entropy-constrained sampling ---------------------------------------------


def _log_entropy(logp: np.ndarray) -> float:
    mask = np.isfinite(logp)
    lp = logp[mask]
    return -float(np.sum(np.exp(lp) * lp))


def _tempered(logp: np.ndarray, beta: float) -> np.ndarray:
    """Log of ``p^beta`` renormalised; ``-inf`` entries stay ``-inf``."""
    mask = np.isfinite(logp)
    out = np.full_like(logp, -np.inf)
    scaled = beta * logp[mask]
    out[mask] = scaled - special.logsumexp(scaled)
    return out


def temper_to_entropy(p, S0: float, tol: float = ENTROPY_TOL) -> np.ndarray:
    """Return ``p^beta / sum(p^beta)`` with Shannon entropy ``S0``.

    Entropy of the escort family is non-increasing in ``beta`` (its
    derivative is ``-beta Var(ln p)``), so the exponent is found by bracketed
    root-finding on ``ln beta``.  Exact zeros stay zero.
    """
    probs = np.asarray(getattr(p, "probs", p), dtype=float)
    with np.errstate(divide="ignore"):
        logp = np.log(probs)
    support = int(np.isfinite(logp).sum())
    if S0 < 0:
        raise ConfigurationError("target entropy must be >= 0")
    if S0 == 0.0:
        out = np.zeros_like(probs)
        out[int(np.argmax(probs))] = 1.0
        return out
    if S0 >= math.log(support):
        raise ConfigurationError(f"entropy {S0} unreachable on a support of {support} levels")

    def resid(s):
        return _log_entropy(_tempered(logp, math.exp(s))) - S0

    lo, hi = -2.0, 2.0
    while resid(lo) < 0:
        lo -= 4.0
        if lo < -700:
            raise ConfigurationError(f"entropy {S0} unreachable (near-uniform limit)")
    while resid(hi) > 0:
        hi += 4.0
        if hi > 700:
            raise ConfigurationError(f"entropy {S0} unreachable (ties at the maximum)")
    s = optimize.brentq(resid, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    logq = _tempered(logp, math.exp(s))
    out = np.exp(logq)
    out /= math.fsum(out)
    err = abs(-math.fsum(_xlogx(out)) - S0)
    if err > tol:
        raise ConfigurationError(f"tempering missed the entropy target by {err:.2e}")
    return out


def _draw_passive(rng: np.random.Generator, dim: int, S0: float, full_support: bool) -> np.ndarray:
    """One random non-increasing vector (unnormalised is fine)."""
    n = np.arange(dim, dtype=float)
    families = 2 if full_support else 3
    family = int(rng.integers(families))
    if family == 0:
        k = int(rng.integers(2, 5))
        ratios = rng.uniform(0.1, 0.85, size=k)
        weights = rng.dirichlet(np.ones(k))
        v = (weights[:, None] * (1 - ratios[:, None]) * ratios[:, None] ** n[None, :]).sum(axis=0)
    elif family == 1:
        a = rng.uniform(0.05, 1.0)
        b = rng.uniform(0.5, 2.0)
        v = np.exp(-a * n**b)
    else:
        lo = min(dim, int(math.ceil(1.5 * math.exp(S0))) + 1)
        L = int(rng.integers(lo, max(lo, dim // 2) + 1))
        alpha = math.exp(rng.uniform(math.log(0.1), math.log(10.0)))
        v = np.zeros(dim)
        v[:L] = np.sort(rng.dirichlet(np.full(L, alpha)))[::-1]
    return np.maximum.accumulate(v[::-1])[::-1]


def sample_passive_with_entropy(
    S0: float, dim: int, seed: int, full_support: bool = False, margin: float = 1e-3
) -> PassiveDistribution:
    """Random passive distribution whose Shannon entropy is ``S0``.

    Deterministic in ``(S0, dim, seed, full_support)``.  With
    ``full_support`` every entry of the result is strictly positive.
    """
    if S0 < 0 or S0 > math.log(dim) - margin:
        raise ConfigurationError(f"entropy {S0} not reachable with dim={dim} (max ln dim - {margin})")
    if S0 == 0.0:
        out = np.zeros(dim)
        out[0] = 1.0
        return PassiveDistribution(out)
    rng = np.random.default_rng(seed)
    for _ in range(200):
        v = _draw_passive(rng, dim, S0, full_support)
        if v[0] <= 0 or np.count_nonzero(v) <= math.exp(S0):
            continue
        if v.size > 1 and v[1] == v[0] and np.all(v == v[0]):
            continue
        try:
            q = temper_to_entropy(v / v.sum(), S0)
        except ConfigurationError:
            continue
        if full_support and np.any(q <= 0):
            continue
        q = np.maximum.accumulate(q[::-1])[::-1]
        return PassiveDistribution(q / math.fsum(q))
    raise ConfigurationError(f"could not sample a passive state with entropy {S0} on dim={dim}")
