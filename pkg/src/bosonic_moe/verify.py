"""Monte-Carlo and oracle checks of the minimum-output-entropy inequalities.

Each report compares sampled inputs at a fixed entropy against the thermal
input of the same entropy.  A trial whose gap is below minus its error
budget is a violation; a run with violations is reported as a FINDING
rather than raised, because a genuine violation is a result.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import linalg

from .channel import (
    DIVERGENT,
    LindbladSpec,
    entropy_derivative_at_zero,
    evolve,
    output_entropy,
    params_from_lindblad,
    thermal_entropy_rate,
    thermal_output_entropy,
    thermal_output_nbar,
)
from .errors import ConfigurationError, NumericalError, TruncationError
from .fock import (
    FockDistribution,
    PassiveDistribution,
    g,
    g_inverse,
    passive_rearrange,
    sample_passive_with_entropy,
    shannon_entropy,
    temper_to_entropy,
    thermal_distribution,
    total_variation,
)

WORKERS_ENV = "BOSONIC_MOE_WORKERS"
DENSE_MAX_DIM = 32
ROUNDING = 1e-12


def trial_seed(seed: int, index: int) -> int:
    """Independent 32-bit seed for trial ``index`` of a run seeded with ``seed``."""
    return int(np.random.SeedSequence([int(seed), int(index)]).generate_state(1)[0])


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    return max(1, n)


def _map(fn, items, workers):
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class VerificationReport:
    """Outcome of a batch of trials against the thermal baseline.

    ``min_gap`` is the smallest ``S(trial) - S(thermal)`` over the trials that
    ran; ``violations`` counts gaps below minus the trial's own error
    budget, and ``entropy_error_budget`` is the largest such budget.
    """

    check: str
    channel: LindbladSpec
    S0: float
    trials: int
    min_gap: float
    argmin_seed: int
    violations: int
    entropy_error_budget: float
    excluded: int = 0
    divergent: int = 0
    thermal_self_gap: float = 0.0
    baseline_closed_form: float = math.nan
    baseline_evolved: float = math.nan
    extra: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        return "PASS" if self.violations == 0 else "FINDING"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channel"] = asdict(self.channel)
        d["status"] = self.status
        return d


def _reduce(results):
    """(min_gap, argmin_seed, violations, budget, excluded, divergent) over trial tuples."""
    ran = [r for r in results if r is not None]
    excluded = len(results) - len(ran)
    violations = sum(1 for gap, budget, _, _ in ran if gap < -budget)
    divergent = sum(1 for gap, _, _, _ in ran if gap == math.inf)
    budget = max((b for _, b, _, _ in ran), default=0.0)
    finite = [(gap, s) for gap, _, s, _ in ran if math.isfinite(gap)]
    if finite:
        min_gap, argmin = min(finite)
    elif ran:
        min_gap, argmin = math.inf, ran[0][2]
    else:
        min_gap, argmin = math.nan, -1
    return min_gap, argmin, violations, budget, excluded, divergent


# -- finite-time inequality -----------------------------------------------


def verify_conjecture_finite(
    spec: LindbladSpec,
    S0: float,
    trials: int,
    seed: int,
    dim: int = 256,
    workers: int | None = None,
    full_support: bool = False,
) -> VerificationReport:
    """Sample passive inputs with entropy ``S0`` and compare output entropies.

    Each trial's baseline is the closed-form thermal output at the trial's
    actual input entropy (equal to ``S0`` within 1e-10), so the sampler's
    tolerance never shows up as a gap.
    """
    if not (S0 > 0):
        raise ConfigurationError("S0 must be > 0")
    params = params_from_lindblad(spec)
    nbar = g_inverse(S0)
    closed = g(thermal_output_nbar(params, nbar))
    th = output_entropy(spec, thermal_distribution(nbar, dim))
    self_gap = th.value - closed

    def one(i):
        s = trial_seed(seed, i)
        try:
            p = sample_passive_with_entropy(S0, dim, s, full_support=full_support)
            out = output_entropy(spec, p)
        except (TruncationError, NumericalError):
            return None
        S_in = shannon_entropy(p)
        base = g(thermal_output_nbar(params, g_inverse(S_in)))
        return out.value - base, out.budget + ROUNDING, s, out.value

    res = _map(one, range(trials), workers)
    min_gap, argmin, viol, budget, excl, _ = _reduce(res)
    return VerificationReport(
        "finite",
        spec,
        float(S0),
        int(trials),
        min_gap,
        argmin,
        viol,
        max(budget, th.budget),
        excluded=excl,
        thermal_self_gap=self_gap,
        baseline_closed_form=closed,
        baseline_evolved=th.value,
        extra={"dim": dim},
    )


# -- infinitesimal inequality ---------------------------------------------


def _rate_budget(spec: LindbladSpec, p: np.ndarray) -> float:
    """Error in the window entropy rate from the flux dropped at the cutoff."""
    top = p[-1]
    if top <= 0:
        return ROUNDING
    flux = spec.gamma_plus * p.size * top
    return flux * (2.0 + abs(math.log(top))) + 1e-10


def verify_conjecture_infinitesimal(
    spec: LindbladSpec,
    S0: float,
    trials: int,
    seed: int,
    dim: int = 256,
    full_support: bool = True,
    workers: int | None = None,
) -> VerificationReport:
    """Compare initial entropy rates of sampled inputs with the thermal rate.

    With ``full_support`` every sample has strictly positive entries so the
    rate is finite; otherwise trials with finite support and ``gp > 0``
    have a divergent rate and count as satisfying the inequality.
    """
    if not (S0 > 0):
        raise ConfigurationError("S0 must be > 0")
    nbar = g_inverse(S0)
    closed = thermal_entropy_rate(spec, nbar)
    th = thermal_distribution(nbar, dim)
    th_rate = entropy_derivative_at_zero(spec, th)
    self_gap = th_rate - closed

    def one(i):
        s = trial_seed(seed, i)
        try:
            p = sample_passive_with_entropy(S0, dim, s, full_support=full_support)
        except ConfigurationError:
            return None
        rate = entropy_derivative_at_zero(spec, p)
        base = thermal_entropy_rate(spec, g_inverse(shannon_entropy(p)))
        if rate == DIVERGENT:
            return math.inf, 0.0, s, rate
        return rate - base, _rate_budget(spec, p.probs), s, rate

    res = _map(one, range(trials), workers)
    min_gap, argmin, viol, budget, excl, div = _reduce(res)
    return VerificationReport(
        "infinitesimal",
        spec,
        float(S0),
        int(trials),
        min_gap,
        argmin,
        viol,
        max(budget, _rate_budget(spec, th.probs)),
        excluded=excl,
        divergent=div,
        thermal_self_gap=self_gap,
        baseline_closed_form=closed,
        baseline_evolved=th_rate,
        extra={"dim": dim},
    )


# -- adversarial local search ---------------------------------------------


@dataclass(frozen=True)
class SearchResult:
    """Best state found by the local search.

    ``baseline`` is the thermal input of the same entropy pushed through the
    same truncated propagator, so truncation cancels in ``gap``;
    ``baseline_closed_form`` is the untruncated value.
    """

    distribution: FockDistribution
    output_entropy: float
    baseline: float
    baseline_closed_form: float
    iterations: int
    converged: bool
    history: tuple = field(repr=False, default=())

    @property
    def gap(self) -> float:
        return self.output_entropy - self.baseline


def _window_propagator(spec: LindbladSpec, dim: int) -> np.ndarray:
    e = np.eye(dim)
    return np.column_stack([evolve(spec, FockDistribution(e[:, k]), engine="expm", max_tail=None).probs for k in range(dim)])


def _out_entropy(M, p):
    q = M @ p
    q = q[q > 0]
    return -float(np.sum(q * np.log(q)))


def _grad_fd(M, p, h):
    """Central differences in ``p``, one-sided where ``p_k < h``."""
    n = p.size
    gvec = np.empty(n)
    for k in range(n):
        lo = max(p[k] - h, 0.0)
        a = p.copy()
        b = p.copy()
        a[k] = p[k] + h
        b[k] = lo
        gvec[k] = (_out_entropy(M, a) - _out_entropy(M, b)) / (p[k] + h - lo)
    return gvec


def _grad_adjoint(M, p):
    q = M @ p
    with np.errstate(divide="ignore"):
        lq = np.where(q > 0, np.log(q), 0.0)
    return -M.T @ (1.0 + lq)


def _tangent(p, v):
    """Remove from ``v`` its components along the constraint normals at ``p``."""
    B = np.column_stack((p, p * (1.0 + np.log(p))))
    coef, *_ = np.linalg.lstsq(B, v, rcond=None)
    return v - B @ coef


def local_search_min_entropy(
    spec: LindbladSpec,
    S0: float,
    dim: int,
    iterations: int,
    seed: int,
    init="random",
    gradient: str = "fd",
    fd_step: float = 1e-7,
    passive: bool = True,
    tol: float = 1e-14,
) -> SearchResult:
    """Projected descent on the output entropy over ``{sum p = 1, S(p) = S0}``.

    Works in ``x = ln p``.  The gradient is projected onto the tangent space
    of the two constraints (normals ``p`` and ``p (1 + ln p)``) and
    preconditioned by a BFGS estimate built from projected secant pairs.  A
    step-halving line search accepts the first decrease, and every trial
    point is pulled back to the constraint by power-tempering (and
    optionally sorted into passive order).
    """
    if not (S0 > 0):
        raise ConfigurationError("S0 must be > 0")
    M = _window_propagator(spec, dim)
    nbar = g_inverse(S0)
    th = thermal_distribution(nbar, dim, max_tail=None).probs
    baseline = _out_entropy(M, temper_to_entropy(th / th.sum(), S0))
    if isinstance(init, str):
        if init == "random":
            p = sample_passive_with_entropy(S0, dim, seed, full_support=True).probs.copy()
        elif init == "thermal":
            p = temper_to_entropy(th / th.sum(), S0)
        else:
            raise ValueError(f"unknown init {init!r}")
    else:
        p = temper_to_entropy(np.asarray(init, dtype=float) / np.sum(init), S0)
    if np.any(p <= 0):
        raise ConfigurationError("local search needs a strictly positive starting point")
    grad = (lambda q: _grad_fd(M, q, fd_step)) if gradient == "fd" else (lambda q: _grad_adjoint(M, q))

    def project(q):
        q = q / q.sum()
        try:
            q = temper_to_entropy(q, S0)
        except ConfigurationError as exc:
            raise NumericalError(f"re-projection onto the entropy surface failed: {exc}") from exc
        if passive:
            q = np.sort(q)[::-1]
        return q

    F = _out_entropy(M, p)
    history = [F]
    H = np.eye(dim)
    gx = _tangent(p, p * grad(p))
    converged = False
    it = 0
    for it in range(1, iterations + 1):
        d = _tangent(p, H @ gx)
        if float(np.dot(d, gx)) <= 0:
            H = np.eye(dim)
            d = gx
        dn = float(np.max(np.abs(d)))
        if dn == 0.0:
            converged = True
            break
        a = min(1.0, 1.0 / dn)
        accepted = False
        lp = np.log(p)
        while a * dn > 1e-15:
            x = lp - a * d
            q = project(np.exp(x - x.max()))
            if np.all(q > 0):
                Fq = _out_entropy(M, q)
                if Fq < F:
                    accepted = True
                    break
            a *= 0.5
        if not accepted:
            converged = True
            break
        gq = _tangent(q, q * grad(q))
        s = np.log(q) - lp
        yv = gq - gx
        sy = float(np.dot(s, yv))
        if sy > 1e-300:
            rho = 1.0 / sy
            V = np.eye(dim) - rho * np.outer(s, yv)
            H = V @ H @ V.T + rho * np.outer(s, s)
        drop = F - Fq
        p, F, gx = q, Fq, gq
        history.append(F)
        if drop < tol:
            converged = True
            break
    dist = PassiveDistribution(p) if passive else FockDistribution(p)
    return SearchResult(dist, F, baseline, thermal_output_entropy(spec, nbar), it, converged, tuple(history))


# -- dense oracle ---------------------------------------------------------


@dataclass(frozen=True)
class DenseState:
    """Full density matrix on the truncated window."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex, copy=True)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("density matrix must be square")
        if np.max(np.abs(m - m.conj().T)) > 1e-12:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m).real - 1.0) > 1e-12:
            raise ValueError(f"trace {np.trace(m).real!r} differs from 1")
        if np.linalg.eigvalsh(m).min() < -1e-10:
            raise ValueError("density matrix has a negative eigenvalue")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_diagonal(cls, p):
        return cls(np.diag(np.asarray(getattr(p, "probs", p), dtype=float)))


def von_neumann_entropy(rho) -> float:
    m = getattr(rho, "matrix", rho)
    ev = np.linalg.eigvalsh(0.5 * (m + m.conj().T))
    ev = ev[ev > 0]
    return max(0.0, -float(np.sum(ev * np.log(ev))))


def _lindblad_superoperator(gamma_plus, gamma_minus, dim):
    """Row-major superoperator of ``gp L+ + gm L-`` on the truncated window.

    The ``a a^dagger`` in L+ is kept as ``diag(1..dim)`` so that the top
    level loses population upward exactly as in the birth-death generator.
    """
    n = np.arange(dim)
    A = np.diag(np.sqrt(n[1:].astype(float)), k=1)  # a|n> = sqrt(n)|n-1>
    Ad = A.T
    I = np.eye(dim)
    up = np.diag(n + 1.0)
    down = np.diag(n.astype(float))

    def sandwich(X, Y):  # rho -> X rho Y
        return np.kron(X, Y.T)

    Lp = sandwich(Ad, A) - 0.5 * (sandwich(up, I) + sandwich(I, up))
    Lm = sandwich(A, Ad) - 0.5 * (sandwich(down, I) + sandwich(I, down))
    return gamma_plus * Lp + gamma_minus * Lm


@lru_cache(maxsize=16)
def _dense_propagator(gamma_plus, gamma_minus, t, dim):
    P = linalg.expm(t * _lindblad_superoperator(gamma_plus, gamma_minus, dim))
    P.flags.writeable = False
    return P


def dense_evolve(spec: LindbladSpec, rho: DenseState, renormalise: bool = False) -> np.ndarray:
    """Full master-equation evolution; returns the output matrix.

    The output can lose trace through the top level (same truncation as
    the diagonal engine), so it is returned as a plain Hermitian array.
    """
    d = rho.dim
    if d > DENSE_MAX_DIM:
        raise ConfigurationError(f"dense oracle limited to dim <= {DENSE_MAX_DIM}")
    if spec.is_identity:
        return rho.matrix.copy()
    P = _dense_propagator(spec.gamma_plus, spec.gamma_minus, spec.t, d)
    out = (P @ rho.matrix.reshape(-1)).reshape(d, d)
    out = 0.5 * (out + out.conj().T)
    if renormalise:
        out /= np.trace(out).real
    return out


def haar_unitary(rng: np.random.Generator, n: int) -> np.ndarray:
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / math.sqrt(2.0)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_dense_state(rng: np.random.Generator, dim: int, support: int) -> tuple[DenseState, np.ndarray]:
    """Dirichlet(1) spectrum rotated by a Haar unitary on the lowest ``support`` levels."""
    spec_ = rng.dirichlet(np.ones(support))
    U = haar_unitary(rng, support)
    m = np.zeros((dim, dim), dtype=complex)
    m[:support, :support] = (U * spec_) @ U.conj().T
    m = 0.5 * (m + m.conj().T)
    m /= np.trace(m).real
    spectrum = np.zeros(dim)
    spectrum[:support] = spec_ / spec_.sum()
    return DenseState(m), spectrum


def check_passive_reduction(
    spec: LindbladSpec,
    dim: int = 16,
    trials: int = 200,
    seed: int = 0,
    support: int | None = None,
    tol: float = 1e-9,
    workers: int | None = None,
) -> VerificationReport:
    """Compare ``S(Phi(rho))`` with ``S(Phi(rho_passive))`` on random dense states.

    ``rho_passive`` is the Fock-diagonal state with the spectrum of ``rho``
    sorted non-increasing.  Both sides use the same truncated generator;
    the budget adds the mass lost through the top level on either side.
    """
    if dim > 24:
        raise ConfigurationError("passive-reduction oracle limited to dim <= 24")
    support = dim // 2 if support is None else support

    def one(i):
        s = trial_seed(seed, i)
        rng = np.random.default_rng(s)
        rho, spectrum = random_dense_state(rng, dim, support)
        out = dense_evolve(spec, rho)
        lost = max(0.0, 1.0 - np.trace(out).real)
        S_dense = von_neumann_entropy(out)
        ref = evolve(spec, passive_rearrange(spectrum), engine="expm", max_tail=None)
        S_pass = shannon_entropy(ref, max_tail=math.inf)
        budget = tol + _leak_budget(lost, dim) + _leak_budget(ref.tail_bound, dim)
        return S_dense - S_pass, budget, s, S_dense

    res = _map(one, range(trials), workers)
    min_gap, argmin, viol, budget, excl, _ = _reduce(res)
    # gaps below -tol before any leak allowance
    strict = sum(1 for r in res if r is not None and r[0] < -tol)
    # self-trial: an already passive diagonal input
    th = thermal_distribution(0.5, dim, max_tail=None)
    p = th.probs / th.probs.sum()
    S_self = von_neumann_entropy(dense_evolve(spec, DenseState.from_diagonal(p)))
    S_ref = shannon_entropy(evolve(spec, p, engine="expm", max_tail=None), max_tail=math.inf)
    return VerificationReport(
        "passive",
        spec,
        math.nan,
        int(trials),
        min_gap,
        argmin,
        viol,
        budget,
        excluded=excl,
        thermal_self_gap=S_self - S_ref,
        extra={"dim": dim, "support": support, "strict_violations": strict},
    )


def _leak_budget(lost, dim):
    if lost <= 0:
        return 0.0
    return lost * (1.0 + math.log(dim + 1.0) + max(0.0, -math.log(lost)))


def dense_diagonal_agreement(spec: LindbladSpec, p, engine: str = "expm") -> float:
    """TV distance between the dense oracle and the diagonal engine on ``p``."""
    probs = np.asarray(getattr(p, "probs", p), dtype=float)
    rho = DenseState.from_diagonal(probs / probs.sum())
    out = dense_evolve(spec, rho)
    off = out - np.diag(np.diag(out))
    diag = evolve(spec, probs / probs.sum(), engine=engine, max_tail=None).probs
    return total_variation(np.diag(out).real, diag) + float(np.abs(off).max(initial=0.0))


# -- finite-support divergence --------------------------------------------


@dataclass(frozen=True)
class DivergenceTable:
    """Difference quotients ``[S(Phi_dt p) - S(p)] / dt`` on a shrinking grid."""

    dt: tuple
    increment: tuple
    quotient: tuple
    leading_term: tuple
    strictly_increasing: bool
    leading_ratio: float

    @property
    def rows(self):
        return list(zip(self.dt, self.increment, self.quotient, self.leading_term))


def check_finite_support_divergence(
    spec: LindbladSpec,
    support_N: int,
    dt_grid=None,
    p=None,
    dim: int | None = None,
) -> DivergenceTable:
    """Tabulate the entropy difference quotient for a finite-support passive state.

    Default state: uniform on ``{0..N}``.  The leading increment
    ``-gp (N+1) p_N dt ln dt`` comes from the level ``N+1`` filling up at
    rate ``gp (N+1) p_N``.
    """
    if dt_grid is None:
        dt_grid = 10.0 ** -np.arange(2, 9)
    dt = np.sort(np.asarray(dt_grid, dtype=float))[::-1]
    dim = support_N + 40 if dim is None else dim
    if support_N >= dim - 2:
        raise ConfigurationError("support must sit at least two levels below the cutoff")
    if p is None:
        p = np.zeros(dim)
        p[: support_N + 1] = 1.0 / (support_N + 1)
    p = np.asarray(getattr(p, "probs", p), dtype=float)
    if p.size < dim:
        p = np.pad(p, (0, dim - p.size))
    PassiveDistribution(p)
    S_in = shannon_entropy(p)
    incs, quots, lead = [], [], []
    c = spec.gamma_plus * (support_N + 1) * p[support_N]
    for h in dt:
        out = evolve(spec.with_time(h), p, engine="expm", max_tail=None)
        inc = shannon_entropy(out, max_tail=math.inf) - S_in
        incs.append(inc)
        quots.append(inc / h)
        lead.append(-c * h * math.log(h))
    q = np.array(quots)
    inc_ok = bool(np.all(np.diff(q) > 0))
    ratio = incs[-1] / lead[-1] if lead[-1] != 0 else math.nan
    return DivergenceTable(tuple(dt), tuple(incs), tuple(quots), tuple(lead), inc_ok, ratio)


# -- discretisation chain -------------------------------------------------


@dataclass(frozen=True)
class DiscretizationTable:
    """Per-step thermal chain and composition errors."""

    steps: int
    time: tuple
    nbar: tuple
    entropy: tuple
    closed_form: tuple
    composition_tv: tuple

    @property
    def max_entropy_error(self) -> float:
        return float(np.max(np.abs(np.subtract(self.entropy, self.closed_form))))

    @property
    def max_composition_tv(self) -> float:
        return float(np.max(self.composition_tv))


def check_discretization(spec: LindbladSpec, S0: float, steps: int, dim: int = 256) -> DiscretizationTable:
    """Split ``Phi_t`` into ``steps`` equal evolutions and track the thermal chain.

    At step ``k`` the state must be thermal with the closed-form mean photon
    number for time ``k t / steps`` and equal the single evolution over that
    time.
    """
    if steps < 1:
        raise ConfigurationError("steps must be >= 1")
    nbar0 = g_inverse(S0)
    p = thermal_distribution(nbar0, dim)
    dt = spec.t / steps
    one_step = spec.with_time(dt)
    times, nbars, ents, closed, tvs = [], [], [], [], []
    cur = p
    for k in range(1, steps + 1):
        cur = evolve(one_step, cur)
        tk = k * dt
        direct = evolve(spec.with_time(tk), p)
        nb = thermal_output_nbar(params_from_lindblad(spec.with_time(tk)), nbar0)
        times.append(tk)
        nbars.append(nb)
        ents.append(shannon_entropy(cur))
        closed.append(g(nb))
        tvs.append(total_variation(cur, direct))
    return DiscretizationTable(steps, tuple(times), tuple(nbars), tuple(ents), tuple(closed), tuple(tvs))
