"""Critical points of the entropy-rate functional on passive states.

For a passive distribution with ratios ``z_n = p_{n+1}/p_n`` the Lagrange
conditions for extremising the initial output-entropy rate ``S'`` at fixed
input entropy reduce to a second-order recursion

    2 [f(z_1) - f(z_0)] = Delta(z_0)
    (n+2) [f(z_{n+1}) - f(z_n)] = n [g(z_n) - g(z_{n-1})] + Delta(z_n)

with ``f(x) = gm x + gp ln x``, ``g(x) = gm ln x - gp/x`` and
``Delta(x) = gp + gm - gp/x - gm x + (gm - gp - mu) ln x``.  Writing
``Delta(x) = ln x (c - h(x))`` with ``c = gm - gp - mu`` shows that the
sign of ``h(z_0) - c`` fixes the direction of the whole sequence.

The recursion runs in ``w = ln z``.  A decreasing sequence with ``gp > 0``
goes to zero doubly-exponentially; once ``w < -700`` the remaining mass is
far below double precision and the sequence is declared collapsed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from ._accel import resolve
from .errors import ConfigurationError, ScanBudgetExhausted
from .fock import PassiveDistribution, g_inverse, thermal_distribution

CONSTANT_TOL = 1e-12
SURVIVAL_Z = 1e-3
SURVIVAL_TAIL = 1e-12
ENTROPY_MATCH = 1e-8

GEOMETRIC = "geometric"
SUPEREXPONENTIAL = "superexponential"

CONSTANT = "constant"
INCREASING = "increasing"
DECREASING = "decreasing"
INVALID = "invalid"
UNDETERMINED = "undetermined"


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if np.any(~(x > 0)):
        raise ValueError("argument must be > 0")
    return x


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def f_func(x, gamma_plus, gamma_minus):
    x = _check_x(x)
    return _out(gamma_minus * x + gamma_plus * np.log(x))


def g_func(x, gamma_plus, gamma_minus):
    x = _check_x(x)
    return _out(gamma_minus * np.log(x) - gamma_plus / x)


def h_func(x, gamma_plus, gamma_minus):
    """``(gm x + gp/x - gp - gm) / ln x``, continuous through ``x = 1``."""
    x = _check_x(x)
    return _out(_kernels._h_w_np(np.log(x), gamma_plus, gamma_minus))


def delta_func(x, gamma_plus, gamma_minus, mu):
    x = _check_x(x)
    w = np.log(x)
    c = gamma_minus - gamma_plus - mu
    return _out(-gamma_plus * np.expm1(-w) - gamma_minus * np.expm1(w) + c * w)


def classify_seed(z0, mu, gamma_plus, gamma_minus, tol=CONSTANT_TOL) -> str:
    """Direction of the sequence started at ``z0``, read off ``h(z0) - c``."""
    if not (0.0 < z0 <= 1.0):
        raise ValueError("z0 must lie in (0, 1]")
    d = h_func(z0, gamma_plus, gamma_minus) - (gamma_minus - gamma_plus - mu)
    if abs(d) <= tol:
        return CONSTANT
    return INCREASING if d > 0 else DECREASING


@dataclass(frozen=True)
class RatioSequence:
    """Solution of the ratio recursion from one seed.

    ``log_z`` holds ``ln z_0 .. ln z_{m-1}`` for the ``m`` entries computed.
    ``classification`` is the label from the valid entries; an invalid run
    keeps its partial entries plus ``invalid_step`` and ``reason``.
    ``collapsed`` marks a decreasing sequence stopped once ``z < e^-700``.
    """

    log_z: np.ndarray
    mu: float
    gamma_plus: float
    gamma_minus: float
    n_max: int
    classification: str
    status: int
    invalid_step: int | None = None
    reason: str | None = None
    z: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        lz = np.array(self.log_z, dtype=float)
        lz.flags.writeable = False
        object.__setattr__(self, "log_z", lz)
        z = np.exp(lz)
        z.flags.writeable = False
        object.__setattr__(self, "z", z)

    @property
    def valid(self) -> bool:
        return self.classification != INVALID

    @property
    def collapsed(self) -> bool:
        return self.status == _kernels.COLLAPSED

    @property
    def trend(self) -> str:
        """Ordering of the computed entries, including the failed step.

        An overshoot above 1 counts as one more increase and an f-target
        below the range of f as one more decrease, since that is where the
        next entry would have gone.
        """
        w = self.log_z
        d = np.diff(w)
        if self.status == _kernels.ABOVE_ONE:
            d = np.append(d, 1.0)
        elif self.status == _kernels.NONPOSITIVE:
            d = np.append(d, -1.0)
        if d.size == 0:
            return UNDETERMINED
        if np.all(d == 0):
            return CONSTANT
        if np.all(d > 0):
            return INCREASING
        if np.all(d < 0):
            return DECREASING
        return UNDETERMINED


def _label(status, trend_code):
    if status not in (_kernels.COMPLETE, _kernels.COLLAPSED):
        return INVALID
    return {0: CONSTANT, 1: INCREASING, -1: DECREASING}.get(int(trend_code), UNDETERMINED)


def iterate_recursion(z0, mu, gamma_plus, gamma_minus, n_max=2000, backend=None) -> RatioSequence:
    """Run the recursion from ``z0`` for up to ``n_max`` ratios.

    A seed with ``|h(z0) - c| <= 1e-12`` returns the exactly constant
    sequence: the constant solution is unstable (perturbations grow like
    ``z^-n``), so iterating it in floating point would drift off it.
    """
    if not (0.0 < z0 <= 1.0):
        raise ValueError("z0 must lie in (0, 1]")
    if n_max < 2:
        raise ValueError("n_max must be >= 2")
    if gamma_plus < 0 or gamma_minus < 0:
        raise ValueError("rates must be >= 0")
    lz, st, step = _kernels.recurse(math.log(z0), mu, gamma_plus, gamma_minus, n_max, CONSTANT_TOL, resolve(backend))
    trend = 0
    if lz.size > 1:
        d = np.diff(lz)
        trend = 0 if np.all(d == 0) else 1 if np.all(d > 0) else -1 if np.all(d < 0) else 2
    elif st == _kernels.COMPLETE:
        trend = 0
    return RatioSequence(
        lz,
        float(mu),
        float(gamma_plus),
        float(gamma_minus),
        int(n_max),
        _label(st, trend),
        int(st),
        invalid_step=None if step < 0 else int(step),
        reason=None if st in (_kernels.COMPLETE, _kernels.COLLAPSED) else _kernels.STATUS_NAMES[st],
    )


def master_residual(seq: RatioSequence) -> np.ndarray:
    """Residuals of the differenced recursion, one per computed step."""
    z = seq.z
    gp, gm, mu = seq.gamma_plus, seq.gamma_minus, seq.mu
    if z.size < 2:
        return np.zeros(0)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        f = gm * z + gp * seq.log_z
        gg = gm * seq.log_z - gp * np.exp(-seq.log_z)
        dl = -gp * np.expm1(-seq.log_z) - gm * np.expm1(seq.log_z) + (gm - gp - mu) * seq.log_z
    r = np.empty(z.size - 1)
    r[0] = 2 * (f[1] - f[0]) - dl[0]
    n = np.arange(1, z.size - 1)
    r[1:] = (n + 2) * (f[2:] - f[1:-1]) - n * (gg[1:-1] - gg[:-2]) - dl[1:-1]
    return r


def log_probs_from_ratios(log_z: np.ndarray, status: int) -> tuple[np.ndarray, float]:
    """Normalised ``ln p_0 .. ln p_m`` and the continuation mass beyond them.

    A complete sequence is continued geometrically with its last ratio; a
    collapsed one has no continuation.
    """
    L = np.concatenate(([0.0], np.cumsum(log_z)))
    top = float(L.max())
    s = float(np.exp(L - top).sum())
    cont = 0.0
    if status == _kernels.COMPLETE:
        zl = math.exp(log_z[-1])
        if zl >= 1.0:
            raise ConfigurationError("ratios do not decay: distribution cannot be normalised")
        cont = math.exp(L[-1] - top) * zl / (1.0 - zl)
    logZ = top + math.log(s + cont)
    return L - logZ, cont / (s + cont)


def distribution_from_ratios(seq, dim: int) -> PassiveDistribution:
    """Rebuild ``p`` from its ratios: ``p_{n+1} = z_n p_n``, ``p_0`` by normalisation.

    ``seq`` is a RatioSequence or a plain array of ratios (treated as a
    complete sequence).  A complete sequence is extended by a geometric tail
    with its last ratio; the part of that tail beyond ``dim`` becomes
    ``tail_bound``.  Past a collapse the entries are zero.
    """
    if isinstance(seq, RatioSequence):
        if not seq.valid:
            raise ConfigurationError(f"invalid sequence: {seq.reason} at step {seq.invalid_step}")
        lz, status = seq.log_z, seq.status
    else:
        z = np.asarray(seq, dtype=float)
        if np.any(~(z > 0)) or np.any(z > 1):
            raise ValueError("ratios must lie in (0, 1]")
        lz, status = np.log(z), _kernels.COMPLETE
    if status == _kernels.COMPLETE and dim > lz.size + 1:
        raise ValueError(f"dim={dim} exceeds the {lz.size + 1} levels the sequence defines")
    if np.all(lz >= 0.0) and status == _kernels.COMPLETE:
        raise ConfigurationError("ratios do not decay: distribution cannot be normalised")
    L, _ = log_probs_from_ratios(lz, status)
    p = np.zeros(dim)
    m = min(dim, L.size)
    p[:m] = np.exp(L[:m])
    tail = float(np.exp(L[m:]).sum()) if m < L.size else 0.0
    if status == _kernels.COMPLETE:
        zl = math.exp(lz[-1])
        tail += math.exp(L[-1]) * zl / (1.0 - zl)
    # cumulative products are non-increasing in exact arithmetic; keep it so
    p = np.minimum.accumulate(p)
    total = math.fsum(p)
    if total > 1.0:
        p /= total
    return PassiveDistribution(p, tail)


def sequence_entropy(seq: RatioSequence) -> tuple[float, float]:
    """Entropy of the distribution defined by ``seq`` and its tail part."""
    H, tail, _ = _kernels._summarise_np(seq.log_z[None, :], np.array([seq.log_z.size]), np.array([seq.status]), seq.gamma_plus)
    return float(H[0]), float(tail[0])


def entropy_rate_from_log_probs(L: np.ndarray, gamma_plus: float, gamma_minus: float, tail: str = "none") -> float:
    """``S'`` in flux form, ``-sum_n J_n ln(p_{n+1}/p_n)``, from log-probabilities.

    ``J_n = (n+1)(gp p_n - gm p_{n+1})`` is the net upward flux.  ``tail``
    says how the distribution continues after the last entry:
    ``"geometric"`` (same last ratio forever), ``"collapsed"`` (the last
    ratio is already below e^-700; the next flux term is ``gp (K+1) p_K``)
    or ``"none"``.
    """
    L = np.asarray(L, dtype=float)
    K = L.size - 1
    w = np.diff(L)
    n = np.arange(K)
    p = np.exp(L)
    J = (n + 1) * (gamma_plus * p[:-1] - gamma_minus * p[1:])
    terms = -J * w
    extra = 0.0
    if tail == "geometric" and K >= 1:
        zl = math.exp(w[-1])
        # sum_{n >= K} (n+1) p_n (gp - gm z) (-w) with p_n = p_K z^(n-K)
        s = p[-1] * ((K + 1) / (1.0 - zl) + zl / (1.0 - zl) ** 2)
        extra = -s * (gamma_plus - gamma_minus * zl) * w[-1]
    elif tail == "collapsed":
        extra = gamma_plus * (K + 1) * p[-1]
    return math.fsum(terms) + extra


def sequence_entropy_rate(seq: RatioSequence) -> float:
    L, _ = log_probs_from_ratios(seq.log_z, seq.status)
    if seq.status == _kernels.COLLAPSED:
        # L has one level past the last computed ratio; its flux is the
        # analytic collapse term on the level before it
        return entropy_rate_from_log_probs(L[:-1], seq.gamma_plus, seq.gamma_minus, "collapsed")
    return entropy_rate_from_log_probs(L, seq.gamma_plus, seq.gamma_minus, "geometric")


def stationarity_residual(seq: RatioSequence) -> float:
    """Largest residual of the per-level Lagrange condition.

    ``dS'/dp_n + lambda - mu (1 + ln p_n) = 0`` with ``lambda`` eliminated
    through the ``n = 0`` equation.  Each residual is divided by
    ``max(1, sum of |terms|)``: absolute where the terms are O(1), relative
    deep in a collapsed tail where ``1/z_{n-1}`` reaches e^700.
    """
    gp, gm, mu = seq.gamma_plus, seq.gamma_minus, seq.mu
    w = seq.log_z
    K = w.size
    L, _ = log_probs_from_ratios(w, seq.status)
    out = 0.0
    with np.errstate(over="ignore"):
        n = np.arange(K, dtype=float)
        z = np.exp(w)
        inv_prev = np.concatenate(([0.0], np.exp(-w[:-1])))
        w_prev = np.concatenate(([0.0], w[:-1]))
        parts = np.stack(
            [
                -gp * n * inv_prev,
                gp * (n + 1) + gm * n,
                -gm * (n + 1) * z,
                -gp * (n + 1) * w,
                gm * n * w_prev,
            ]
        )
        A = parts.sum(axis=0)
        scale = np.abs(parts).sum(axis=0) + abs(mu) * (np.abs(L[:K]) + abs(L[0]))
        R = A - A[0] - mu * (L[:K] - L[0])
        ok = np.isfinite(R) & np.isfinite(scale)
        if np.any(ok):
            out = float(np.max(np.abs(R[ok]) / np.maximum(1.0, scale[ok])))
    return out


def geometric_mu(gamma_plus, gamma_minus, z):
    """Multiplier that makes the constant sequence ``z`` a solution."""
    return gamma_minus - gamma_plus - h_func(z, gamma_plus, gamma_minus)


@dataclass(frozen=True)
class CriticalPoint:
    """One solution of the Lagrange system at the requested input entropy."""

    branch: str
    mu: float
    z0: float
    entropy: float
    ratios: RatioSequence = field(repr=False)
    distribution: PassiveDistribution = field(repr=False)
    entropy_rate: float
    stationarity_residual: float
    grid_index: tuple[int, int] | None = None


@dataclass
class ScanResult:
    points: list
    evaluations: int
    grid_shape: tuple[int, int]
    surviving_cells: int
    dropped_brackets: int


def _mu_grid(mu_geo, scale, n):
    """Offsets on both sides of ``mu_geo``: half log-spaced, half linear."""
    q = max(1, n // 4)
    logs = scale * np.logspace(-6, 0, q)
    lin = np.linspace(0.0, 4.0 * scale, n // 2 - q + 1)[1:]
    off = np.unique(np.concatenate((logs, lin)))
    return np.concatenate((mu_geo - off[::-1], mu_geo + off))


def _z0_grid(n, lo=1e-6, hi=1 - 1e-6):
    u = np.linspace(math.log(lo / (1 - lo)), math.log(hi / (1 - hi)), n)
    return 1.0 / (1.0 + np.exp(-u))


def _seed_at_boundary(mu, gp, gm, eps=1e-9):
    """``z_c (1 - eps)`` where ``h(z_c) = gm - gp - mu``, or None."""
    c = gm - gp - mu
    lo, hi = 1e-12, 1.0
    if not (h_func(lo, gp, gm) < c < h_func(hi, gp, gm)):
        return None
    for _ in range(200):
        mid = math.sqrt(lo * hi) if hi / lo > 4 else 0.5 * (lo + hi)
        if h_func(mid, gp, gm) < c:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * hi:
            break
    return lo * (1 - eps)


def _survives(status, w_last, tail, trend):
    done = (status == _kernels.COLLAPSED) | (
        (status == _kernels.COMPLETE) & (w_last < math.log(SURVIVAL_Z)) & (np.abs(tail) < SURVIVAL_TAIL)
    )
    return done & (trend == -1)


def scan_superexponential(
    gamma_plus,
    gamma_minus,
    S0,
    mu_geo,
    n_max=2000,
    grid=(400, 400),
    max_evaluations=5_000_000,
    backend=None,
) -> tuple[list, ScanResult]:
    """Coarse ``(mu, z0)`` scan for surviving decreasing sequences at entropy ``S0``.

    Every sign change of ``entropy - S0`` between neighbouring surviving
    cells of a row is refined by bisection on ``ln z0``.  Returns the refined
    ``(mu, z0, row, col)`` tuples and a summary of the scan.
    """
    be = resolve(backend)
    gp, gm = float(gamma_plus), float(gamma_minus)
    scale = max(1.0, gp + gm)
    mus = _mu_grid(mu_geo, scale, grid[0])
    base = _z0_grid(grid[1])
    rows = []
    for mu in mus:
        zs = base
        zc = _seed_at_boundary(mu, gp, gm)
        if zc is not None and base[0] < zc < base[-1]:
            zs = np.sort(np.append(base, zc))
        rows.append(zs)
    widths = {len(r) for r in rows}
    evaluations = 0

    def run(w0s, mu_vals):
        nonlocal evaluations
        evaluations += len(w0s)
        if evaluations > max_evaluations:
            raise ScanBudgetExhausted(
                f"critical-point scan needed more than {max_evaluations} recursion runs"
            )
        return _kernels.scan(w0s, mu_vals, gp, gm, n_max, CONSTANT_TOL, be)

    W0 = np.concatenate([np.log(r) for r in rows])
    MU = np.concatenate([np.full(len(r), m) for r, m in zip(rows, mus)])
    status, length, w_last, H, tail, trend = run(W0, MU)
    ok = _survives(status, w_last, tail, trend) & np.isfinite(H)

    brackets = []
    start = 0
    for i, r in enumerate(rows):
        sl = slice(start, start + len(r))
        okr, Hr = ok[sl], H[sl]
        for j in range(len(r) - 1):
            if okr[j] and okr[j + 1] and (Hr[j] - S0) * (Hr[j + 1] - S0) <= 0:
                brackets.append((i, j, math.log(r[j]), math.log(r[j + 1]), Hr[j] - S0))
        start += len(r)

    found = []
    dropped = 0
    if brackets:
        idx_row = np.array([b[0] for b in brackets])
        idx_col = np.array([b[1] for b in brackets])
        lo = np.array([b[2] for b in brackets])
        hi = np.array([b[3] for b in brackets])
        f_lo = np.array([b[4] for b in brackets])
        mu_b = mus[idx_row]
        alive = np.ones(lo.size, dtype=bool)
        best_w = lo.copy()
        best_err = np.abs(f_lo)
        for _ in range(80):
            act = np.flatnonzero(alive & (best_err > ENTROPY_MATCH))
            if act.size == 0:
                break
            mid = 0.5 * (lo[act] + hi[act])
            st, _, wl, Hm, tl, tr = run(mid, mu_b[act])
            good = _survives(st, wl, tl, tr) & np.isfinite(Hm)
            alive[act[~good]] = False
            a = act[good]
            fm = Hm[good] - S0
            err = np.abs(fm)
            better = err < best_err[a]
            best_err[a[better]] = err[better]
            best_w[a[better]] = mid[good][better]
            same = np.sign(fm) == np.sign(f_lo[a])
            lo[a[same]] = mid[good][same]
            f_lo[a[same]] = fm[same]
            hi[a[~same]] = mid[good][~same]
            # bracket collapsed to adjacent doubles
            stuck = hi[a] - lo[a] <= 4e-16 * np.abs(lo[a])
            alive[a[stuck]] = False
        for k in range(lo.size):
            if best_err[k] <= ENTROPY_MATCH:
                found.append((float(mu_b[k]), math.exp(best_w[k]), int(idx_row[k]), int(idx_col[k])))
            else:
                dropped += 1
    summary = ScanResult([], evaluations, (len(rows), max(widths)), int(ok.sum()), dropped)
    return found, summary


def _geometric_dim(nbar, dim):
    if dim is not None:
        return dim
    if nbar == 0:
        return 2
    q = nbar / (1.0 + nbar)
    return max(2, int(math.ceil(math.log(1e-13) / math.log(q))) + 1)


def find_critical_points(
    gamma_plus,
    gamma_minus,
    S0,
    dim=None,
    n_max=2000,
    grid=(400, 400),
    max_evaluations=5_000_000,
    backend=None,
    return_scan=False,
):
    """All critical points of the entropy-rate problem at input entropy ``S0``.

    The geometric (thermal) point is always present.  The scan adds every
    surviving decreasing sequence it can tune to entropy ``S0``; with
    ``gamma_plus = 0`` such sequences cannot survive and the scan is only
    run to confirm that.  Points are ordered by grid index and never
    merged, even when they share an entropy value.
    """
    if not (S0 > 0):
        raise ConfigurationError("S0 must be > 0")
    gp, gm = float(gamma_plus), float(gamma_minus)
    if gp < 0 or gm < 0 or gp + gm == 0:
        raise ConfigurationError("need non-negative rates, not both zero")
    nbar = g_inverse(S0)
    z = nbar / (nbar + 1.0)
    mu_geo = geometric_mu(gp, gm, z)
    d_geo = _geometric_dim(nbar, dim)
    seq = iterate_recursion(z, mu_geo, gp, gm, n_max, backend)
    geo = CriticalPoint(
        GEOMETRIC,
        mu_geo,
        z,
        S0,
        seq,
        thermal_distribution(nbar, d_geo, max_tail=None),
        sequence_entropy_rate(seq),
        stationarity_residual(seq),
    )
    points = [geo]
    found, summary = scan_superexponential(gp, gm, S0, mu_geo, n_max, grid, max_evaluations, backend)
    for mu, z0, i, j in found:
        s = iterate_recursion(z0, mu, gp, gm, n_max, backend)
        H, _ = sequence_entropy(s)
        d = dim if dim is not None else s.log_z.size + 1
        if s.status == _kernels.COMPLETE:
            d = min(d, s.log_z.size + 1)
        points.append(
            CriticalPoint(
                SUPEREXPONENTIAL,
                mu,
                z0,
                H,
                s,
                distribution_from_ratios(s, d),
                sequence_entropy_rate(s),
                stationarity_residual(s),
                (i, j),
            )
        )
    summary.points = points
    return (points, summary) if return_scan else points
