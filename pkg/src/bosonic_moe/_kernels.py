"""Inner loops: the birth-death integrator and the ratio recursion.

Each kernel exists twice.  The ``*_nb`` versions are scalar loops compiled
with numba; the ``*_np`` versions are vectorised numpy and serve as the
fallback and as a cross-check.  Both must produce the same numbers up to
rounding.
"""

import math

import numpy as np

from ._accel import jit

# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40


def birth_death_rates(gamma_plus, gamma_minus, dim):
    """Upward rates ``gp (n+1)`` and downward rates ``gm n`` for n < dim."""
    n = np.arange(dim, dtype=np.float64)
    return gamma_plus * (n + 1.0), gamma_minus * n


# -- birth-death right-hand side ------------------------------------------
# State layout: y[:dim] are probabilities, y[dim] accumulates the mass that
# left the window through the top level.


@jit
def _rhs_nb(y, up, down, out):
    d = up.shape[0]
    for n in range(d):
        v = -(up[n] + down[n]) * y[n]
        if n > 0:
            v += up[n - 1] * y[n - 1]
        if n + 1 < d:
            v += down[n + 1] * y[n + 1]
        out[n] = v
    out[d] = up[d - 1] * y[d - 1]


def _rhs_np(y, up, down, out):
    d = up.shape[0]
    p = y[:d]
    out[:d] = -(up + down) * p
    out[1:d] += up[:-1] * p[:-1]
    out[: d - 1] += down[1:] * p[1:]
    out[d] = up[-1] * p[-1]


@jit
def _dopri5_nb(y0, up, down, t_end, atol, h0, max_steps):
    m = y0.shape[0]
    y = y0.copy()
    k1 = np.empty(m)
    k2 = np.empty(m)
    k3 = np.empty(m)
    k4 = np.empty(m)
    k5 = np.empty(m)
    k6 = np.empty(m)
    k7 = np.empty(m)
    tmp = np.empty(m)
    y5 = np.empty(m)
    _rhs_nb(y, up, down, k1)
    t = 0.0
    h = min(h0, t_end)
    accepted = 0
    rejected = 0
    while t < t_end:
        if accepted + rejected >= max_steps:
            return y, accepted, rejected, False
        last = False
        if t + h >= t_end:
            h = t_end - t
            last = True
        for i in range(m):
            tmp[i] = y[i] + h * A21 * k1[i]
        _rhs_nb(tmp, up, down, k2)
        for i in range(m):
            tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i])
        _rhs_nb(tmp, up, down, k3)
        for i in range(m):
            tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i])
        _rhs_nb(tmp, up, down, k4)
        for i in range(m):
            tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i])
        _rhs_nb(tmp, up, down, k5)
        for i in range(m):
            tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
        _rhs_nb(tmp, up, down, k6)
        for i in range(m):
            y5[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
        _rhs_nb(y5, up, down, k7)
        err = 0.0
        for i in range(m):
            e = abs(h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]))
            if e > err:
                err = e
        if err <= atol:
            t = t_end if last else t + h
            for i in range(m):
                y[i] = y5[i]
                k1[i] = k7[i]
            accepted += 1
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * (atol / err) ** 0.2))
        else:
            rejected += 1
            fac = min(1.0, max(0.2, 0.9 * (atol / err) ** 0.2))
        h = h * fac
    return y, accepted, rejected, True


def _dopri5_np(y0, up, down, t_end, atol, h0, max_steps):
    m = y0.shape[0]
    y = y0.copy()
    k1, k2, k3, k4, k5, k6, k7 = (np.empty(m) for _ in range(7))
    _rhs_np(y, up, down, k1)
    t = 0.0
    h = min(h0, t_end)
    accepted = rejected = 0
    while t < t_end:
        if accepted + rejected >= max_steps:
            return y, accepted, rejected, False
        last = t + h >= t_end
        if last:
            h = t_end - t
        _rhs_np(y + h * A21 * k1, up, down, k2)
        _rhs_np(y + h * (A31 * k1 + A32 * k2), up, down, k3)
        _rhs_np(y + h * (A41 * k1 + A42 * k2 + A43 * k3), up, down, k4)
        _rhs_np(y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4), up, down, k5)
        _rhs_np(y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5), up, down, k6)
        y5 = y + h * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
        _rhs_np(y5, up, down, k7)
        err = float(np.max(np.abs(h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7))))
        if err <= atol:
            t = t_end if last else t + h
            y = y5
            k1, k7 = k7, k1
            accepted += 1
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * (atol / err) ** 0.2))
        else:
            rejected += 1
            fac = min(1.0, max(0.2, 0.9 * (atol / err) ** 0.2))
        h *= fac
    return y, accepted, rejected, True


def rhs(y, up, down, backend="numba"):
    out = np.empty_like(y)
    (_rhs_nb if backend == "numba" else _rhs_np)(y, up, down, out)
    return out


def dopri5(y0, up, down, t_end, atol, h0, max_steps, backend="numba"):
    fn = _dopri5_nb if backend == "numba" else _dopri5_np
    return fn(np.ascontiguousarray(y0, dtype=np.float64), up, down, float(t_end), float(atol), float(h0), int(max_steps))


# -- ratio recursion ------------------------------------------------------
# Everything is carried in w = ln z so that ratios far below the smallest
# double stay representable.

COMPLETE = 0
COLLAPSED = 1
ABOVE_ONE = 2
NONPOSITIVE = 3
NONFINITE = 4

STATUS_NAMES = {
    COMPLETE: "complete",
    COLLAPSED: "collapsed",
    ABOVE_ONE: "ratio would exceed 1",
    NONPOSITIVE: "ratio would leave (0, 1]: f-target below the range of f",
    NONFINITE: "non-finite recursion target",
}

# beyond this, exp(-w) is within a factor e^9 of overflow
COLLAPSE_W = 700.0


@jit
def _h_w(w, gp, gm):
    if abs(w) < 1e-8:
        return (gm - gp) + 0.5 * (gm + gp) * w
    return (gm * math.expm1(w) + gp * math.expm1(-w)) / w


@jit
def _f_w(w, gp, gm):
    return gm * math.exp(w) + gp * w


@jit
def _delta_w(w, gp, gm, c):
    return -gp * math.expm1(-w) - gm * math.expm1(w) + c * w


@jit
def _f_inverse_nb(target, gp, gm):
    """Solve gm e^w + gp w = target for w <= 0; returns (w, status)."""
    if not math.isfinite(target):
        return 0.0, NONFINITE
    if target > gm:
        return 0.0, ABOVE_ONE
    if gp == 0.0:
        if target <= 0.0:
            return -math.inf, NONPOSITIVE
        return math.log(target / gm), COMPLETE
    if gm == 0.0:
        return target / gp, COMPLETE
    lo = (target - gm) / gp
    hi = min(0.0, target / gp)
    w = hi
    for _ in range(200):
        e = math.exp(w)
        F = gm * e + gp * w - target
        if F > 0.0:
            hi = w
        else:
            lo = w
        w_new = w - F / (gm * e + gp)
        if not (lo <= w_new <= hi):
            w_new = 0.5 * (lo + hi)
        if abs(w_new - w) <= 2e-16 * (1.0 + abs(w)):
            return w_new, COMPLETE
        w = w_new
    return w, COMPLETE


@jit
def _recurse_nb(w0, mu, gp, gm, n_max, const_tol, out):
    """Fill ``out[:n]`` with ln z_0 .. ln z_{n-1}; returns (n, status, step)."""
    c = gm - gp - mu
    out[0] = w0
    if abs(_h_w(w0, gp, gm) - c) <= const_tol:
        for i in range(1, n_max):
            out[i] = w0
        return n_max, COMPLETE, -1
    target = _f_w(w0, gp, gm) + 0.5 * _delta_w(w0, gp, gm, c)
    w1, st = _f_inverse_nb(target, gp, gm)
    if st != COMPLETE:
        return 1, st, 1
    if n_max < 2:
        return 1, COMPLETE, -1
    out[1] = w1
    for n in range(1, n_max - 1):
        wn = out[n]
        if gp > 0.0 and -wn > COLLAPSE_W:
            return n + 1, COLLAPSED, -1
        wp = out[n - 1]
        dg = gm * (wn - wp) - gp * (math.exp(-wn) - math.exp(-wp))
        target = _f_w(wn, gp, gm) + (n * dg + _delta_w(wn, gp, gm, c)) / (n + 2.0)
        w_next, st = _f_inverse_nb(target, gp, gm)
        if st != COMPLETE:
            return n + 1, st, n + 1
        out[n + 1] = w_next
    if gp > 0.0 and -out[n_max - 1] > COLLAPSE_W:
        return n_max, COLLAPSED, -1
    return n_max, COMPLETE, -1


@jit
def _summarise_nb(w, n, status, gp):
    """Entropy, tail entropy, trend of one sequence held in ``w[:n]``.

    trend: 0 constant, 1 increasing, -1 decreasing, 2 mixed/undetermined.
    Entropy is NaN when the sequence is invalid or cannot be normalised.
    """
    trend = 0
    if n >= 2:
        inc = True
        dec = True
        const = True
        for i in range(n - 1):
            d = w[i + 1] - w[i]
            if d != 0.0:
                const = False
            if not d > 0.0:
                inc = False
            if not d < 0.0:
                dec = False
        if const:
            trend = 0
        elif inc:
            trend = 1
        elif dec:
            trend = -1
        else:
            trend = 2
    if status != COMPLETE and status != COLLAPSED:
        return math.nan, math.nan, trend
    # log p_0 .. log p_n (unnormalised, L_0 = 0)
    m = n + 1
    L = np.empty(m)
    L[0] = 0.0
    for i in range(n):
        L[i + 1] = L[i] + w[i]
    top = 0.0
    for i in range(m):
        if L[i] > top:
            top = L[i]
    s = 0.0
    for i in range(m):
        s += math.exp(L[i] - top)
    tail_mass = 0.0
    tail_ent = 0.0
    if status == COMPLETE:
        zl = math.exp(w[n - 1])
        if zl >= 1.0:
            return math.inf, math.inf, trend
        pl = math.exp(L[m - 1] - top)
        tail_mass = pl * zl / (1.0 - zl)
    logZ = top + math.log(s + tail_mass)
    H = 0.0
    for i in range(m):
        lp = L[i] - logZ
        H -= math.exp(lp) * lp
    if status == COMPLETE:
        # geometric continuation with the last ratio
        zl = math.exp(w[n - 1])
        lpl = L[m - 1] - logZ
        pl = math.exp(lpl)
        lz = w[n - 1]
        tail_ent = -(pl * zl / (1.0 - zl)) * lpl - lz * pl * zl / ((1.0 - zl) * (1.0 - zl))
        H += tail_ent
    return H, tail_ent, trend


@jit
def _scan_nb(w0s, mus, gp, gm, n_max, const_tol):
    k = w0s.shape[0]
    status = np.empty(k, dtype=np.int64)
    length = np.empty(k, dtype=np.int64)
    w_last = np.empty(k)
    entropy = np.empty(k)
    tail = np.empty(k)
    trend = np.empty(k, dtype=np.int64)
    buf = np.empty(n_max)
    for i in range(k):
        n, st, _ = _recurse_nb(w0s[i], mus[i], gp, gm, n_max, const_tol, buf)
        status[i] = st
        length[i] = n
        w_last[i] = buf[n - 1]
        H, te, tr = _summarise_nb(buf, n, st, gp)
        entropy[i] = H
        tail[i] = te
        trend[i] = tr
    return status, length, w_last, entropy, tail, trend


# -- numpy versions: vectorised across seeds ------------------------------


def _h_w_np(w, gp, gm):
    w = np.asarray(w, dtype=float)
    small = np.abs(w) < 1e-8
    safe = np.where(small, 1.0, w)
    full = (gm * np.expm1(safe) + gp * np.expm1(-safe)) / safe
    series = (gm - gp) + 0.5 * (gm + gp) * w
    return np.where(small, series, full)


def _f_inverse_np(target, gp, gm):
    target = np.asarray(target, dtype=float)
    w = np.zeros_like(target)
    status = np.zeros(target.shape, dtype=np.int64)
    nonfinite = ~np.isfinite(target)
    status[nonfinite] = NONFINITE
    above = ~nonfinite & (target > gm)
    status[above] = ABOVE_ONE
    ok = status == COMPLETE
    if gp == 0.0:
        nonpos = ok & (target <= 0.0)
        status[nonpos] = NONPOSITIVE
        w[nonpos] = -np.inf
        good = ok & ~nonpos
        w[good] = np.log(target[good] / gm)
        return w, status
    if gm == 0.0:
        w[ok] = target[ok] / gp
        return w, status
    T = target[ok]
    lo = (T - gm) / gp
    hi = np.minimum(0.0, T / gp)
    x = hi.copy()
    active = np.ones(T.shape, dtype=bool)
    for _ in range(200):
        if not active.any():
            break
        xa = x[active]
        e = np.exp(xa)
        F = gm * e + gp * xa - T[active]
        hia = np.where(F > 0.0, xa, hi[active])
        loa = np.where(F > 0.0, lo[active], xa)
        xn = xa - F / (gm * e + gp)
        bad = ~((loa <= xn) & (xn <= hia))
        xn = np.where(bad, 0.5 * (loa + hia), xn)
        done = np.abs(xn - xa) <= 2e-16 * (1.0 + np.abs(xa))
        hi[active] = hia
        lo[active] = loa
        x[active] = xn
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    w[ok] = x
    return w, status


def _recurse_np(w0s, mus, gp, gm, n_max, const_tol):
    """Vectorised recursion; returns (W, length, status, step)."""
    w0s = np.asarray(w0s, dtype=float)
    mus = np.asarray(mus, dtype=float)
    k = w0s.size
    W = np.empty((k, n_max))
    W[:, 0] = w0s
    c = gm - gp - mus
    length = np.full(k, n_max, dtype=np.int64)
    status = np.full(k, COMPLETE, dtype=np.int64)
    step = np.full(k, -1, dtype=np.int64)

    const = np.abs(_h_w_np(w0s, gp, gm) - c) <= const_tol
    W[const, 1:] = w0s[const, None]
    alive = ~const
    if n_max < 2:
        length[:] = 1
        return W, length, status, step

    idx = np.flatnonzero(alive)
    w0 = w0s[idx]
    target = gm * np.exp(w0) + gp * w0 + 0.5 * (-gp * np.expm1(-w0) - gm * np.expm1(w0) + c[idx] * w0)
    w1, st = _f_inverse_np(target, gp, gm)
    fail = st != COMPLETE
    status[idx[fail]] = st[fail]
    length[idx[fail]] = 1
    step[idx[fail]] = 1
    W[idx[~fail], 1] = w1[~fail]
    alive[idx[fail]] = False

    for n in range(1, n_max - 1):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        wn = W[idx, n]
        if gp > 0.0:
            col = -wn > COLLAPSE_W
            if col.any():
                status[idx[col]] = COLLAPSED
                length[idx[col]] = n + 1
                alive[idx[col]] = False
                idx = idx[~col]
                wn = wn[~col]
                if idx.size == 0:
                    break
        wp = W[idx, n - 1]
        dg = gm * (wn - wp) - gp * (np.exp(-wn) - np.exp(-wp))
        delta = -gp * np.expm1(-wn) - gm * np.expm1(wn) + c[idx] * wn
        target = gm * np.exp(wn) + gp * wn + (n * dg + delta) / (n + 2.0)
        wnext, st = _f_inverse_np(target, gp, gm)
        fail = st != COMPLETE
        status[idx[fail]] = st[fail]
        length[idx[fail]] = n + 1
        step[idx[fail]] = n + 1
        alive[idx[fail]] = False
        W[idx[~fail], n + 1] = wnext[~fail]
    if gp > 0.0:
        fin = alive & (-W[:, n_max - 1] > COLLAPSE_W)
        status[fin] = COLLAPSED
    return W, length, status, step


def _summarise_np(W, length, status, gp):
    k = W.shape[0]
    entropy = np.full(k, np.nan)
    tail = np.full(k, np.nan)
    trend = np.full(k, 2, dtype=np.int64)
    for i in range(k):
        n = int(length[i])
        w = W[i, :n]
        d = np.diff(w)
        if n < 2 or np.all(d == 0.0):
            trend[i] = 0
        elif np.all(d > 0.0):
            trend[i] = 1
        elif np.all(d < 0.0):
            trend[i] = -1
        if status[i] not in (COMPLETE, COLLAPSED):
            continue
        L = np.concatenate(([0.0], np.cumsum(w)))
        top = max(0.0, float(L.max()))
        s = float(np.exp(L - top).sum())
        tail_mass = 0.0
        if status[i] == COMPLETE:
            zl = math.exp(w[-1])
            if zl >= 1.0:
                entropy[i] = tail[i] = math.inf
                continue
            tail_mass = math.exp(L[-1] - top) * zl / (1.0 - zl)
        logZ = top + math.log(s + tail_mass)
        lp = L - logZ
        H = -float(np.sum(np.exp(lp) * lp))
        te = 0.0
        if status[i] == COMPLETE:
            zl = math.exp(w[-1])
            pl = math.exp(lp[-1])
            te = -(pl * zl / (1.0 - zl)) * lp[-1] - w[-1] * pl * zl / (1.0 - zl) ** 2
            H += te
        entropy[i] = H
        tail[i] = te
    return entropy, tail, trend


def _scan_np(w0s, mus, gp, gm, n_max, const_tol, chunk=512):
    k = len(w0s)
    status = np.empty(k, dtype=np.int64)
    length = np.empty(k, dtype=np.int64)
    w_last = np.empty(k)
    entropy = np.empty(k)
    tail = np.empty(k)
    trend = np.empty(k, dtype=np.int64)
    for a in range(0, k, chunk):
        b = min(k, a + chunk)
        W, ln, st, _ = _recurse_np(w0s[a:b], mus[a:b], gp, gm, n_max, const_tol)
        status[a:b] = st
        length[a:b] = ln
        w_last[a:b] = W[np.arange(b - a), ln - 1]
        H, te, tr = _summarise_np(W, ln, st, gp)
        entropy[a:b] = H
        tail[a:b] = te
        trend[a:b] = tr
    return status, length, w_last, entropy, tail, trend


def recurse(w0, mu, gp, gm, n_max, const_tol, backend="numba"):
    """Single sequence; returns (log_z array, status, invalid step or -1)."""
    if backend == "numba":
        buf = np.empty(n_max)
        n, st, step = _recurse_nb(float(w0), float(mu), float(gp), float(gm), int(n_max), float(const_tol), buf)
        return buf[:n].copy(), int(st), int(step)
    W, ln, st, step = _recurse_np(np.array([w0]), np.array([mu]), float(gp), float(gm), int(n_max), float(const_tol))
    return W[0, : ln[0]].copy(), int(st[0]), int(step[0])


def scan(w0s, mus, gp, gm, n_max, const_tol, backend="numba"):
    """Batch summaries for many seeds: status, length, last ln z, entropy, tail entropy, trend."""
    w0s = np.ascontiguousarray(w0s, dtype=np.float64)
    mus = np.ascontiguousarray(mus, dtype=np.float64)
    if backend == "numba":
        return _scan_nb(w0s, mus, float(gp), float(gm), int(n_max), float(const_tol))
    return _scan_np(w0s, mus, float(gp), float(gm), int(n_max), float(const_tol))
