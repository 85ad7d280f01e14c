"""Compiled Monte Carlo kernels for ladder estimation and conditioned sampling.

Jump parts are passed split by sign as mass/rate arrays ``(up_m, up_a, dn_m,
dn_a)``; the harmonic function of the conditioned process is an exp-linear
curve ``h(y) = c0 + c1*y + sum d_k exp(-g_k y)`` passed as ``(c0, c1, d, g)``.
"""

import math

import numpy as np
from numba import njit

from ._kernels import NJ, bridge_max, draw_jump, gauss_step, next_jump_gap


# ---------------------------------------------------------------------------
# ladder extraction

@njit(**NJ)
def ladder_scan(rng, count, sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx, level, horizon, max_events):
    """Creep per path and concatenated ladder-jump sizes (new-maximum overshoots).

    Paths start at 0 and run until the running maximum first exceeds ``level``
    (a stopping time of the ladder process, so creep and jump counts have
    matching compensators) or until ``horizon``; ``censored[p]`` marks the
    latter. Gaussian segments use the exact maximum of the bridge.
    """
    creep = np.zeros(count)
    censored = np.zeros(count, np.bool_)
    cap = 1024
    jumps = np.empty(cap)
    nj = 0
    for p in range(count):
        x = 0.0
        M = 0.0
        t = 0.0
        ev = 0
        tj = next_jump_gap(rng, lam)
        done = False
        while not done:
            if t >= horizon or ev >= max_events:
                censored[p] = True
                break
            t_end = min(tj, horizon, t + 1.0)
            seg = t_end - t
            b = gauss_step(rng, x, drift, sigma, seg)
            m = bridge_max(rng, x, b, sigma * sigma * seg)
            ev += 1
            if m > M:
                if m >= level:
                    creep[p] += level - M
                    break
                creep[p] += m - M
                M = m
            x = b
            t = t_end
            if t < tj:
                continue
            tj = t + next_jump_gap(rng, lam)
            x += draw_jump(rng, cumw, sgn, kind, rate, tcdf, tx)
            if x > M:
                if nj == cap:
                    cap *= 2
                    j2 = np.empty(cap)
                    j2[:nj] = jumps[:nj]
                    jumps = j2
                jumps[nj] = x - M
                nj += 1
                M = x
                if M >= level:
                    done = True
    return creep, censored, jumps[:nj].copy()


# ---------------------------------------------------------------------------
# killed occupation (Green function)

@njit(**NJ)
def _killed_piece(rng, a, drift, sigma, s):
    """Advance a Gaussian piece; returns ``(b, survival_factor)``."""
    b = gauss_step(rng, a, drift, sigma, s)
    if b <= 0.0:
        return b, 0.0
    if sigma > 0.0:
        return b, 1.0 - math.exp(-2.0 * a * b / (sigma * sigma * s))
    return b, 1.0


@njit(**NJ)
def killed_occupation(rng, count, sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx,
                      x0, dt, n1, n2, edges, w_floor):
    """Occupation histograms of the process killed below 0, up to ``n1*dt`` and ``n2*dt``.

    Killing is accounted for by bridge survival weights with Russian roulette
    below ``w_floor``. Returns ``(occ1, occ2)`` summed over ``count`` paths.
    """
    nb = edges.shape[0] - 1
    occ1 = np.zeros(nb)
    occ2 = np.zeros(nb)
    lo = edges[0]
    hi = edges[-1]
    width = (hi - lo) / nb
    for p in range(count):
        x = x0
        w = 1.0
        tj = next_jump_gap(rng, lam)
        t = 0.0
        for k in range(n2):
            if x >= lo and x < hi:
                i = int((x - lo) / width)
                if i >= nb:
                    i = nb - 1
                occ2[i] += w * dt
                if k < n1:
                    occ1[i] += w * dt
            t_end = (k + 1) * dt
            while tj <= t_end:
                x, f = _killed_piece(rng, x, drift, sigma, tj - t)
                w *= f
                t = tj
                tj = t + next_jump_gap(rng, lam)
                if w == 0.0:
                    break
                x += draw_jump(rng, cumw, sgn, kind, rate, tcdf, tx)
                if x <= 0.0:
                    w = 0.0
                    break
            if w == 0.0:
                break
            x, f = _killed_piece(rng, x, drift, sigma, t_end - t)
            t = t_end
            w *= f
            if w < w_floor:
                if w <= 0.0 or rng.random() * w_floor > w:
                    break
                w = w_floor
    return occ1, occ2


# ---------------------------------------------------------------------------
# conditional Monte Carlo for transition kernels of the killed process

@njit(**NJ)
def killed_to_last_event(rng, count, x0s, sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx, t, t_split):
    """Simulate the killed process from each of ``x0s`` up to its last event before ``t``.

    Events are jump times and the forced time ``t_split``. Returns survival
    weights, values at the last event and the remaining Gaussian time, so the
    final transition can be integrated analytically.
    """
    w_out = np.zeros(count)
    z_out = np.zeros(count)
    s_out = np.zeros(count)
    for p in range(count):
        x = x0s[p]
        w = 1.0
        tc = 0.0
        split_done = t_split <= 0.0 or t_split >= t
        while True:
            nxt = tc + next_jump_gap(rng, lam)
            forced = False
            if not split_done and t_split < nxt:
                nxt = t_split
                forced = True
            if nxt >= t:
                break
            x, f = _killed_piece(rng, x, drift, sigma, nxt - tc)
            w *= f
            tc = nxt
            if w == 0.0:
                break
            if forced:
                split_done = True
                continue
            x += draw_jump(rng, cumw, sgn, kind, rate, tcdf, tx)
            if x <= 0.0:
                w = 0.0
                break
        w_out[p] = w
        z_out[p] = x
        s_out[p] = t - tc
    return w_out, z_out, s_out


# ---------------------------------------------------------------------------
# conditioned process: Doob transform by an exp-linear harmonic function

@njit(**NJ)
def h_eval(y, c0, c1, d, g):
    if y <= 0.0:
        return 0.0, 0.0
    v = c0 + c1 * y
    dv = c1
    for k in range(d.shape[0]):
        e = math.exp(-g[k] * y)
        v += d[k] * e
        dv -= d[k] * g[k] * e
    return v, dv


@njit(**NJ)
def h_eval_zero(y, c1, d, g):
    """``h`` and ``h'`` for curves with ``h(0) = 0``, accurate for small ``y``."""
    if y <= 0.0:
        return 0.0, 0.0
    v = c1 * y
    dv = c1
    for k in range(d.shape[0]):
        v += d[k] * math.expm1(-g[k] * y)
        dv -= d[k] * g[k] * math.exp(-g[k] * y)
    return v, dv


@njit(**NJ)
def _log_drift_excess(y, c1, d, g):
    """``h'(y)/h(y) - 1/y``, with its limit near 0."""
    h1 = c1
    h2 = 0.0
    for k in range(d.shape[0]):
        h1 -= d[k] * g[k]
        h2 += d[k] * g[k] * g[k]
    if y < 1e-6:
        return 0.5 * h2 / h1
    v, dv = h_eval_zero(y, c1, d, g)
    return dv / v - 1.0 / y


@njit(**NJ)
def bessel3_step(rng, y, s2):
    """Exact step of a (scaled) three-dimensional Bessel process; ``s2 = sigma^2 * dt``."""
    sd = math.sqrt(s2)
    a = y + sd * rng.standard_normal()
    b = sd * rng.standard_normal()
    c = sd * rng.standard_normal()
    return math.sqrt(a * a + b * b + c * c)


@njit(**NJ)
def _cont_step(rng, y, s, sigma, drift, c1, d, g):
    y2 = bessel3_step(rng, y, sigma * sigma * s)
    y2 += (drift + sigma * sigma * _log_drift_excess(y, c1, d, g)) * s
    return abs(y2)


@njit(**NJ)
def cond_advance(rng, y, T, dt, sigma, drift, up_m, up_a, dn_m, dn_a, c1, d, g):
    """Advance the conditioned process by ``T`` with steps ``<= dt``.

    Continuous part: exact Bessel-3 step plus an Euler correction of the drift.
    Jumps: thinning of a dominating proposal; up-jumps are proposed from an
    Exp/Gamma(2) mixture that dominates ``h(y+J)/h(y)`` by concavity of ``h``,
    down-jumps are accepted with probability ``h(y-u)/h(y)``. For a linear
    ``h`` without jumps this is the exact Bessel-3 transition.
    """
    total_dn = 0.0
    for k in range(dn_m.shape[0]):
        total_dn += dn_m[k]
    has_up = up_m.shape[0] > 0
    t = 0.0
    # geometric warm-up when starting at (or very near) the boundary
    step = dt
    if y < sigma * math.sqrt(dt):
        step = dt / 1024.0
    while t < T:
        s = min(step, T - t)
        if step < dt:
            step = min(2.0 * step, dt)
        rem = s
        while rem > 0.0:
            if y <= 0.0:
                y = _cont_step(rng, y, rem, sigma, drift, c1, d, g)
                rem = 0.0
                break
            hv, hd = h_eval_zero(y, c1, d, g)
            lam_up = 0.0
            if has_up:
                for k in range(up_m.shape[0]):
                    lam_up += up_m[k] * (1.0 + hd / (up_a[k] * hv))
            # clock at twice the current rate; thinned against the rate at the event
            Lam = 2.0 * (lam_up + total_dn)
            e = rng.standard_exponential() / Lam if Lam > 0.0 else np.inf
            if e >= rem:
                y = _cont_step(rng, y, rem, sigma, drift, c1, d, g)
                rem = 0.0
                break
            y = _cont_step(rng, y, e, sigma, drift, c1, d, g)
            rem -= e
            hv, hd = h_eval_zero(y, c1, d, g)
            lam_up = 0.0
            if has_up:
                for k in range(up_m.shape[0]):
                    lam_up += up_m[k] * (1.0 + hd / (up_a[k] * hv))
            u = rng.random() * Lam
            if u >= lam_up + total_dn:
                continue
            if u < lam_up:
                # pick component, then mixture part
                acc = 0.0
                k = 0
                for k in range(up_m.shape[0]):
                    acc += up_m[k] * (1.0 + hd / (up_a[k] * hv))
                    if u < acc:
                        break
                r = hd / (up_a[k] * hv)
                J = rng.standard_exponential() / up_a[k]
                if rng.random() * (1.0 + r) >= 1.0:
                    J += rng.standard_exponential() / up_a[k]
                h2, _ = h_eval_zero(y + J, c1, d, g)
                if rng.random() * (hv + hd * J) < h2:
                    y = y + J
            else:
                u -= lam_up
                acc = 0.0
                k = 0
                for k in range(dn_m.shape[0]):
                    acc += dn_m[k]
                    if u < acc:
                        break
                J = rng.standard_exponential() / dn_a[k]
                if y - J > 0.0:
                    h2, _ = h_eval_zero(y - J, c1, d, g)
                    if rng.random() * hv < h2:
                        y = y - J
        t += s
    return y


@njit(**NJ)
def cond_marginals(rng, count, x0s, probes, dt, sigma, drift, up_m, up_a, dn_m, dn_a, c1, d, g):
    """Values of the conditioned process at increasing ``probes`` for each start in ``x0s``."""
    out = np.empty((count, probes.shape[0]))
    for p in range(count):
        y = x0s[p]
        t = 0.0
        for j in range(probes.shape[0]):
            y = cond_advance(rng, y, probes[j] - t, dt, sigma, drift, up_m, up_a, dn_m, dn_a, c1, d, g)
            t = probes[j]
            out[p, j] = y
    return out


@njit(**NJ)
def cond_grid_path(rng, x0, n_steps, dt, sigma, drift, up_m, up_a, dn_m, dn_a, c1, d, g):
    out = np.empty(n_steps + 1)
    out[0] = x0
    y = x0
    for k in range(n_steps):
        y = cond_advance(rng, y, dt, dt, sigma, drift, up_m, up_a, dn_m, dn_a, c1, d, g)
        out[k + 1] = y
    return out


@njit(**NJ)
def cond_occupation(rng, count, x0s, dt, levels, edges, max_steps, sigma, drift,
                    up_m, up_a, dn_m, dn_a, c1, d, g):
    """Occupation histograms of the conditioned process before first passage above each of ``levels``.

    Steps grow with the distance to the histogram range and to the next level
    (Gaussian displacement per step about a quarter of that distance).
    Returns ``(occ, censored)`` with ``occ[j]`` the summed histogram up to the
    passage above ``levels[j]``.
    """
    nl = levels.shape[0]
    nb = edges.shape[0] - 1
    occ = np.zeros((nl, nb))
    lo = edges[0]
    hi = edges[-1]
    width = (hi - lo) / nb
    censored = 0
    s_min = sigma * math.sqrt(dt)
    for p in range(count):
        y = x0s[p]
        lev = 0
        for k in range(max_steps):
            dist = min(y - hi, levels[lev] - y)
            h = dt
            if dist > 4.0 * s_min:
                h = dt * (dist / (4.0 * s_min)) ** 2
            y2 = cond_advance(rng, y, h, h, sigma, drift, up_m, up_a, dn_m, dn_a, c1, d, g)
            mid = 0.5 * (y + y2)
            if h == dt and mid >= lo and mid < hi:
                i = min(int((mid - lo) / width), nb - 1)
                for j in range(lev, nl):
                    occ[j, i] += dt
            y = y2
            while lev < nl and y > levels[lev]:
                lev += 1
            if lev == nl:
                break
        if lev < nl:
            censored += 1
    return occ, censored


@njit(**NJ)
def weighted_marginals(rng, count, x0s, probes, dt, sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx):
    """Killed-process values at ``probes`` (NaN after killing); the bridge test kills at random."""
    out = np.full((count, probes.shape[0]), np.nan)
    for p in range(count):
        x = x0s[p]
        t = 0.0
        tj = next_jump_gap(rng, lam)
        alive = True
        for j in range(probes.shape[0]):
            while alive and t < probes[j]:
                t_end = min(t + dt, probes[j])
                while tj <= t_end:
                    x, f = _killed_piece(rng, x, drift, sigma, tj - t)
                    t = tj
                    tj = t + next_jump_gap(rng, lam)
                    if f == 0.0 or rng.random() >= f:
                        alive = False
                        break
                    x += draw_jump(rng, cumw, sgn, kind, rate, tcdf, tx)
                    if x <= 0.0:
                        alive = False
                        break
                if not alive:
                    break
                x, f = _killed_piece(rng, x, drift, sigma, t_end - t)
                t = t_end
                if f == 0.0 or rng.random() >= f:
                    alive = False
            if not alive:
                break
            out[p, j] = x
    return out


# ---------------------------------------------------------------------------
# first exit of the process started at x > 0 (exact, event driven)
