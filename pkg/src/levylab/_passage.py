"""Compiled first-passage kernels that keep a window of path history.

All passages are detected exactly: Gaussian segments are Brownian bridges
between sampled endpoints, crossings inside a segment are decided with the
bridge crossing probability, and values at past times are drawn from the
bridge conditioned to stay below the level (or from the Bessel-3 bridge on the
segment that ends with a continuous crossing).
"""

import math

import numpy as np
from numba import njit

from ._kernels import NJ, bessel_bridge_value, bridge_hit_time_up, bridge_value, cross_prob_up, draw_jump, \
    gauss_step, next_jump_gap
from ._mc import bessel3_step, cond_advance


@njit(**NJ)
def bridge_below(rng, a, b, c, s2h, f):
    """Bridge value at fraction ``f`` given the bridge from ``a`` to ``b`` stays below ``c``."""
    v = a
    for _ in range(100000):
        v = bridge_value(rng, a, b, s2h, f)
        if v >= c:
            continue
        p = (1.0 - cross_prob_up(a, v, c, s2h * f)) * (1.0 - cross_prob_up(v, b, c, s2h * (1.0 - f)))
        if rng.random() < p:
            return v
    return v


@njit(**NJ)
def levy_advance(rng, v, T, sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx):
    """Plain (unconditioned) value after time ``T``."""
    t = 0.0
    while True:
        g = next_jump_gap(rng, lam)
        if t + g >= T:
            return gauss_step(rng, v, drift, sigma, T - t)
        v = gauss_step(rng, v, drift, sigma, g)
        v += draw_jump(rng, cumw, sgn, kind, rate, tcdf, tx)
        t += g


@njit(**NJ)
def macro_step(rng, v, h, sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx):
    """Exact increment over ``h`` without tracking the path inside (used far from the level)."""
    v = gauss_step(rng, v, drift, sigma, h)
    n = rng.poisson(lam * h) if lam > 0.0 else 0
    # split the jump count over components; exponential sums are gamma
    prev = 0.0
    for k in range(cumw.shape[0]):
        if n == 0:
            break
        w = cumw[k] - prev
        left = 1.0 - prev
        prev = cumw[k]
        nk = n if k == cumw.shape[0] - 1 or left <= w else rng.binomial(n, min(w / left, 1.0))
        n -= nk
        if nk == 0:
            continue
        if kind[k] == 0:
            v += sgn[k] * rng.gamma(nk, 1.0) / rate[k]
        else:
            for _ in range(nk):
                v += sgn[k] * np.interp(rng.random(), tcdf[k], tx[k])
    return v


@njit(**NJ)
def _macro_length(dist, d_macro, var_rate, drift):
    """Step length far below the level (0 when the event-driven scheme must be used)."""
    if dist <= d_macro or var_rate <= 0.0:
        return 0.0
    h = (dist / 8.0) ** 2 / var_rate
    if drift > 0.0:
        h = min(h, dist / (4.0 * drift))
    return h


@njit(**NJ)
def _step_length(dist, s2, h_min, h_max):
    if s2 <= 0.0:
        return h_max
    h = dist * dist / (25.0 * s2)
    return min(max(h, h_min), h_max)


@njit(**NJ)
def passage_up(rng, v, c, t_cap, h_min, h_max, d_macro, var_rate, sigma, drift, lam, cumw, sgn, kind, rate,
               tcdf, tx):
    """First passage above ``c`` from ``v <= c``.

    Far below the level (distance above ``d_macro``) the path advances by
    exact increments of length ``(dist/8)^2/var_rate``; ``d_macro`` is chosen
    by the caller so a passage inside such a step is negligible.

    Returns ``(kind, time, undershoot, overshoot)`` with ``kind`` 1 for a
    continuous crossing, 2 for a crossing by a jump and 0 if none before ``t_cap``.
    """
    s2 = sigma * sigma
    t = 0.0
    tj = next_jump_gap(rng, lam)
    while t < t_cap:
        hm = _macro_length(c - v, d_macro, var_rate, drift)
        if hm > 0.0:
            v = macro_step(rng, v, hm, sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx)
            t += hm
            tj = t + next_jump_gap(rng, lam)
            continue
        h = _step_length(c - v, s2, h_min, h_max)
        end = min(t + h, tj, t_cap)
        hh = end - t
        b = gauss_step(rng, v, drift, sigma, hh)
        if b > c or (s2 > 0.0 and rng.random() < cross_prob_up(v, b, c, s2 * hh)):
            return 1, t + bridge_hit_time_up(rng, v, b, c, hh, s2), 0.0, 0.0
        t = end
        v = b
        if t >= tj:
            J = draw_jump(rng, cumw, sgn, kind, rate, tcdf, tx)
            if v + J > c:
                return 2, t, c - v, v + J - c
            v += J
            tj = t + next_jump_gap(rng, lam)
    return 0, t, np.nan, np.nan


@njit(**NJ)
def passage_history(rng, count, y0s, x0s, c, neg_w, pos_t, h_min, h_max, t_cap, buf_cap, d_macro, var_rate,
                    sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx,
                    cond_dt, up_m, up_a, dn_m, dn_a, c1, d, g):
    """Passage above ``c`` of a two-sided path with values around the passage time.

    The forward part starts at ``y0s[p]``; for negative times the path is
    ``-B`` with ``B`` the conditioned process started at ``x0s[p]`` (NaN: no
    negative-time part). Returns ``(kind, tau, under, over, probes)`` where
    ``kind`` is 0 (undetected), 1 (continuous), 2 (jump) or 3 (already above
    ``c`` at time 0) and ``probes[p]`` holds values at ``tau - neg_w`` followed
    by values at ``tau + pos_t`` (NaN when outside the simulated window).
    Probe values are exact marginals; values at different probes inside one
    Gaussian segment are drawn independently.
    """
    s2 = sigma * sigma
    nn = neg_w.shape[0]
    npos = pos_t.shape[0]
    kinds = np.zeros(count, np.int64)
    taus = np.full(count, np.nan)
    unders = np.full(count, np.nan)
    overs = np.full(count, np.nan)
    probes = np.full((count, nn + npos), np.nan)
    bt = np.empty(buf_cap)
    ba = np.empty(buf_cap)
    bb = np.empty(buf_cap)
    bh = np.empty(buf_cap)
    for p in range(count):
        y = y0s[p]
        x = x0s[p]
        head = 0
        size = 0
        cont_last = False
        found = 0
        tau = 0.0
        v = y
        if y > c:
            found = 3
            unders[p] = c + x
            overs[p] = y - c
        else:
            t = 0.0
            tj = next_jump_gap(rng, lam)
            while t < t_cap:
                hm = _macro_length(c - v, d_macro, var_rate, drift)
                if hm > 0.0:
                    # path inside is not tracked: mark the buffer entry unusable
                    bt[head] = t
                    ba[head] = np.nan
                    bb[head] = np.nan
                    bh[head] = hm
                    head = (head + 1) % buf_cap
                    size = min(size + 1, buf_cap)
                    v = macro_step(rng, v, hm, sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx)
                    t += hm
                    tj = t + next_jump_gap(rng, lam)
                    continue
                h = _step_length(c - v, s2, h_min, h_max)
                end = min(t + h, tj, t_cap)
                hh = end - t
                b = gauss_step(rng, v, drift, sigma, hh)
                crossed = b > c or (s2 > 0.0 and rng.random() < cross_prob_up(v, b, c, s2 * hh))
                if crossed:
                    hh = bridge_hit_time_up(rng, v, b, c, hh, s2)
                    b = c
                bt[head] = t
                ba[head] = v
                bb[head] = b
                bh[head] = hh
                head = (head + 1) % buf_cap
                size = min(size + 1, buf_cap)
                if crossed:
                    found = 1
                    cont_last = True
                    tau = t + hh
                    unders[p] = 0.0
                    overs[p] = 0.0
                    v = c
                    break
                t = end
                v = b
                if t >= tj:
                    J = draw_jump(rng, cumw, sgn, kind, rate, tcdf, tx)
                    if v + J > c:
                        found = 2
                        tau = t
                        unders[p] = c - v
                        overs[p] = v + J - c
                        v = v + J
                        break
                    v += J
                    tj = t + next_jump_gap(rng, lam)
        kinds[p] = found
        if found == 0:
            continue
        taus[p] = tau
        # values before the passage
        yb = x
        sb = 0.0
        for k in range(nn):
            q = tau - neg_w[k]
            if q >= 0.0:
                # search the history buffer backwards
                val = np.nan
                for m in range(size):
                    i = (head - 1 - m) % buf_cap
                    if bt[i] <= q:
                        if q - bt[i] <= bh[i] and not math.isnan(ba[i]):
                            f = (q - bt[i]) / bh[i] if bh[i] > 0.0 else 0.0
                            if m == 0 and cont_last:
                                val = c - bessel_bridge_value(rng, c - ba[i], bh[i], q - bt[i], s2)
                            else:
                                val = bridge_below(rng, ba[i], bb[i], c, s2 * bh[i], f)
                        break
                probes[p, k] = val
            elif not math.isnan(x):
                s = -q
                yb = cond_advance(rng, yb, s - sb, cond_dt, sigma, drift, up_m, up_a, dn_m, dn_a, c1, d, g)
                sb = s
                probes[p, k] = -yb
        # values after the passage (strong Markov: fresh simulation)
        tprev = 0.0
        for k in range(npos):
            v = levy_advance(rng, v, pos_t[k] - tprev, sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx)
            tprev = pos_t[k]
            probes[p, nn + k] = v
    return kinds, taus, unders, overs, probes


@njit(**NJ)
def bessel3_last_exit(rng, count, x0, level, probes, dt, horizon, r_stop, sigma):
    """Bessel-3 paths (scale ``sigma``) from ``x0`` with their last exit time below ``level``.

    Steps are exact transitions; their length is ``dt`` near the level and
    grows with the distance to it. The simulation stops at ``horizon`` or once
    the path exceeds ``r_stop``; a later return below the level (probability
    ``level/r``) marks the replica as censored (``ell = inf``). Probe values
    are recorded for every probe time reached.
    """
    s2 = sigma * sigma
    ell = np.zeros(count)
    vals = np.full((count, probes.shape[0]), np.nan)
    for p in range(count):
        r = x0
        t = 0.0
        last = 0.0 if x0 < level else -1.0
        j = 0
        while t < horizon and r < r_stop:
            target = horizon
            if j < probes.shape[0]:
                target = min(target, probes[j])
            dist = abs(r - level)
            h = max(dt, dist * dist / (25.0 * s2))
            h = min(h, target - t)
            r2 = bessel3_step(rng, r, s2 * h)
            if r2 < level:
                last = t + h
            elif r < level:
                last = t + h * (level - r) / (r2 - r)
            elif h <= 1.0001 * dt and rng.random() < math.exp(-2.0 * (r - level) * (r2 - level) / (s2 * h)):
                last = t + 0.5 * h
            r = r2
            t += h
            while j < probes.shape[0] and t >= probes[j] - 1e-14:
                vals[p, j] = r
                j += 1
        if r < level or rng.random() < level / r:
            ell[p] = np.inf
        else:
            ell[p] = max(last, 0.0)
    return ell, vals


@njit(**NJ)
def coupling_gap(rng, count, ys, eps, t_cap, h_max, sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx):
    """Entrance of the difference ``xi'' - xi'`` (started at ``ys``) into ``[0, eps]``.

    The two processes are independent copies; their difference has Gaussian
    coefficient ``sigma*sqrt(2)`` and jumps of either sign from either copy.
    Entrance is exact (continuous entrance through ``0`` or ``eps``, or a jump
    landing inside). Returns ``(ok, tau, gamma, post_increment)`` where the last
    is the increment of ``xi''`` over one time unit after ``tau``.
    """
    sd = sigma * math.sqrt(2.0)
    s2 = sd * sd
    ok = np.zeros(count, np.bool_)
    taus = np.full(count, np.nan)
    gam = np.full(count, np.nan)
    inc = np.full(count, np.nan)
    for p in range(count):
        D = ys[p]
        t = 0.0
        tj = next_jump_gap(rng, 2.0 * lam)
        hit = 0 <= D <= eps
        while not hit and t < t_cap:
            dist = -D if D < 0.0 else D - eps
            h = min(max(dist * dist / (25.0 * s2), 1e-4), h_max) if s2 > 0.0 else h_max
            end = min(t + h, tj, t_cap)
            hh = end - t
            b = D + sd * math.sqrt(hh) * rng.standard_normal() if s2 > 0.0 else D
            if D > eps:
                lev = eps
                crossed = b <= eps or rng.random() < cross_prob_up(-D, -b, -eps, s2 * hh)
                if crossed:
                    t += bridge_hit_time_up(rng, -D, -b, -eps, hh, s2)
                    D = lev
                    hit = True
                    break
            else:
                lev = 0.0
                crossed = b >= 0.0 or rng.random() < cross_prob_up(D, b, 0.0, s2 * hh)
                if crossed:
                    t += bridge_hit_time_up(rng, D, b, 0.0, hh, s2)
                    D = lev
                    hit = True
                    break
            t = end
            D = b
            if t >= tj:
                J = draw_jump(rng, cumw, sgn, kind, rate, tcdf, tx)
                if rng.random() < 0.5:
                    J = -J
                D += J
                tj = t + next_jump_gap(rng, 2.0 * lam)
                if 0.0 <= D <= eps:
                    hit = True
        if hit:
            ok[p] = True
            taus[p] = t
            gam[p] = D
            inc[p] = levy_advance(rng, 0.0, 1.0, sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx)
    return ok, taus, gam, inc


@njit(**NJ)
def ping_pong(rng, count, ys, round_cap, t_cap, h_min, h_max, d_macro, var_rate, sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx):
    """Alternating first passages of two independent copies started at ``0`` and ``ys``.

    The lagging copy passes above the level of the leading one; the scheme
    stops when a passage is continuous (both copies sit at the same level).
    Returns ``(rounds, time_one, time_two)``; ``rounds = -1`` if ``round_cap``
    is hit or a passage is undetected.
    """
    rounds = np.zeros(count, np.int64)
    t1 = np.full(count, np.nan)
    t2 = np.full(count, np.nan)
    for p in range(count):
        a = 0.0
        b = ys[p]
        ta = 0.0
        tb = 0.0
        n = 0
        done = False
        while n < round_cap:
            n += 1
            # copy with the lower current value chases the other
            if a <= b:
                k, tt, u, o = passage_up(rng, a, b, t_cap, h_min, h_max, d_macro, var_rate, sigma, drift, lam, cumw, sgn, kind,
                                         rate, tcdf, tx)
                if k == 0:
                    break
                ta += tt
                a = b + o
            else:
                k, tt, u, o = passage_up(rng, b, a, t_cap, h_min, h_max, d_macro, var_rate, sigma, drift, lam, cumw, sgn, kind,
                                         rate, tcdf, tx)
                if k == 0:
                    break
                tb += tt
                b = a + o
            if k == 1:
                done = True
                break
        if done:
            rounds[p] = n
            t1[p] = ta
            t2[p] = tb
        else:
            rounds[p] = -1
    return rounds, t1, t2


@njit(**NJ)
def cond_last_exit(rng, count, x0s, level, probes, dt, horizon, sigma, drift, up_m, up_a, dn_m, dn_a, c1, d, g):
    """Conditioned paths on ``[0, horizon]``: last time below ``level`` and values at ``probes``.

    Returns ``(ell, final, vals)``; ``final`` is the value at the horizon so the
    caller can judge whether the last exit has settled.
    """
    ell = np.zeros(count)
    final = np.zeros(count)
    vals = np.full((count, probes.shape[0]), np.nan)
    n_steps = int(horizon / dt + 0.5)
    for p in range(count):
        r = x0s[p]
        last = 0.0
        j = 0
        for k in range(n_steps):
            r2 = cond_advance(rng, r, dt, dt, sigma, drift, up_m, up_a, dn_m, dn_a, c1, d, g)
            t = (k + 1) * dt
            if r2 < level:
                last = t
            elif r < level:
                last = t - dt + dt * (level - r) / (r2 - r)
            r = r2
            while j < probes.shape[0] and t >= probes[j] - 1e-12:
                vals[p, j] = r
                j += 1
        ell[p] = last
        final[p] = r
    return ell, final, vals


@njit(**NJ)
def passage_batch(rng, count, x0s, c, t_cap, h_min, h_max, d_macro, var_rate, sigma, drift, lam, cumw, sgn, kind,
                  rate, tcdf, tx):
    """:func:`passage_up` for many starts; returns ``(kind, time, under, over)`` arrays."""
    kinds = np.zeros(count, np.int64)
    times = np.full(count, np.nan)
    under = np.full(count, np.nan)
    over = np.full(count, np.nan)
    for p in range(count):
        k, t, u, o = passage_up(rng, x0s[p], c, t_cap, h_min, h_max, d_macro, var_rate, sigma, drift, lam, cumw,
                                sgn, kind, rate, tcdf, tx)
        kinds[p] = k
        if k > 0:
            times[p] = t
            under[p] = u
            over[p] = o
    return kinds, times, under, over


def macro_params(model, miss: float = 1e-10):
    """``(d_macro, var_rate)`` for the far-field steps of :func:`passage_up`.

    ``var_rate`` is the variance of one unit of time. ``d_macro`` is the
    smallest distance at which a jump larger than half the distance inside one
    far-field step has probability below ``miss``.
    """
    from scipy import integrate
    from .levy_model import FiniteActivity, levy_tail
    j = model.jumps
    var = model.sigma ** 2
    if isinstance(j, FiniteActivity):
        var += j.rate * j.second_moment()
    elif j is not None:
        if j.tempering <= 0.0:
            return np.inf, 0.0
        val, _ = integrate.quad(lambda u: u * u * float(j.density(u)), j.epsilon, np.inf, limit=200)
        var += abs(val)
    if var <= 0.0:
        return np.inf, 0.0
    d = 4.0
    while d < 1e4:
        h = (d / 8.0) ** 2 / var
        tail = levy_tail(model, d / 2.0) if model.has_positive_jumps else 0.0
        if h * tail <= miss:
            return d, float(var)
        d *= 1.25
    return np.inf, float(var)
