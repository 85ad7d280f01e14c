"""Compiled building blocks shared by the simulation routines.

Model arguments are passed flat as ``(sigma, drift, lam, cumw, sgn, kind, rate,
tcdf, tx)``, see :meth:`LevyModel.kernel_args`. Every kernel receives a
``numpy.random.Generator`` and draws from it sequentially.
"""

import math

import numpy as np
from numba import njit

NJ = dict(cache=True, nogil=True)


@njit(**NJ)
def draw_jump(rng, cumw, sgn, kind, rate, tcdf, tx):
    u = rng.random()
    k = 0
    while k < cumw.shape[0] - 1 and u > cumw[k]:
        k += 1
    if kind[k] == 0:
        return sgn[k] * rng.standard_exponential() / rate[k]
    v = rng.random()
    return sgn[k] * np.interp(v, tcdf[k], tx[k])


@njit(**NJ)
def next_jump_gap(rng, lam):
    if lam <= 0.0:
        return np.inf
    return rng.standard_exponential() / lam


@njit(**NJ)
def gauss_step(rng, a, drift, sigma, h):
    if sigma > 0.0:
        return a + drift * h + sigma * math.sqrt(h) * rng.standard_normal()
    return a + drift * h


@njit(**NJ)
def bridge_max(rng, a, b, s2h):
    """Exact maximum of a Brownian bridge from ``a`` to ``b`` with variance parameter ``s2h``."""
    if s2h <= 0.0:
        return max(a, b)
    u = 1.0 - rng.random()
    d = b - a
    return 0.5 * (a + b + math.sqrt(d * d - 2.0 * s2h * math.log(u)))


@njit(**NJ)
def bridge_min(rng, a, b, s2h):
    if s2h <= 0.0:
        return min(a, b)
    u = 1.0 - rng.random()
    d = b - a
    return 0.5 * (a + b - math.sqrt(d * d - 2.0 * s2h * math.log(u)))


@njit(**NJ)
def cross_prob_up(a, b, c, s2h):
    """Probability that a Brownian bridge from ``a`` to ``b`` (both below ``c``) exceeds ``c``."""
    if a >= c or b >= c:
        return 1.0
    if s2h <= 0.0:
        return 0.0
    return math.exp(-2.0 * (c - a) * (c - b) / s2h)


@njit(**NJ)
def bridge_value(rng, a, b, s2h, f):
    """Value of a Brownian bridge at fraction ``f`` of its length."""
    return a + (b - a) * f + math.sqrt(max(s2h * f * (1.0 - f), 0.0)) * rng.standard_normal()


@njit(**NJ)
def bessel_bridge_value(rng, r0, T, u, s2):
    """Bessel-3 bridge from ``r0`` to 0 over ``[0, T]`` at time ``u`` (norm of a 3-d Brownian bridge)."""
    if T <= 0.0:
        return 0.0
    f = u / T
    sd = math.sqrt(max(s2 * u * (T - u) / T, 0.0))
    a = r0 * (1.0 - f) + sd * rng.standard_normal()
    b = sd * rng.standard_normal()
    c = sd * rng.standard_normal()
    return math.sqrt(a * a + b * b + c * c)


@njit(**NJ)
def bridge_hit_time_up(rng, a, b, c, h, s2):
    """First hitting time of level ``c`` by a Brownian bridge on ``[0, h]`` known to reach it.

    Recursive bisection: the midpoint is drawn from the bridge law conditioned on
    a crossing (rejection), then the half containing the first crossing is kept.
    """
    if s2 <= 0.0:
        if b == a:
            return 0.0
        return min(max((c - a) / (b - a), 0.0), 1.0) * h
    t0 = 0.0
    for _ in range(40):
        if h < 1e-13:
            break
        half = 0.5 * h
        p1 = 1.0
        pc = 1.0
        m = a
        for _rej in range(100000):
            m = 0.5 * (a + b) + math.sqrt(s2 * h * 0.25) * rng.standard_normal()
            p1 = cross_prob_up(a, m, c, s2 * half)
            p2 = cross_prob_up(m, b, c, s2 * half)
            pc = 1.0 - (1.0 - p1) * (1.0 - p2)
            if rng.random() < pc:
                break
        if rng.random() * pc < p1:
            b = m
        else:
            a = m
            t0 += half
        h = half
    return t0 + 0.5 * h


@njit(**NJ)
def simulate_skeleton(sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx,
                      rng, x0, n_steps, dt, max_jumps):
    """Grid values at ``k*dt`` plus exact jump ledger; Gaussian increments split at jump times."""
    grid = np.empty(n_steps + 1)
    cap = 16
    jt = np.empty(cap)
    jl = np.empty(cap)
    js = np.empty(cap)
    nj = 0
    grid[0] = x0
    x = x0
    t = 0.0
    horizon = n_steps * dt
    tj = next_jump_gap(rng, lam)
    for k in range(n_steps):
        t_end = (k + 1) * dt
        while tj <= t_end and tj <= horizon:
            x = gauss_step(rng, x, drift, sigma, tj - t)
            J = draw_jump(rng, cumw, sgn, kind, rate, tcdf, tx)
            if nj == cap:
                cap *= 2
                jt2 = np.empty(cap)
                jl2 = np.empty(cap)
                js2 = np.empty(cap)
                jt2[:nj] = jt[:nj]
                jl2[:nj] = jl[:nj]
                js2[:nj] = js[:nj]
                jt, jl, js = jt2, jl2, js2
            if nj >= max_jumps:
                return grid, jt[:0], jl[:0], js[:0], -1
            jt[nj] = tj
            jl[nj] = x
            js[nj] = J
            nj += 1
            x = x + J
            t = tj
            tj = t + next_jump_gap(rng, lam)
        x = gauss_step(rng, x, drift, sigma, t_end - t)
        t = t_end
        grid[k + 1] = x
    return grid, jt[:nj], jl[:nj], js[:nj], nj


@njit(**NJ)
def passage_up_on_knots(rng, kt, kl, kr, s2, c, bridge):
    """First passage strictly above ``c`` along a knot sequence.

    ``kt`` are knot times; ``kl``/``kr`` left and right values at each knot
    (they differ only at jump knots). Between knots the path is a Brownian
    bridge (``bridge=True``) or a straight line.

    Returns ``(time, undershoot, overshoot, by_jump, detected)``.
    """
    n = kt.shape[0]
    if kr[0] > c:
        return kt[0], 0.0, kr[0] - c, False, True
    for i in range(1, n):
        a = kr[i - 1]
        b = kl[i]
        h = kt[i] - kt[i - 1]
        hit = b > c
        if not hit and bridge and s2 > 0.0 and h > 0.0:
            hit = rng.random() < cross_prob_up(a, b, c, s2 * h)
        if hit:
            if bridge:
                tau = kt[i - 1] + bridge_hit_time_up(rng, a, b, c, h, s2)
            else:
                tau = kt[i - 1] + (c - a) / (b - a) * h
            return tau, 0.0, 0.0, False, True
        if kr[i] > c:
            return kt[i], c - kl[i], kr[i] - c, True, True
    return np.nan, np.nan, np.nan, False, False
