"""Compiled kernels for exponential functionals and Lamperti time changes.

The clock is ``f(y) = exp(index * y)`` and the state map is ``exp``.
Integrals use the trapezoid rule between knots; jump instants are knots, so
the integrand is never averaged across a jump on the forward side.
"""

import math

import numpy as np
from numba import njit

from ._kernels import NJ, draw_jump, gauss_step, next_jump_gap
from ._mc import cond_advance, h_eval_zero
from ._passage import macro_step

OK, BACK_REJECTED, FWD_CENSORED = 0, 1, 2


@njit(**NJ)
def forward_clock(rng, xi, acc, probes, j0, out, dt, index, s_cap, var_rate, d_macro, t_cap, sigma, drift, lam, cumw,
                  sgn, kind, rate, tcdf, tx):
    """Run the path from ``xi`` with clock value ``acc`` until every ``probes[j:]`` is reached.

    Steps are ``dt`` in clock units (``dt * exp(-index * xi)`` in real time),
    capped so the trapezoid error of one step, about
    ``exp(index*xi) * index^2 * var_rate * s**2 / 12``, stays below ``dt / 1000``
    and the step standard deviation stays below ``0.5 / index`` (never
    below ``s_cap``). Below the level ``m = (log(dt) - 12) / index`` the
    integrand is negligible: steps have standard deviation ``(m - xi)/5`` so
    the path inside a step stays below ``m``, and far enough down (beyond
    ``d_macro``) jumps are summed without being located. Writes ``exp(xi)``
    at the probe clock values into ``out``; returns False when ``t_cap`` real
    time passes first.
    """
    m = probes.shape[0]
    j = j0
    t = 0.0
    tj = next_jump_gap(rng, lam)
    low = (math.log(dt) - 12.0) / index
    var_eff = index * index * var_rate
    while j < m:
        if t >= t_cap:
            return False
        depth = low - xi
        if depth > 0.0 and var_rate > 0.0:
            sd = max(depth / 5.0, 0.5 / index)
            s = sd * sd / var_rate
            if depth > d_macro:
                xi = macro_step(rng, xi, s, sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx)
                t += s
                tj = t + next_jump_gap(rng, lam)
                continue
        else:
            fx = math.exp(index * xi)
            s = dt / fx
            if var_eff > 0.0:
                s = min(s, max(s_cap, min(math.sqrt(0.012 * dt / (fx * var_eff)), 0.25 / var_eff)))
        fx = math.exp(index * xi)
        at_jump = False
        if t + s >= tj:
            s = tj - t
            at_jump = True
        xn = gauss_step(rng, xi, drift, sigma, s)
        an = acc + 0.5 * (fx + math.exp(index * xn)) * s
        while j < m and probes[j] <= an:
            fr = (probes[j] - acc) / (an - acc) if an > acc else 1.0
            out[j] = math.exp(xi + fr * (xn - xi))
            j += 1
        acc = an
        xi = xn
        if at_jump:
            t = tj
            xi += draw_jump(rng, cumw, sgn, kind, rate, tcdf, tx)
            tj = t + next_jump_gap(rng, lam)
        else:
            t += s
    return True


@njit(**NJ)
def backward_clock(rng, x, bv, bc, dt, index, tail_tol, tail_coef, b_far, var_rate, sigma, drift, lam, cumw, sgn,
                   kind, rate, tcdf, tx, up_m, up_a, dn_m, dn_a, c1, d, g):
    """Integrate ``exp(-index * B)`` along the conditioned process ``B`` from ``x``.

    Knot values go to ``bv`` and the running integral to ``bc``. Near 0 the
    step follows the same accuracy rule as :func:`forward_clock`; beyond ``b_far`` it is
    ``((B - b_far + 1)/5)^2 / var_rate`` so a return below ``b_far`` within one
    step is negligible, and with jumps the step is an exact unconditioned
    increment plus the drift ``var_rate * h'/h`` that the transform adds at
    large ``B`` (Gaussian and jump parts together).
    Stops once the expected remaining integral ``tail_coef / B`` is below
    ``tail_tol`` times the integral so far.

    Returns ``(n_knots, integral, tail_estimate, ok)``.
    """
    cap = bv.shape[0]
    b = x
    acc = 0.0
    bv[0] = b
    bc[0] = 0.0
    n = 1
    while True:
        fb = math.exp(-index * b)
        if b > b_far:
            s = ((b - b_far + 1.0) / 5.0) ** 2 / var_rate
            if lam > 0.0:
                hv, hd = h_eval_zero(b, c1, d, g)
                bn = macro_step(rng, b, s, sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx)
                bn = abs(bn + var_rate * hd / hv * s)
            else:
                bn = cond_advance(rng, b, s, s, sigma, drift, up_m, up_a, dn_m, dn_a, c1, d, g)
        else:
            s = dt / fb
            s = min(s, max(dt, math.sqrt(0.012 * dt / (fb * index * index * var_rate))))
            bn = cond_advance(rng, b, s, max(dt, min(0.1 * s, 0.01)), sigma, drift, up_m, up_a, dn_m, dn_a, c1, d, g)
        acc += 0.5 * (fb + math.exp(-index * bn)) * s
        b = bn
        bv[n] = b
        bc[n] = acc
        n += 1
        if b > b_far:
            tail = tail_coef / b
            if tail <= tail_tol * acc:
                return n, acc, tail, True
        if n >= cap:
            return n, acc, math.inf, False


@njit(**NJ)
def entrance_marginals(rng, count, xs, ys, probes, dt, index, tail_tol, tail_coef, b_far, var_rate, d_macro, s_cap,
                       t_cap,
                       buf_cap, sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx, up_m, up_a, dn_m, dn_a, c1, d, g):
    """Values ``X_t`` at the sorted clock times ``probes`` for the process entering from 0.

    ``xs``/``ys`` are the undershoot/overshoot pairs at time 0. Returns
    ``(values, status, clock_at_zero, tail_bound)``.
    """
    m = probes.shape[0]
    vals = np.full((count, m), np.nan)
    status = np.zeros(count, np.int64)
    i0 = np.full(count, np.nan)
    tails = np.full(count, np.nan)
    bv = np.empty(buf_cap)
    bc = np.empty(buf_cap)
    row = np.empty(m)
    for p in range(count):
        n, total, bound, ok = backward_clock(rng, xs[p], bv, bc, dt, index, tail_tol, tail_coef, b_far, var_rate,
                                             sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx,
                                             up_m, up_a, dn_m, dn_a, c1, d, g)
        if not ok:
            status[p] = BACK_REJECTED
            continue
        i0[p] = total
        tails[p] = bound
        # probes before the clock reaches its value at time 0 sit on the backward part
        j = 0
        k = n - 1
        while j < m and probes[j] <= total:
            target = total - probes[j]
            while k > 0 and bc[k - 1] >= target:
                k -= 1
            # bc[k-1] < target <= bc[k]
            if k == 0:
                bval = bv[0]
            else:
                fr = (target - bc[k - 1]) / (bc[k] - bc[k - 1]) if bc[k] > bc[k - 1] else 1.0
                bval = bv[k - 1] + fr * (bv[k] - bv[k - 1])
            row[j] = math.exp(-bval)
            j += 1
        if j < m:
            if not forward_clock(rng, ys[p], total, probes, j, row, dt, index, s_cap, var_rate, d_macro, t_cap,
                                 sigma, drift, lam, cumw, sgn, kind, rate, tcdf, tx):
                status[p] = FWD_CENSORED
                continue
        for q in range(m):
            vals[p, q] = row[q]
    return vals, status, i0, tails


@njit(**NJ)
def positive_marginals(rng, count, y0, probes, dt, index, s_cap, var_rate, d_macro, t_cap, sigma, drift, lam, cumw, sgn, kind,
                       rate, tcdf, tx):
    """Values at sorted clock times for the classical construction from ``exp(y0)``; returns ``(values, censored)``."""
    m = probes.shape[0]
    vals = np.full((count, m), np.nan)
    cens = np.zeros(count, np.bool_)
    row = np.empty(m)
    for p in range(count):
        if forward_clock(rng, y0, 0.0, probes, 0, row, dt, index, s_cap, var_rate, d_macro, t_cap, sigma, drift, lam, cumw,
                         sgn, kind, rate, tcdf, tx):
            for q in range(m):
                vals[p, q] = row[q]
        else:
            cens[p] = True
    return vals, cens
