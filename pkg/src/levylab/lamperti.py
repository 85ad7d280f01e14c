"""Exponential functionals, Lamperti time changes and the entrance law from 0+.

A two-sided path ``xi`` with ``xi_s -> -inf`` as ``s -> -inf`` defines the
clock ``I(t) = int_{-inf}^t f(xi_s) ds``; inverting it and mapping space
through ``g`` gives a positive self-similar Markov process started at 0+.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from . import _lamp, _passage
from .errors import CoverageExceeded, DomainError, RefusesInfiniteMean, TailUnbounded, Unsupported
from .fluctuation import RhoLaw, conditioned_method
from .ladder import LadderData
from .levy_model import LadderClass, LevyModel, classify_ladder_mean
from .report import CheckReport
from .seeding import block_rng, run_blocks_with_starts
from .stationary import TwoSidedPath, _cond_args
from .stats import ks_distance, mean_and_se


@dataclass(frozen=True)
class ClockSpec:
    """Clock density ``f`` and state map ``g``.

    ``index`` is set when ``f(y) = exp(index * y)`` and ``g = exp``; the
    compiled ensemble routines need it. The resulting process is
    self-similar with ``(c X_{t / c**index})`` equal in law to ``X`` from ``c x``.
    """

    f: Callable = np.exp
    g: Callable = np.exp
    index: float | None = 1.0

    @classmethod
    def exponential(cls, index: float = 1.0) -> "ClockSpec":
        if index <= 0:
            raise DomainError("index must be positive")
        if index == 1.0:
            return cls()
        return cls(lambda y: np.exp(index * np.asarray(y, float)), np.exp, float(index))

    def integrability(self, lower: float = -50.0) -> dict:
        """``int_{-inf}^0 |y| f(y) dy`` (truncated at ``lower``) and the value of ``f`` there."""
        val, err = integrate.quad(lambda y: abs(y) * float(self.f(y)), lower, 0.0, limit=200)
        tail_f = float(self.f(lower))
        return {"moment": val, "quad_error": err, "f_at_lower": tail_f,
                "finite": bool(np.isfinite(val) and tail_f * lower**2 < 1e-6 * max(val, 1e-300))}

    def validate(self, values) -> None:
        """Check ``f > 0`` and ``g`` strictly increasing on the sampled range."""
        v = np.unique(np.asarray(values, float))
        v = v[np.isfinite(v)]
        if v.size == 0:
            return
        fv = np.asarray(self.f(v), float)
        if np.any(~(fv > 0)) or np.any(~np.isfinite(fv)):
            raise DomainError("clock density must be positive and finite on the sampled range")
        gv = np.asarray(self.g(v), float)
        if v.size > 1 and np.any(np.diff(gv) <= 0):
            raise DomainError("state map must be strictly increasing on the sampled range")


DEFAULT_CLOCK = ClockSpec()


# ---------------------------------------------------------------------------
# single paths

@dataclass
class ClockTable:
    """Knots of a two-sided path on the real time axis with the running clock.

    ``left``/``right`` are the path values just before/at each knot;
    ``clock[i]`` is the integral from the first knot to ``times[i]``.
    """

    times: np.ndarray
    left: np.ndarray
    right: np.ndarray
    clock: np.ndarray
    tail_bound: float

    def _locate(self, t):
        t = np.asarray(t, float)
        i = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        return t, i

    def value(self, t):
        t, i = self._locate(t)
        h = self.times[i + 1] - self.times[i]
        fr = np.where(h > 0, (t - self.times[i]) / np.where(h > 0, h, 1.0), 0.0)
        out = self.right[i] + fr * (self.left[i + 1] - self.right[i])
        out = np.where(t >= self.times[-1], self.right[-1], out)
        return out

    def clock_at(self, t, f):
        """Clock at ``t``: trapezoid on the partial segment."""
        t, i = self._locate(t)
        v = self.value(t)
        part = 0.5 * (f(self.right[i]) + f(v)) * (t - self.times[i])
        return self.clock[i] + part


def clock_table(path: TwoSidedPath, clock: ClockSpec = DEFAULT_CLOCK, tail_tol: float = 1e-3) -> ClockTable:
    """Build the clock along a two-sided path.

    Raises
    ------
    TailUnbounded
        If the backward part has not decayed enough for the discarded tail
        ``int_{-inf}^{-T} f`` to be below ``tail_tol`` times the clock at 0.
    """
    bt, bl, br = path.backward.knots()
    ft, fl, fr = path.forward.knots()
    # backward knot at u sits at s = -u; xi_{-u} = -B_{u-}, xi_{(-u)-} = -B_u
    times = np.concatenate([-bt[::-1], ft[1:]])
    left = np.concatenate([-br[::-1], fl[1:]])
    right = np.concatenate([-bl[::-1], fr[1:]])
    right[len(bt) - 1] = path.forward.start_value
    clock.validate(np.concatenate([left, right]))
    fl_, fr_ = clock.f(left), clock.f(right)
    seg = 0.5 * (fr_[:-1] + fl_[1:]) * np.diff(times)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    tail = _tail_bound(float(br[-1]), float(bt[-1]), clock)
    at_zero = cum[len(bt) - 1]
    if not (tail <= tail_tol * at_zero):
        raise TailUnbounded(f"discarded tail bound {tail:.3g} exceeds {tail_tol:g} x I(0) = {at_zero:.3g}")
    return ClockTable(times, left, right, cum, tail)


def _tail_bound(b_end: float, horizon: float, clock: ClockSpec) -> float:
    """Bound on ``int_T^inf f(-B_u) du`` assuming ``B_u >= b_end * sqrt(u / T)`` beyond ``T``."""
    if b_end <= 0:
        return math.inf
    if clock.index is not None:
        a = clock.index * b_end
        return 2.0 * horizon * math.exp(-a) * (1.0 / a + 1.0 / a**2)
    val, _ = integrate.quad(lambda v: float(clock.f(-b_end * v)) * 2.0 * horizon * v, 1.0, np.inf, limit=200)
    return val


@dataclass(frozen=True)
class FunctionalValue:
    """Clock value with the bound on the discarded backward tail."""

    t: float
    value: float
    tail_bound: float


def exp_functional(path: TwoSidedPath, t: float, clock: ClockSpec = DEFAULT_CLOCK, *,
                   tail_tol: float = 1e-3) -> FunctionalValue:
    """``I(t) = int f(xi_s) ds`` over ``[-horizon_back, t]``; the rest of the backward tail is only bounded."""
    table = clock_table(path, clock, tail_tol)
    if not (table.times[0] <= t <= table.times[-1]):
        raise CoverageExceeded(f"t = {t} outside [{table.times[0]}, {table.times[-1]}]")
    return FunctionalValue(float(t), float(table.clock_at(t, clock.f)), table.tail_bound)


@dataclass
class TimeChange:
    """Inverse clock ``sigma`` and the process ``X = g(xi_sigma)`` on ``t_grid``."""

    t_grid: np.ndarray
    sigma: np.ndarray
    values: np.ndarray
    tail_bound: float


def time_change(path: TwoSidedPath, clock: ClockSpec = DEFAULT_CLOCK, t_grid=(1.0,), *,
                tail_tol: float = 1e-3) -> TimeChange:
    """Invert the clock on ``t_grid`` (bisection over knots, linear within a segment)."""
    t_grid = np.atleast_1d(np.asarray(t_grid, float))
    if np.any(t_grid <= 0):
        raise DomainError("clock times must be positive")
    table = clock_table(path, clock, tail_tol)
    if np.any(t_grid > table.clock[-1]):
        raise CoverageExceeded(f"clock reaches only {table.clock[-1]:.4g} by the end of the forward part")
    sig, vals = _invert(table, t_grid)
    return TimeChange(t_grid, sig, clock.g(vals), table.tail_bound)


def _invert(table: ClockTable, targets):
    cum = table.clock
    i = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(cum) - 2)
    dc = cum[i + 1] - cum[i]
    fr = np.where(dc > 0, (targets - cum[i]) / np.where(dc > 0, dc, 1.0), 0.0)
    sig = table.times[i] + fr * (table.times[i + 1] - table.times[i])
    vals = table.right[i] + fr * (table.left[i + 1] - table.right[i])
    return sig, vals


def inverse_clock(path: TwoSidedPath, u, clock: ClockSpec = DEFAULT_CLOCK, *, tail_tol: float = 1e-3):
    """``sigma(u)`` for clock values ``u``."""
    table = clock_table(path, clock, tail_tol)
    u = np.atleast_1d(np.asarray(u, float))
    if np.any(u > table.clock[-1]) or np.any(u < 0):
        raise CoverageExceeded("clock value outside the covered range")
    return _invert(table, u)[0]


# ---------------------------------------------------------------------------
# ensembles

@dataclass
class PssmpSample:
    """Marginals ``values[:, j]`` at ``t_grid[j]``; censored rows hold NaN."""

    t_grid: np.ndarray
    values: np.ndarray
    censored: np.ndarray
    start: float
    seed: int
    clock_at_zero: np.ndarray | None = None
    tail_bound: np.ndarray | None = None
    flags: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    def marginal(self, t: float) -> np.ndarray:
        j = int(np.argmin(np.abs(self.t_grid - t)))
        if not math.isclose(self.t_grid[j], t, rel_tol=1e-12, abs_tol=1e-12):
            raise DomainError(f"t = {t} is not on the sample grid")
        col = self.values[:, j]
        return col[~self.censored]

    def marginal_rows(self, t: float, rows: slice) -> np.ndarray:
        """:meth:`marginal` restricted to a block of replicas."""
        j = int(np.argmin(np.abs(self.t_grid - t)))
        if not math.isclose(self.t_grid[j], t, rel_tol=1e-12, abs_tol=1e-12):
            raise DomainError(f"t = {t} is not on the sample grid")
        col = self.values[rows, j]
        return col[~self.censored[rows]]

    def to_csv(self, path) -> None:
        """Write ``t, X_t, replica, censored`` rows."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "X_t", "replica", "censored"])
            for r in range(self.n):
                for j, t in enumerate(self.t_grid):
                    v = self.values[r, j]
                    w.writerow([repr(float(t)), repr(float(v)) if np.isfinite(v) else "", r,
                                int(self.censored[r])])


def _sorted_grid(t_grid):
    t = np.atleast_1d(np.asarray(t_grid, float))
    if t.size == 0 or np.any(~(t > 0)):
        raise DomainError("t_grid must hold positive times")
    order = np.argsort(t)
    return t, order


def _index_of(clock: ClockSpec) -> float:
    if clock.index is None or clock.g is not np.exp:
        raise Unsupported("ensemble routines need f = exp(index * y) and g = exp")
    return float(clock.index)


def _step_cap(model: LevyModel, index: float) -> float:
    caps = [50.0]
    if model.sigma > 0:
        caps.append(0.01 / (index * model.sigma) ** 2)
    if model.drift != 0:
        caps.append(0.1 / (index * abs(model.drift)))
    return min(caps)


def pssmp_from_positive(model: LevyModel, x: float, t_grid, dt: float = 1e-3, seed: int = 0, n_paths: int = 1, *,
                        clock: ClockSpec = DEFAULT_CLOCK, t_cap: float = 1e12, stream: int = 201) -> PssmpSample:
    """Classical construction from ``x > 0``: ``X_t = exp(xi_{gamma(t)})`` with ``xi_0 = log x``.

    ``dt`` is the step in clock units. Rows whose real time exceeds ``t_cap``
    before the last grid time are censored.
    """
    if not x > 0:
        raise DomainError("start must be positive")
    index = _index_of(clock)
    t, order = _sorted_grid(t_grid)
    probes = t[order]
    starts = np.full(int(n_paths), math.log(x))

    def kernel(rng, count, st, *args):
        return _lamp.positive_marginals(rng, count, float(st[0]), *args)

    d_macro, var_rate = _passage.macro_params(model)
    vals, cens = run_blocks_with_starts(kernel, starts, seed, stream, probes, float(dt), index,
                                        _step_cap(model, index), var_rate, d_macro, float(t_cap),
                                        *model.kernel_args())
    out = np.empty_like(vals)
    out[:, order] = vals
    return PssmpSample(t, out, cens, float(x), seed)


def entrance_sample(model: LevyModel, ladder: LadderData, rho: RhoLaw, t_grid, n_paths: int = 100_000,
                    seed: int = 0, *, dt: float = 1e-3, clock: ClockSpec = DEFAULT_CLOCK, tail_tol: float = 1e-3,
                    t_cap: float = 1e12, buf_cap: int = 400_000, stream: int = 211) -> PssmpSample:
    """Marginals of the process entering from 0+, built by time-changing the stationary two-sided process.

    The backward part runs until the expected remaining clock, ``tail_coef/B``
    with ``tail_coef`` from :func:`backward_tail_coef`, is below ``tail_tol``
    times the clock accumulated so far.
    """
    if classify_ladder_mean(model) != LadderClass.FINITE:
        raise RefusesInfiniteMean("entrance from 0+ needs a finite-mean ladder height")
    index = _index_of(clock)
    cond = _cond_args(model, ladder)
    if cond is None:
        raise Unsupported(f"no conditioned sampler for this model ({conditioned_method(model, ladder)})")
    t, order = _sorted_grid(t_grid)
    probes = t[order]
    xs, ys = rho.sample(int(n_paths), block_rng(seed, stream, 10**6))
    pairs = np.stack([xs, ys], axis=1)

    def kernel(rng, count, st, *args):
        return _lamp.entrance_marginals(rng, count, st[:, 0].copy(), st[:, 1].copy(), *args)

    d_macro, var_rate = _passage.macro_params(model)
    vals, status, i0, tails = run_blocks_with_starts(
        kernel, pairs, seed, stream, probes, float(dt), index, float(tail_tol), backward_tail_coef(ladder, index),
        8.0 / index, var_rate, d_macro, _step_cap(model, index), float(t_cap), int(buf_cap), *model.kernel_args(), *cond)
    out = np.empty_like(vals)
    out[:, order] = vals
    smp = PssmpSample(t, out, status != _lamp.OK, 0.0, seed, i0, tails)
    smp.flags["backward_rejected"] = int(np.sum(status == _lamp.BACK_REJECTED))
    smp.flags["forward_censored"] = int(np.sum(status == _lamp.FWD_CENSORED))
    if conditioned_method(model, ladder) == "transform":
        smp.flags["approximate"] = f"backward part from the transform sampler, dt={dt:g}"
    return smp


def backward_tail_coef(ladder: LadderData, index: float = 1.0) -> float:
    """Constant ``K`` with ``E_b[int_0^inf exp(-index*B_u) du] <= K / b`` for the conditioned process from large ``b``.

    Uses ``G_up(b, y) = G_killed(b, y) U_minus(y) / U_minus(b)``,
    ``G_killed(b, y) <= U_plus(y) / EH`` and the linear growth of ``U_minus``.
    """
    val, _ = integrate.quad(lambda y: math.exp(-index * y) * float(ladder.U_minus(y)) * float(ladder.U_plus(y)),
                            0.0, np.inf, limit=200)
    slope = _linear_slope(ladder.U_minus)
    return val / ladder.EH / slope


def _linear_slope(curve) -> float:
    far = np.array([1e3, 2e3])
    v = np.asarray(curve(far), float)
    return float((v[1] - v[0]) / 1e3)


def expected_clock_at_zero(ladder: LadderData, index: float = 1.0) -> float:
    """``(1/EH) int_0^inf exp(-index*y) U_minus(y) dy``: the mean of ``I(0)``."""
    val, _ = integrate.quad(lambda y: math.exp(-index * y) * float(ladder.U_minus(y)), 0.0, np.inf, limit=200)
    return val / ladder.EH


def exp_functional_mean_check(model: LevyModel, ladder: LadderData, rho: RhoLaw, n_paths: int = 100_000,
                              seed: int = 0, *, dt: float = 1e-3, clock: ClockSpec = DEFAULT_CLOCK,
                              n_se: float = 3.0, oracle: float | None = None,
                              sample: PssmpSample | None = None) -> CheckReport:
    """Monte Carlo mean of ``I(0)`` against its potential-measure formula (or a supplied oracle).

    ``sample`` reuses an existing entrance ensemble instead of drawing one.
    """
    index = _index_of(clock)
    smp = sample if sample is not None else entrance_sample(model, ladder, rho, [1.0], n_paths, seed, dt=dt,
                                                            clock=clock, t_cap=1.0)
    n_paths = smp.n
    i0 = smp.clock_at_zero[np.isfinite(smp.clock_at_zero)]
    m, se = mean_and_se(i0)
    target = expected_clock_at_zero(ladder, index) if oracle is None else float(oracle)
    rep = CheckReport("exp_functional_mean", n=n_paths, seed=seed)
    rep.info("mean", m, stderr=se)
    rep.info("oracle", target)
    rep.add("z_score", abs(m - target) / se, n_se)
    rep.info("rejected_fraction", smp.flags["backward_rejected"] / n_paths)
    rep.info("max_tail_bound", float(np.nanmax(smp.tail_bound)))
    rep.flags.update({k: v for k, v in smp.flags.items() if isinstance(v, str)})
    return rep


def entrance_convergence_check(model: LevyModel, ladder: LadderData, rho: RhoLaw, x_list=(0.5, 0.1, 0.02),
                               t_probes=(1.0,), n_paths: int = 100_000, seed: int = 0, *, dt: float = 1e-3,
                               clock: ClockSpec = DEFAULT_CLOCK, ks_tol: float = 0.03,
                               sample: PssmpSample | None = None) -> CheckReport:
    """Two-sample KS between marginals from ``x`` and from 0+; must shrink as ``x`` decreases.

    Monotonicity is judged up to the two-sample KS noise ``1.36 sqrt(2/n)``.
    ``sample`` reuses an entrance ensemble that covers ``t_probes``.
    """
    if classify_ladder_mean(model) != LadderClass.FINITE:
        raise RefusesInfiniteMean("entrance from 0+ needs a finite-mean ladder height")
    x_list = sorted(map(float, x_list), reverse=True)
    rep = CheckReport("entrance_convergence", n=n_paths * (len(x_list) + 1), seed=seed)
    ref = sample if sample is not None else entrance_sample(model, ladder, rho, t_probes, n_paths, seed, dt=dt,
                                                            clock=clock)
    rep.info("censored_entrance", float(ref.censored.mean()))
    noise = 1.36 * math.sqrt(2.0 / n_paths)
    for t in t_probes:
        ks = []
        for k, x in enumerate(x_list):
            smp = pssmp_from_positive(model, x, t_probes, dt, seed, n_paths, clock=clock, stream=221 + k)
            r = ks_distance(smp.marginal(t), ref.marginal(t))
            ks.append(r.statistic)
            rep.info(f"ks_x{x:g}_t{t:g}", r.statistic)
            rep.info(f"censored_x{x:g}", float(smp.censored.mean()))
        rep.add(f"ks_t{t:g}_nonincreasing", bool(np.all(np.diff(ks) <= noise)), True, "==")
        rep.add(f"ks_t{t:g}_terminal", float(ks[-1]), ks_tol)
    rep.details["x_list"] = x_list
    rep.details["noise_level"] = noise
    rep.flags.update({k: v for k, v in ref.flags.items() if isinstance(v, str)})
    return rep


def self_similarity_check(model: LevyModel, ladder: LadderData | None = None, rho: RhoLaw | None = None, *,
                          c: float = 2.0, t: float = 1.0, x: float | None = None, n_paths: int = 100_000,
                          seed: int = 0, dt: float = 1e-3, clock: ClockSpec = DEFAULT_CLOCK,
                          ks_tol: float = 0.02, sample: PssmpSample | None = None) -> CheckReport:
    """KS between ``c X_{t/c^index}`` and ``X_t`` from independent ensembles.

    With ``x`` given the two ensembles start at ``x`` and ``c x``; otherwise
    both enter from 0+. A supplied entrance ``sample`` covering both times is
    split into two disjoint halves, one per time.
    """
    index = _index_of(clock)
    t_small = t / c**index
    rep = CheckReport("self_similarity", n=2 * n_paths, seed=seed)
    if x is None:
        if ladder is None or rho is None:
            raise DomainError("entrance from 0+ needs the ladder data and rho")
        if sample is not None:
            half = sample.n // 2
            lo = sample.marginal_rows(t_small, slice(0, half))
            hi = sample.marginal_rows(t, slice(half, sample.n))
            r = ks_distance(c * lo, hi)
            rep.add("ks", r.statistic, ks_tol, pvalue=r.pvalue)
            rep.details.update({"c": c, "t": t, "x": x, "index": index, "split": half})
            return rep
        a = entrance_sample(model, ladder, rho, [t_small], n_paths, seed, dt=dt, clock=clock, stream=231)
        b = entrance_sample(model, ladder, rho, [t], n_paths, seed, dt=dt, clock=clock, stream=232)
    else:
        a = pssmp_from_positive(model, x, [t_small], dt, seed, n_paths, clock=clock, stream=233)
        b = pssmp_from_positive(model, c * x, [t], dt, seed, n_paths, clock=clock, stream=234)
    r = ks_distance(c * a.marginal(t_small), b.marginal(t))
    rep.add("ks", r.statistic, ks_tol, pvalue=r.pvalue)
    rep.info("censored", float(a.censored.mean() + b.censored.mean()) / 2)
    rep.details.update({"c": c, "t": t, "x": x, "index": index})
    return rep
