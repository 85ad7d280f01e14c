"""The two-sided spatially stationary process and its verification routines.

A realization is a pair (undershoot, overshoot) ``(x, y)`` drawn from the
stationary law ``rho``, a forward path of the process started at ``y`` and a
negative-time part ``t -> -B_{-t}`` where ``B`` is the process conditioned to
stay positive started at ``x``. Checks operate on passage ensembles: for a
level ``z`` each replica reports the passage time, the pair at the passage and
path values at times around it.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _mc, _passage
from .errors import DomainError, InsufficientBin, RefusesInfiniteMean, Unsupported
from .fluctuation import RhoLaw, conditioned_method, harmonic_params, jump_arrays
from .ladder import LadderData
from .levy_model import LadderClass, LevyModel, classify_ladder_mean, is_centered
from .paths import PathSkeleton, simulate
from .report import CheckReport
from .seeding import block_rng, run_blocks_with_starts
from .stats import dcor_permutation_test, ks_distance, log_survival_fit

SCHEMA_VERSION = 1
_EMPTY = np.zeros(0)


# ---------------------------------------------------------------------------
# single realizations

@dataclass(frozen=True)
class TwoSidedPath:
    """One realization on a finite window.

    ``backward`` holds ``t -> -xi_{(-t)-}`` for ``t >= 0`` (a path of the
    conditioned process started at ``crossing_pair[0]``); ``forward`` holds the
    path on ``[0, horizon]`` started at ``crossing_pair[1]``.
    """

    backward: PathSkeleton
    forward: PathSkeleton
    crossing_pair: tuple
    weight: float = 1.0

    def value_at(self, t):
        """Value at real time(s) ``t`` (negative times read the backward part)."""
        t = np.asarray(t, float)
        neg = -self.backward.value_at(np.abs(np.minimum(t, 0.0)))
        pos = self.forward.value_at(np.maximum(t, 0.0))
        out = np.where(t < 0, neg, pos)
        return out if out.ndim else float(out)

    def check_invariants(self) -> bool:
        """Backward part strictly positive after time 0; start values match the pair."""
        kt, kl, kr = self.backward.knots()
        ok = bool(np.all(kl[1:] > 0) and np.all(kr[1:] > 0))
        ok &= math.isclose(self.backward.start_value, self.crossing_pair[0], abs_tol=1e-12)
        ok &= math.isclose(self.forward.start_value, self.crossing_pair[1], abs_tol=1e-12)
        return ok


def sample_stationary(model: LevyModel, ladder: LadderData, rho: RhoLaw, horizon_back: float, horizon_fwd: float,
                      dt: float, seed: int) -> TwoSidedPath:
    """Draw one two-sided realization.

    The backward part uses the exact or transform conditioned sampler when
    available, otherwise the killed process with its weight
    ``U_minus(B_T)/U_minus(x)`` carried on the result.
    """
    if classify_ladder_mean(model) != LadderClass.FINITE:
        raise RefusesInfiniteMean("stationary process needs a finite-mean ladder height")
    rng = block_rng(seed, 71, 0)
    xs, ys = rho.sample(1, rng)
    x, y = float(xs[0]), float(ys[0])
    method = conditioned_method(model, ladder)
    n = int(math.floor(horizon_back / dt + 1e-9))
    weight = 1.0
    if method in ("bessel", "transform"):
        up_m, up_a, dn_m, dn_a = jump_arrays(model)
        grid = _mc.cond_grid_path(rng, x, n, float(dt), float(model.sigma), float(model.drift),
                                  up_m, up_a, dn_m, dn_a, *harmonic_params(ladder.U_minus))
        back = PathSkeleton(x, float(dt), grid, _EMPTY, _EMPTY, _EMPTY, n * dt, float(model.sigma))
    else:
        if x <= 0:
            raise DomainError("weighted backward sampler cannot start at 0")
        back = simulate(model, x, horizon_back, dt, seed * 7919 + 1)
        _, kl, kr = back.knots()
        alive = bool(np.all(kl > 0) and np.all(kr > 0))
        weight = float(ladder.U_minus(back.knots()[2][-1]) / ladder.U_minus(x)) if alive else 0.0
    fwd = simulate(model, y, horizon_fwd, dt, seed * 7919 + 2)
    return TwoSidedPath(back, fwd, (x, y), weight)


# ---------------------------------------------------------------------------
# passage ensembles

@dataclass
class PassageEnsemble:
    """Per-replica passage data at one level.

    ``kind``: 0 undetected, 1 continuous, 2 by a jump, 3 already above the level
    at time 0. ``probes[:, j]`` is the value at ``tau + probe_times[j]``.
    """

    level: float
    kind: np.ndarray
    tau: np.ndarray
    under: np.ndarray
    over: np.ndarray
    probe_times: np.ndarray
    probes: np.ndarray
    seed: int
    flags: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return int(self.kind.size)

    @property
    def detected(self) -> np.ndarray:
        return self.kind > 0

    @property
    def undetected_fraction(self) -> float:
        return float(np.mean(self.kind == 0))

    def probe(self, t: float) -> np.ndarray:
        j = int(np.argmin(np.abs(self.probe_times - t)))
        if not math.isclose(self.probe_times[j], t, abs_tol=1e-12):
            raise KeyError(t)
        return self.probes[:, j]

    def to_jsonl(self, path) -> None:
        """One JSON line per replica, preceded by a header line."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps({"schema": SCHEMA_VERSION, "level": self.level, "seed": self.seed,
                                 "probe_times": self.probe_times.tolist(), "flags": self.flags}) + "\n")
            for i in range(self.n):
                rec = {"kind": int(self.kind[i]), "tau": _f(self.tau[i]), "under": _f(self.under[i]),
                       "over": _f(self.over[i]), "probes": [_f(v) for v in self.probes[i]]}
                fh.write(json.dumps(rec) + "\n")


def _f(v):
    v = float(v)
    return v if math.isfinite(v) else None


def _cond_args(model: LevyModel, ladder: LadderData | None):
    if ladder is None or conditioned_method(model, ladder) == "weighted":
        return None
    up_m, up_a, dn_m, dn_a = jump_arrays(model)
    return (up_m, up_a, dn_m, dn_a, *harmonic_params(ladder.U_minus))


def _run_passage(model, starts_fwd, starts_back, level, probe_times, seed, stream, *, cond=None,
                 cond_dt=1e-3, h_min=1e-3, h_max=1.0, t_cap=1e6):
    probe_times = np.asarray(probe_times, float)
    neg = np.sort(-probe_times[probe_times < 0])
    pos = np.sort(probe_times[probe_times >= 0])
    w_max = float(neg.max()) if neg.size else 0.0
    buf = int(w_max / h_min * 1.05) + int(10 * model.jump_rate * w_max) + 64
    if cond is None:
        cond = (_EMPTY, _EMPTY, _EMPTY, _EMPTY, 0.0, _EMPTY, _EMPTY)
        starts_back = np.full_like(starts_fwd, np.nan)
    starts = np.stack([starts_fwd, starts_back], axis=1)

    def kernel(rng, count, st, *args):
        return _passage.passage_history(rng, count, st[:, 0].copy(), st[:, 1].copy(), *args)

    kinds, tau, under, over, pr = _run_rows(kernel, starts, seed, stream, float(level), neg, pos, float(h_min),
                                            float(h_max), float(t_cap), buf, *_passage.macro_params(model),
                                            *model.kernel_args(), float(cond_dt),
                                            *cond)
    # reorder probe columns to match the sorted requested times
    times = np.concatenate([-neg, pos])
    order = np.argsort(times)
    return kinds, tau, under, over, times[order], pr[:, order]


def _run_rows(kernel, rows, seed, stream, *args):
    from .seeding import blocks
    parts = []
    for k, start, count in blocks(rows.shape[0]):
        parts.append(kernel(block_rng(seed, stream, k), count, rows[start:start + count], *args))
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(len(parts[0])))


def stationary_ensemble(model: LevyModel, ladder: LadderData, rho: RhoLaw, level: float, probe_times=(),
                        n_paths: int = 100_000, seed: int = 0, *, cond_dt: float = 1e-3, t_cap: float = 1e6,
                        stream: int = 0) -> PassageEnsemble:
    """Passage data at ``level`` for ``n_paths`` independent two-sided realizations.

    ``level = -inf`` gives the realizations themselves (passage at time 0).
    """
    if classify_ladder_mean(model) != LadderClass.FINITE:
        raise RefusesInfiniteMean("stationary process needs a finite-mean ladder height")
    rng = block_rng(seed, 81 + stream, 0)
    xs, ys = rho.sample(n_paths, rng)
    cond = _cond_args(model, ladder)
    flags = {}
    if cond is None and np.any(np.asarray(probe_times) < 0):
        flags["no_backward_part"] = "no transform sampler; negative-time probes unavailable"
    elif conditioned_method(model, ladder) == "transform":
        flags["approximate"] = f"backward part from the transform sampler, dt={cond_dt}"
    lev = -1e300 if level == -np.inf else float(level)
    kinds, tau, under, over, times, pr = _run_passage(model, ys, xs, lev, probe_times, seed, 91 + stream,
                                                      cond=cond, cond_dt=cond_dt, t_cap=t_cap)
    if level == -np.inf:
        under = xs.copy()
        over = ys.copy()
    return PassageEnsemble(float(level), kinds, tau, under, over, times, pr, seed, flags)


def entrance_ensemble(model: LevyModel, x: float, probe_times=(), n_paths: int = 100_000, seed: int = 0, *,
                      t_cap: float = 1e6, stream: int = 0) -> PassageEnsemble:
    """Passage above 0 of the plain process started at ``x <= 0``, with values around the entrance."""
    if x > 0:
        raise DomainError("entrance needs a nonpositive start")
    starts = np.full(n_paths, float(x))
    kinds, tau, under, over, times, pr = _run_passage(model, starts, None, 0.0, probe_times, seed, 101 + stream,
                                                      t_cap=t_cap)
    return PassageEnsemble(0.0, kinds, tau, under, over, times, pr, seed, {})


# ---------------------------------------------------------------------------
# checks

def _finite(a):
    a = np.asarray(a, float)
    return a[np.isfinite(a)]


def crossing_stationarity_check(ens: PassageEnsemble, rho: RhoLaw, tol: float = 0.02) -> CheckReport:
    """Law of (undershoot, overshoot) at the passage above ``ens.level`` against ``rho``."""
    rep = CheckReport("crossing_stationarity", n=ens.n, seed=ens.seed, flags=dict(ens.flags))
    det = ens.detected
    u, o = ens.under[det], ens.over[det]
    r1 = ks_distance(u, cdf=rho.rho1_cdf, cdf_left=RhoLaw.left_limit(rho.rho1_cdf))
    r2 = ks_distance(o, cdf=rho.rho2_cdf, cdf_left=RhoLaw.left_limit(rho.rho2_cdf))
    rep.add("ks_undershoot", r1.statistic, tol, pvalue=r1.pvalue)
    rep.add("ks_overshoot", r2.statistic, tol, pvalue=r2.pvalue)
    from .fluctuation import quadrant_ks
    rep.info("ks_joint", quadrant_ks(u, o, rho.joint_cdf, seed=ens.seed))
    rep.info("undetected_fraction", ens.undetected_fraction)
    rep.info("continuous_fraction", float(np.mean(ens.kind[det] == 1)))
    if rho.atom_mass >= 1.0 - 1e-12:
        rep.flags["degenerate"] = "rho is the point mass at (0, 0)"
    return rep


def level_stationarity_check(ens_a: PassageEnsemble, ens_b: PassageEnsemble, alpha: float = 0.01) -> CheckReport:
    """Two-sample comparison of the passage pairs at two levels."""
    rep = CheckReport("level_stationarity", n=ens_a.n + ens_b.n, seed=ens_a.seed)
    for name, a, b in (("under", ens_a.under, ens_b.under), ("over", ens_a.over, ens_b.over)):
        r = ks_distance(_finite(a), _finite(b))
        rep.add(f"pvalue_{name}", r.pvalue, alpha, ">=")
    return rep


def conditional_independence_check(ens: PassageEnsemble, probe_time: float = -0.5, n_bins: int = 5,
                                   min_per_bin: int = 50, max_per_bin: int = 1000, n_perm: int = 199,
                                   up_rate: float | None = None) -> CheckReport:
    """Independence of a pre-passage value and the overshoot given the undershoot.

    Replicas crossing by a jump are split into quantile bins of the
    undershoot; inside each bin the value at ``tau + probe_time`` and the
    overshoot are tested with a distance-correlation permutation test.

    Raises
    ------
    InsufficientBin
        If a bin holds fewer than ``min_per_bin`` replicas.
    """
    rep = CheckReport("conditional_independence", n=ens.n, seed=ens.seed, flags=dict(ens.flags))
    jump = (ens.kind == 2) & np.isfinite(ens.probe(probe_time))
    if not np.any(jump):
        rep.flags["degenerate"] = "no crossings by a jump"
        return rep
    u, o, pre = ens.under[jump], ens.over[jump], ens.probe(probe_time)[jump]
    edges = np.quantile(u, np.linspace(0, 1, n_bins + 1))
    idx = np.clip(np.searchsorted(edges, u, side="right") - 1, 0, n_bins - 1)
    rng = np.random.default_rng([ens.seed, 111])
    pvals, ks_mem = [], []
    for b in range(n_bins):
        sel = np.nonzero(idx == b)[0]
        if sel.size < min_per_bin:
            raise InsufficientBin(f"bin {b} has {sel.size} replicas (< {min_per_bin})")
        if sel.size > max_per_bin:
            sel = rng.choice(sel, max_per_bin, replace=False)
        dc, pv = dcor_permutation_test(pre[sel], o[sel], n_perm=n_perm, seed=ens.seed + b)
        pvals.append(pv)
        rep.info(f"dcor_bin{b}", dc)
        rep.info(f"pvalue_bin{b}", pv)
        if up_rate is not None:
            ob = o[idx == b]
            ks_mem.append(ks_distance(ob, cdf=lambda v: -np.expm1(-up_rate * np.maximum(v, 0.0))).pvalue)
    rep.add("min_pvalue", float(min(pvals)), 0.01 / n_bins, ">=")
    rep.info("fraction_below_0.05", float(np.mean(np.array(pvals) < 0.05)))
    if ks_mem:
        rep.add("min_memoryless_pvalue", float(min(ks_mem)), 0.01 / n_bins, ">=")
    rep.details["undershoot_edges"] = edges.tolist()
    return rep


def _sentinel(values, alive):
    return np.where(alive & np.isfinite(values), values, np.inf)


def reversal_check(ens: PassageEnsemble, model: LevyModel, ladder: LadderData, t_probes=(0.1, 0.3),
                   n_bins: int = 5, seed: int = 0, *, dt: float = 1e-3, horizon: float = 200.0,
                   tol: float = 0.03) -> CheckReport:
    """Reversed pre-passage path against the conditioned process killed at its last exit below the level.

    The reversed path at time ``t`` is ``z - xi_{tau - t}`` on ``{t < tau}``;
    the oracle is the conditioned process from the same undershoot at time
    ``t`` on ``{t < last exit below z}``. Sub-distributions are compared with a
    sentinel value for killed replicas. Requires negative probe times
    ``-t_probes`` in the ensemble.
    """
    z = ens.level
    rep = CheckReport("reversal", n=ens.n, seed=seed, flags=dict(ens.flags))
    det = ens.detected & (ens.kind != 3)
    u = ens.under[det]
    rev = {t: z - ens.probe(-t)[det] for t in t_probes}
    alive = {t: ens.tau[det] > t for t in t_probes}
    method = conditioned_method(model, ladder)
    if np.all(u == 0.0):
        groups = [np.arange(u.size)]
    else:
        edges = np.quantile(u, np.linspace(0, 1, n_bins + 1))
        idx = np.clip(np.searchsorted(edges, u, side="right") - 1, 0, n_bins - 1)
        groups = [np.nonzero(idx == b)[0] for b in range(n_bins)]
    probes = np.asarray(sorted(t_probes), float)
    worst = 0.0
    for b, sel in enumerate(groups):
        starts = u[sel]
        if method == "bessel" and np.all(starts == 0.0):
            ell, vals = _run_bessel_last_exit(starts.size, 0.0, z, probes, dt, seed, 121 + b, model.sigma)
            unsettled = np.isinf(ell)
        else:
            if method == "weighted":
                raise Unsupported("reversal oracle needs the transform sampler")
            cond = _cond_args(model, ladder)
            ell, final, vals = run_blocks_with_starts(_passage.cond_last_exit, starts, seed, 121 + b, float(z),
                                                      probes, float(dt), float(horizon), float(model.sigma),
                                                      float(model.drift), *cond)
            unsettled = final < 10.0 * z
        rep.info(f"unsettled_bin{b}", float(np.mean(unsettled)))
        for j, t in enumerate(probes):
            a = _sentinel(rev[t][sel], alive[t][sel])
            o = _sentinel(vals[~unsettled, j], ell[~unsettled] > t)
            if a.size == 0 or o.size == 0:
                rep.flags[f"empty_bin{b}_t{t:g}"] = True
                continue
            r = ks_distance(a, o)
            rep.info(f"ks_bin{b}_t{t:g}", r.statistic)
            worst = max(worst, r.statistic)
    rep.add("max_ks", worst, tol)
    if method == "transform":
        rep.flags["approximate"] = "oracle from the transform sampler"
    return rep


def _run_bessel_last_exit(n, x0, level, probes, dt, seed, stream, sigma, horizon=1e4, r_stop=None):
    from .seeding import run_blocks
    r_stop = 1e4 * level if r_stop is None else r_stop
    return run_blocks(_passage.bessel3_last_exit, n, seed, stream, float(x0), float(level), probes, float(dt),
                      float(horizon), float(r_stop), float(sigma))


def williams_check(model: LevyModel, x: float = 1.0, n_paths: int = 100_000, seed: int = 0, *,
                   probes=(0.1, 0.3), dt: float = 1e-4, horizon: float = 1e4, tol: float = 0.02) -> CheckReport:
    """Reversed first-exit path of the dual process from ``x`` against Bessel-3 from 0 killed at its last exit.

    The dual process from ``x`` killed below 0 is the model started at ``-x``
    until its passage above 0; values at ``T - t`` are exact bridge draws. The
    Bessel-3 side uses exact transitions with steps ``dt`` near the level.
    Durations are compared after capping at ``horizon``; probe values use an
    infinite sentinel once the path is dead, among replicas with duration below
    the cap.
    """
    if model.jumps is not None or model.drift != 0.0 or model.sigma <= 0:
        raise Unsupported("Williams comparison implemented for driftless Brownian motion")
    probes = np.asarray(sorted(probes), float)
    kinds, tau, _, _, times, pr = _run_passage(model, np.full(n_paths, -float(x)), None, 0.0, -probes[::-1],
                                               seed, 131, h_min=dt, h_max=1e6, t_cap=horizon)
    T = np.where(kinds > 0, tau, np.inf)
    ell, vals = _run_bessel_last_exit(n_paths, 0.0, x, probes, dt, seed, 133, model.sigma, horizon=horizon)
    rep = CheckReport("williams", n=n_paths, seed=seed)
    r = ks_distance(np.minimum(T, horizon), np.minimum(ell, horizon))
    rep.add("ks_duration", r.statistic, tol, pvalue=r.pvalue)
    keep_a, keep_b = np.isfinite(T), np.isfinite(ell)
    for t in probes:
        # reversed dual path: -xi at T - t, i.e. the dual value
        a = _sentinel(-pr[:, list(times).index(-t)], T > t)[keep_a]
        b = _sentinel(vals[:, list(probes).index(t)], ell > t)[keep_b]
        rr = ks_distance(a, b)
        rep.add(f"ks_probe_t{t:g}", rr.statistic, tol + 0.01, pvalue=rr.pvalue)
    rep.info("censored_dual", float(np.mean(~keep_a)))
    rep.info("censored_bessel", float(np.mean(~keep_b)))
    rep.flags["conditioning_trivial"] = "no positive jumps: continuity events have probability one"
    return rep


def duquesne_check(model: LevyModel, ladder: LadderData, x: float = 1.0, n_paths: int = 100_000, seed: int = 0, *,
                   dt: float = 1e-4, horizon: float = 1e4, tol: float = 0.03) -> CheckReport:
    """Duration of the reversed-increment path under the conditioned law from 0 against the pre-maximum duration.

    Without positive jumps the last time the pre-passage maximum is attained is
    the passage time above ``x`` itself, so the comparison is between the last
    exit below ``x`` of the conditioned process from 0 and the first passage
    above ``x`` from 0.
    """
    if model.has_positive_jumps or model.sigma <= 0 or conditioned_method(model, ladder) != "bessel":
        raise Unsupported("implemented for Brownian motion (exact conditioned sampler, no positive jumps)")
    kinds, tau, _, _, _, _ = _run_passage(model, np.zeros(n_paths), None, float(x), (), seed, 141,
                                          h_min=dt, h_max=1e6, t_cap=horizon)
    T = np.where(kinds > 0, tau, np.inf)
    ell, _ = _run_bessel_last_exit(n_paths, 0.0, x, np.zeros(0), dt, seed, 143, model.sigma, horizon=horizon)
    rep = CheckReport("duquesne", n=n_paths, seed=seed)
    r = ks_distance(np.minimum(T, horizon), np.minimum(ell, horizon))
    rep.add("ks_duration", r.statistic, tol, pvalue=r.pvalue)
    rep.info("terminal_value", float(x))
    return rep


def spatial_stationarity_check(model: LevyModel, ladder: LadderData, rho: RhoLaw, x: float,
                               probe_times=(-0.5, 0.5), n_paths: int = 100_000, seed: int = 0, *,
                               tol: float = 0.03, cond_dt: float = 1e-3) -> CheckReport:
    """Marginals of the path shifted to its passage above ``x`` against ``x`` plus a fresh realization."""
    shifted = stationary_ensemble(model, ladder, rho, x, probe_times, n_paths, seed, cond_dt=cond_dt, stream=1)
    fresh = stationary_ensemble(model, ladder, rho, -np.inf, probe_times, n_paths, seed, cond_dt=cond_dt, stream=2)
    rep = CheckReport("spatial_stationarity", n=2 * n_paths, seed=seed, flags=dict(shifted.flags))
    for t in probe_times:
        a = _finite(shifted.probe(t))
        b = _finite(fresh.probe(t)) + x
        r = ks_distance(a, b)
        rep.add(f"ks_t{t:g}", r.statistic, tol, pvalue=r.pvalue)
    rep.info("coverage_shortfall", shifted.undetected_fraction)
    return rep


def convergence_from_minus_infinity(model: LevyModel, ladder: LadderData, rho: RhoLaw, x_list=(-2.0, -5.0, -10.0),
                                    b: float = -1.0, probe_times=(0.0, -0.5), n_paths: int = 100_000,
                                    seed: int = 0, *, terminal_tol: float = 0.02, negative_tol: float = 0.05,
                                    cond_dt: float = 1e-3) -> CheckReport:
    """Marginals after the entrance into ``(0, inf)`` from ``x`` against the stationary process.

    The probe at time 0 (the overshoot) is compared with the exact overshoot
    law; other probes with a fresh stationary ensemble. Monotonicity in ``|x|``
    is judged up to the KS noise level ``1.36/sqrt(n)``.
    """
    probe_times = [t for t in probe_times if t >= b]
    ref = stationary_ensemble(model, ladder, rho, -np.inf, probe_times, n_paths, seed, cond_dt=cond_dt, stream=3)
    rep = CheckReport("convergence_from_minus_infinity", n=n_paths * (len(x_list) + 1), seed=seed,
                      flags=dict(ref.flags))
    series = {t: [] for t in probe_times}
    for k, x in enumerate(sorted(x_list, reverse=True)):
        ens = entrance_ensemble(model, x, probe_times, n_paths, seed, stream=10 + k)
        rep.info(f"no_entrance_x{x:g}", ens.undetected_fraction)
        for t in probe_times:
            vals = _finite(ens.probe(t))
            if t == 0.0:
                r = ks_distance(vals, cdf=rho.rho2_cdf, cdf_left=RhoLaw.left_limit(rho.rho2_cdf))
            else:
                r = ks_distance(vals, _finite(ref.probe(t)))
                rep.info(f"excluded_x{x:g}_t{t:g}", float(1 - vals.size / n_paths))
            series[t].append(r.statistic)
            rep.info(f"ks_x{x:g}_t{t:g}", r.statistic)
    noise = 1.36 / math.sqrt(n_paths)
    if 0.0 in series:
        rep.add("ks_t0_nonincreasing", bool(np.all(np.diff(series[0.0]) <= noise)), True, "==")
        rep.add("ks_t0_terminal", series[0.0][-1], terminal_tol)
    for t in probe_times:
        if t < 0:
            rep.add(f"ks_t{t:g}_terminal", series[t][-1], negative_tol)
    rep.details["series"] = {str(t): v for t, v in series.items()}
    rep.details["noise_level"] = noise
    return rep


def coupling_epsilon(model: LevyModel, rho: RhoLaw, epsilon: float = 0.1, n_runs: int = 20_000, seed: int = 0, *,
                     horizon: float = 1e3, success_min: float = 0.99, ks_tol: float = 0.02) -> CheckReport:
    """Entrance of the gap between two independent copies into ``[0, epsilon]``.

    One copy starts at 0, the other from the overshoot marginal of ``rho``.
    Reports the success fraction before ``horizon``, the range of the gap at
    entrance and a KS comparison of post-entrance increments with fresh ones.
    """
    if not is_centered(model):
        raise DomainError("coupling by recurrence needs a centered model")
    rng = block_rng(seed, 151, 0)
    _, ys = rho.sample(n_runs, rng)
    ok, tau, gam, inc = run_blocks_with_starts(_passage.coupling_gap, ys, seed, 153, float(epsilon),
                                               float(horizon), 10.0, *model.kernel_args())
    fresh = run_blocks_with_starts(_fresh_increment, np.zeros(n_runs), seed, 155, *model.kernel_args())
    rep = CheckReport("coupling_epsilon", n=n_runs, seed=seed)
    rep.add("success_fraction", float(ok.mean()), success_min, ">")
    g = gam[ok]
    rep.add("gap_in_range", bool(np.all((g >= 0) & (g <= epsilon))), True, "==")
    r = ks_distance(inc[ok], fresh)
    rep.add("ks_post_increments", r.statistic, ks_tol, pvalue=r.pvalue)
    rep.info("median_tau", float(np.median(tau[ok])))
    rep.details["gamma_quantiles"] = np.quantile(g, [0, 0.25, 0.5, 0.75, 1]).tolist() if g.size else []
    return rep


def _fresh_increment(rng, count, starts, *model_args):
    out = np.empty(count)
    for i in range(count):
        out[i] = _passage.levy_advance(rng, starts[i], 1.0, *model_args)
    return out


def coupling_exact(model: LevyModel, rho: RhoLaw, n_runs: int = 300_000, seed: int = 0, *, round_cap: int = 1000,
                   t_cap: float = 1e6, r2_min: float = 0.95) -> CheckReport:
    """Alternating-passage coupling; the round count should have a geometric tail."""
    rng = block_rng(seed, 161, 0)
    _, ys = rho.sample(n_runs, rng)
    rounds, t1, t2 = run_blocks_with_starts(_passage.ping_pong, ys, seed, 163, int(round_cap), float(t_cap), 1e-3,
                                            1.0, *_passage.macro_params(model), *model.kernel_args())
    ok = rounds > 0
    rep = CheckReport("coupling_exact", n=n_runs, seed=seed)
    rep.add("failure_fraction", float(np.mean(~ok)), 0.01)
    slope, r2, fit_levels = log_survival_fit(rounds[ok])
    if np.isnan(r2):
        # fewer than three levels with enough survivors: degenerate geometric tail
        rep.flags["degenerate"] = "round counts concentrate on too few values for a fit"
        rep.info("max_rounds", float(rounds[ok].max()))
        if model.has_positive_jumps:
            # a geometric tail needs at least three populated levels; more runs are required
            rep.add("fit_levels", float(fit_levels.size), 3, ">=")
        else:
            rep.add("rounds_all_one", bool(np.all(rounds[ok] == 1)), True, "==")
    else:
        rep.add("log_survival_r2", r2, r2_min, ">")
        rep.info("log_survival_slope", slope)
        rep.info("per_round_success", float(1 - math.exp(slope)))
    rep.info("mean_rounds", float(rounds[ok].mean()))
    rep.details["round_counts"] = np.bincount(rounds[ok]).tolist()
    return rep
