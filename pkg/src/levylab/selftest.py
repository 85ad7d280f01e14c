"""Fast exact checks on constructions whose answers are known without simulation noise."""

from __future__ import annotations

import math

import numpy as np

from .errors import RejectCompoundPoisson
from .lamperti import DEFAULT_CLOCK, exp_functional, pssmp_from_positive, time_change
from .levy_model import (LadderClass, classify_ladder_mean, closed_form_ladder, levy_tail, make_model,
                         mean_increment, negate)
from .paths import PathSkeleton, first_exit_nonpositive, first_passage_above, reverse_at, simulate
from .report import CheckReport
from .stationary import TwoSidedPath
from .stats import ks_distance, w1_distance

EMPTY = np.empty(0)


def line(start: float, slope: float, horizon: float, dt: float = 1e-3) -> PathSkeleton:
    n = int(round(horizon / dt))
    return PathSkeleton(start, dt, start + slope * dt * np.arange(n + 1), EMPTY, EMPTY, EMPTY, n * dt)


def _rejects_compound_poisson() -> bool:
    try:
        make_model({"family": "Custom", "sigma": 0.0, "drift": 0.0,
                    "jumps": {"rate": 1.0, "components": [{"weight": 1.0, "rate": 1.0, "sign": 1}]}})
    except RejectCompoundPoisson:
        return True
    return False


def _deterministic_two_sided(forward_slope: float = 0.0) -> TwoSidedPath:
    # backward part B_u = u, so the two-sided path is xi_s = s for s < 0
    return TwoSidedPath(line(0.0, 1.0, 40.0), line(0.0, forward_slope, 5.0), (0.0, 0.0))


def run_selftest() -> CheckReport:
    """Every statistic is an absolute error (threshold 1e-9 unless noted) or a boolean."""
    rep = CheckReport("selftest")
    bm = make_model("BrownianStandard")
    kou = make_model({"family": "KouTwoSidedExp", "sigma": 1.0, "drift": 0.0, "rate": 1.0, "p": 0.5,
                      "alpha_plus": 2.0, "alpha_minus": 2.0})
    rep.add("bm_triplet", bm.sigma == 1.0 and bm.drift == 0.0 and bm.jumps is None, True, "==")
    rep.add("compound_poisson_rejected", _rejects_compound_poisson(), True, "==")
    rep.add("kou_zero_mean", abs(mean_increment(kou)), 1e-12)
    rep.add("negate_bm_fixed", negate(bm) == bm, True, "==")
    rep.add("negate_kou_fixed", negate(kou).to_dict() == kou.to_dict(), True, "==")
    rep.add("bm_levy_tail", float(levy_tail(bm, 1.0)), 1e-15)
    rep.add("kou_levy_tail", abs(float(levy_tail(kou, 1.0)) - 0.5 * math.exp(-2.0)), 1e-12)
    rep.add("drift_mean", abs(mean_increment(make_model("BrownianDrift", drift=1.0)) - 1.0), 1e-15)
    rep.add("drift_up_finite",
            classify_ladder_mean(make_model("BrownianDrift", drift=1.0)) == LadderClass.FINITE, True, "==")
    rep.add("drift_down_infinite",
            classify_ladder_mean(make_model("BrownianDrift", drift=-1.0)) == LadderClass.INFINITE, True, "==")
    lad = closed_form_ladder(bm)
    rep.add("bm_EH", abs(lad.EH - 1 / math.sqrt(2)), 1e-12)
    x = np.linspace(0.1, 3.0, 30)
    rep.add("bm_U_plus_linear", float(np.max(np.abs(lad.U_plus(x) - math.sqrt(2) * x))), 1e-9)

    down = make_model({"family": "Custom", "sigma": 0.0, "drift": -1.0})
    path = simulate(down, 1.0, 2.0, 1e-3, seed=0)
    t = np.linspace(0, 2, 21)
    rep.add("line_simulation", float(np.max(np.abs(path.value_at(t) - (1 - t)))), 1e-9)
    rec = first_exit_nonpositive(path)
    rep.add("line_exit_time", abs(rec.time - 1.0), 1e-9)
    rep.add("line_exit_continuous", not rec.crossed_by_jump, True, "==")
    up = line(0.0, 1.0, 1.0)
    rep.add("line_passage_time", abs(first_passage_above(up, 0.5).time - 0.5), 1e-9)
    rev = reverse_at(up, 1.0)
    rep.add("line_reversal", float(np.max(np.abs(rev.value_at(t / 2) - (1 - t / 2)))), 1e-9)

    a = np.arange(10.0)
    rep.add("ks_identical", ks_distance(a, a).statistic, 0.0, "==")
    rep.add("ks_disjoint", ks_distance(a, a + 100).statistic, 1.0, "==")
    rep.add("w1_identical", w1_distance(a, a), 0.0, "==")
    rep.add("w1_point_masses", abs(w1_distance(np.zeros(5), np.full(5, 2.5)) - 2.5), 1e-12)

    tsp = _deterministic_two_sided()
    # trapezoid error of the clock on a 1e-3 grid is about 1e-7
    rep.add("clock_at_zero", abs(exp_functional(tsp, 0.0, DEFAULT_CLOCK).value - 1.0), 1e-6)
    tc = time_change(tsp, DEFAULT_CLOCK, [1.5, 2.0, 4.0])
    rep.add("constant_path_is_one", float(np.max(np.abs(tc.values - 1.0))), 1e-9)
    drift = make_model({"family": "Custom", "sigma": 0.0, "drift": 1.0})
    grid = np.array([0.25, 0.5, 1.0, 2.0])
    s = pssmp_from_positive(drift, 1.0, grid, dt=1e-4, seed=0)
    rep.add("drift_pssmp_linear", float(np.max(np.abs(s.values[0] - (1.0 + grid)))), 1e-6)
    return rep
