"""Path skeletons of Levy processes and their passage functionals."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import _kernels as K
from .errors import BudgetExceeded, DomainError
from .levy_model import LevyModel
from .seeding import block_rng


class Outcome(str, Enum):
    NOT_SETTLED = "NotSettled"
    NO_ENTRANCE = "NoEntrance"


NOT_SETTLED = Outcome.NOT_SETTLED
NO_ENTRANCE = Outcome.NO_ENTRANCE


@dataclass(frozen=True)
class PathSkeleton:
    """Discretized cadlag path with an exact jump ledger.

    Grid times are ``t0 + k*dt`` for ``k = 0..len(grid_values)-1``. Jump times
    are exact and carry their left limit; between knots (grid and jump times)
    the path is the linear interpolation of the continuous part.

    Attributes
    ----------
    start_value : float
    dt : float
    grid_values : ndarray
    jump_times, jump_left, jump_sizes : ndarray
    horizon : float
        Length of the time window.
    sigma : float
        Gaussian coefficient of the continuous part (used for bridge corrections).
    t0 : float
        Time of the first grid point (nonzero after a shift).
    """

    start_value: float
    dt: float
    grid_values: np.ndarray
    jump_times: np.ndarray
    jump_left: np.ndarray
    jump_sizes: np.ndarray
    horizon: float
    sigma: float = 0.0
    t0: float = 0.0
    _knots: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def jump_ledger(self):
        return list(zip(self.jump_times.tolist(), self.jump_left.tolist(), self.jump_sizes.tolist()))

    @property
    def grid_times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(len(self.grid_values))

    @property
    def end_time(self) -> float:
        return self.t0 + self.horizon

    def knots(self):
        """Merged knot arrays ``(times, left_values, right_values)`` in time order."""
        if "k" not in self._knots:
            gt = self.grid_times
            gt = gt[gt <= self.end_time + 1e-12 * max(1.0, abs(self.end_time))]
            gv = self.grid_values[: len(gt)]
            t = np.concatenate([gt, self.jump_times])
            left = np.concatenate([gv, self.jump_left])
            right = np.concatenate([gv, self.jump_left + self.jump_sizes])
            order = np.argsort(t, kind="stable")
            t, left, right = t[order], left[order], right[order]
            if t[-1] < self.end_time - 1e-12:
                t = np.append(t, self.end_time)
                left = np.append(left, right[-1])
                right = np.append(right, right[-1])
            self._knots["k"] = (t, left, right)
        return self._knots["k"]

    def value_at(self, t):
        """Right-continuous value at time(s) ``t``."""
        kt, kl, kr = self.knots()
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(kt, t, side="right") - 1, 0, len(kt) - 1)
        j = np.minimum(i + 1, len(kt) - 1)
        h = kt[j] - kt[i]
        frac = np.where(h > 0, (t - kt[i]) / np.where(h > 0, h, 1.0), 0.0)
        out = kr[i] + (kl[j] - kr[i]) * np.clip(frac, 0.0, 1.0)
        return out if out.ndim else float(out)

    def left_limit_at(self, t):
        """Left limit ``xi_{t-}``."""
        kt, kl, kr = self.knots()
        t = np.asarray(t, dtype=float)
        i = np.clip(np.searchsorted(kt, t, side="left") - 1, 0, len(kt) - 1)
        j = np.minimum(i + 1, len(kt) - 1)
        h = kt[j] - kt[i]
        frac = np.where(h > 0, (t - kt[i]) / np.where(h > 0, h, 1.0), 0.0)
        out = kr[i] + (kl[j] - kr[i]) * np.clip(frac, 0.0, 1.0)
        out = np.where(t <= kt[0], kr[0], out)
        return out if out.ndim else float(out)

    def to_csv(self, path) -> None:
        """Write ``time,value,is_jump,jump_size`` rows (grid points and jump instants)."""
        kt, kl, kr = self.knots()
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "value", "is_jump", "jump_size"])
            for t, l, r in zip(kt, kl, kr):
                jump = not math.isclose(l, r, rel_tol=0.0, abs_tol=0.0)
                w.writerow([repr(float(t)), repr(float(r)), int(jump), repr(float(r - l))])


@dataclass(frozen=True)
class PassageRecord:
    """Outcome of a first-passage search.

    ``undershoot``/``overshoot`` are zero for continuous crossings and NaN when
    nothing was detected before the horizon.
    """

    time: float
    undershoot: float
    overshoot: float
    crossed_by_jump: bool
    detected: bool


_UNDETECTED = PassageRecord(math.nan, math.nan, math.nan, False, False)


def simulate(model: LevyModel, x0: float, horizon: float, dt: float, seed: int,
             max_jumps: int = 10_000_000) -> PathSkeleton:
    """Simulate one path on ``[0, horizon]``.

    Jump times and sizes are exact; the Gaussian part is sampled exactly at
    grid times and jump times.

    Raises
    ------
    BudgetExceeded
        If more than ``max_jumps`` jumps occur.
    """
    if not (dt > 0 and horizon > 0 and dt <= horizon * (1 + 1e-12)):
        raise DomainError("need 0 < dt <= horizon")
    n_steps = int(math.floor(horizon / dt + 1e-9))
    rng = block_rng(seed, 0, 0)
    args = model.kernel_args()
    grid, jt, jl, js, nj = K.simulate_skeleton(*args, rng, float(x0), n_steps, float(dt), int(max_jumps))
    if nj < 0:
        raise BudgetExceeded(f"more than {max_jumps} jumps on [0, {horizon}]")
    return PathSkeleton(float(x0), float(dt), grid, jt.copy(), jl.copy(), js.copy(),
                        float(n_steps * dt), float(model.sigma))


def first_passage_above(path: PathSkeleton, z: float, bridge_correction: bool = True, seed: int = 0) -> PassageRecord:
    """First time the path exceeds ``z``; overshoot ``xi_tau - z`` and undershoot ``z - xi_{tau-}``."""
    if path.start_value > z:
        raise DomainError("path already starts above the level")
    kt, kl, kr = path.knots()
    rng = block_rng(seed, 1, 0)
    t, u, o, byj, det = K.passage_up_on_knots(rng, kt, kl, kr, path.sigma**2, float(z), bool(bridge_correction))
    if not det:
        return _UNDETECTED
    return PassageRecord(float(t), float(u), float(o), bool(byj), True)


def first_exit_nonpositive(path: PathSkeleton, bridge_correction: bool = True, seed: int = 0) -> PassageRecord:
    """First time the path is ``<= 0``; undershoot ``xi_{T-}`` and overshoot ``-xi_T``."""
    if path.start_value <= 0:
        raise DomainError("first exit below 0 needs a positive start")
    kt, kl, kr = path.knots()
    rng = block_rng(seed, 2, 0)
    t, u, o, byj, det = K.passage_up_on_knots(rng, kt, -kl, -kr, path.sigma**2, 0.0, bool(bridge_correction))
    if not det:
        return _UNDETECTED
    if byj:
        return PassageRecord(float(t), float(u), float(o), True, True)
    return PassageRecord(float(t), 0.0, 0.0, False, True)


def last_exit_below(path: PathSkeleton, z: float, window_frac: float = 0.2, margin: float = 0.0):
    """Last time the path is below ``z``, or ``NOT_SETTLED``.

    The path must stay at or above ``z + margin`` on the trailing window of
    length ``window_frac * horizon``; otherwise the finite horizon cannot
    certify the last exit.
    """
    kt, kl, kr = path.knots()
    w0 = path.end_time - window_frac * path.horizon
    tail = kt >= w0
    if np.any(kl[tail] < z + margin) or np.any(kr[tail] < z + margin) or path.value_at(w0) < z + margin:
        return NOT_SETTLED
    below = (kl < z) | (kr < z)
    if not np.any(below):
        return float(kt[0])
    i = int(np.nonzero(below)[0][-1])
    if kr[i] < z:
        a, b = kr[i], kl[i + 1]
        h = kt[i + 1] - kt[i]
        if b == a:
            return float(kt[i + 1])
        return float(kt[i] + (z - a) / (b - a) * h)
    return float(kt[i])


def reverse_at(path: PathSkeleton, t: float) -> PathSkeleton:
    """Time reversal ``s -> xi_{(t-s)-}`` on ``[0, t - t0]``; jumps keep their size with flipped sign."""
    if not (path.t0 < t <= path.end_time + 1e-12):
        raise DomainError("reversal time outside the path window")
    length = t - path.t0
    n = int(math.floor(length / path.dt + 1e-9))
    s = path.dt * np.arange(n + 1)
    vals = path.left_limit_at(t - s)
    mask = path.jump_times < t
    jt = (t - path.jump_times[mask])[::-1]
    right = (path.jump_left + path.jump_sizes)[mask][::-1]
    sizes = (-path.jump_sizes[mask])[::-1]
    keep = jt <= n * path.dt + 1e-12
    start = float(path.left_limit_at(t))
    return PathSkeleton(start, path.dt, vals, jt[keep], right[keep], sizes[keep], float(length), path.sigma)


def shift_at_entrance(path: PathSkeleton, bridge_correction: bool = False, seed: int = 0):
    """Relocate the time origin to the first entrance into ``(0, inf)``.

    Returns the shifted skeleton on ``[-T, horizon - T]`` or ``NO_ENTRANCE``.
    """
    if path.start_value > 0:
        raise DomainError("entrance shift needs a nonpositive start")
    rec = first_passage_above(path, 0.0, bridge_correction, seed)
    if not rec.detected:
        return NO_ENTRANCE
    T = rec.time
    return PathSkeleton(path.start_value, path.dt, path.grid_values, path.jump_times - T, path.jump_left,
                        path.jump_sizes, path.horizon, path.sigma, path.t0 - T)
