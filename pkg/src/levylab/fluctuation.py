"""Ladder data, the stationary overshoot law and the conditioned process.

Estimation and verification routines for the killed potential factorization,
the duality of the conditioned semigroup, the potential of the conditioned
process, continuous exit probabilities and the limit law of the pair
(undershoot, overshoot).
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from . import _mc, _passage
from .curves import ExpLinear, TabulatedFunction, curve_from_dict
from .errors import (CalibrationFailure, DomainError, RefusesInfiniteMean, Unsupported,
                     WeightDegeneracyWarning)
from .ladder import LadderData, LadderSource
from .levy_model import (LadderClass, LevyModel, classify_ladder_mean, levy_tail, mean_increment, negate)
from .report import CheckReport
from .seeding import run_blocks, run_blocks_with_starts, sum_blocks
from .stats import effective_sample_size, ks_distance

_GL8 = np.polynomial.legendre.leggauss(8)
_GL32 = np.polynomial.legendre.leggauss(32)


# ---------------------------------------------------------------------------
# small helpers

def jump_arrays(model: LevyModel):
    """``(up_m, up_a, dn_m, dn_a)``: masses and rates of the exponential jump components."""
    if not model.is_hyperexponential:
        raise Unsupported("needs exponential-mixture jumps")
    up = model.up_masses()
    dn = model.down_masses()
    return (np.array([m for m, _ in up], float), np.array([a for _, a in up], float),
            np.array([m for m, _ in dn], float), np.array([a for _, a in dn], float))


def gl_nodes(a: float, b: float, rule=_GL8):
    x, w = rule
    return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w


def _ladder_curves_at(curve, x):
    return np.asarray(curve(x), float)


def laplace_stieltjes(curve, a: float) -> float:
    """``int_[0,inf) exp(-a z) U(dz)``, counting ``U(0)`` as an atom at 0."""
    if isinstance(curve, ExpLinear):
        dens = curve.derivative()
        out = curve.value_at_zero + dens.c0 / a
        out += sum(d / (g + a) for d, g in zip(dens.coefs, dens.rates))
        return float(out)
    # integration by parts: a * int U(z) exp(-a z) dz
    hi = curve.grid[-1]
    z = np.union1d(curve.grid, np.linspace(0.0, hi, 20_001))
    val = float(integrate.trapezoid(curve(z) * np.exp(-a * z), z))
    tail = 0.0
    if curve.tail_model is not None and curve.tail_model[0] == "linear":
        u, s = float(curve.values[-1]), curve.tail_model[1]
        tail = math.exp(-a * hi) * (u / a + s / a**2)
    else:
        tail = float(curve.values[-1]) * math.exp(-a * hi) / a
    return float(a * (val + tail))


def vigon_tail(model: LevyModel, ladder: LadderData, y):
    """``int U_minus(dz) Pi_bar(z + y)`` for exponential-mixture upward jumps."""
    y = np.asarray(y, float)
    out = np.zeros_like(y)
    for m, a in model.up_masses():
        out = out + m * laplace_stieltjes(ladder.U_minus, a) * np.exp(-a * y)
    return out


def mass_of_m(model: LevyModel, ladder: LadderData) -> float:
    """Total mass ``a_plus + int U_minus(x) Pi_bar(x) dx`` of the duality-measure decomposition."""
    if model.up_masses() or not model.has_positive_jumps:
        # int U(x) exp(-a x) dx = LS(a) / a
        return float(ladder.a_plus + sum(m * laplace_stieltjes(ladder.U_minus, a) / a
                                         for m, a in model.up_masses()))
    f = lambda x: float(ladder.U_minus(x)) * float(levy_tail(model, x))
    val, _ = integrate.quad(f, 0.0, np.inf, limit=400)
    return float(ladder.a_plus + val)


def green_density(ladder: LadderData, x: float, y):
    """Density of the killed potential ``U(x, dy)`` from the convolution of the renewal measures.

    Atoms of ``U_minus``/``U_plus`` at 0 are included explicitly; the step
    convention ``U(0-) = 0`` is used.
    """
    y = np.atleast_1d(np.asarray(y, float))
    um, up = ladder.density_minus(), ladder.u_plus
    out = np.zeros_like(y)
    for i, yy in enumerate(y):
        lo, hi = max(x - yy, 0.0), x
        if hi > lo:
            s = 0.0
            # split at a handful of panels so exponentials are resolved
            edges = np.linspace(lo, hi, 5)
            for a, b in zip(edges[:-1], edges[1:]):
                z, w = gl_nodes(a, b, _GL32)
                s += float(np.sum(w * um(z) * up(yy + z - x)))
            out[i] = s
    Um0, Up0 = ladder.U_minus.value_at_zero, ladder.U_plus.value_at_zero
    if Um0 != 0.0:
        out = out + Um0 * np.where(y > x, up(np.maximum(y - x, 0.0)), 0.0)
    if Up0 != 0.0:
        out = out + Up0 * np.where(y < x, um(np.maximum(x - y, 0.0)), 0.0)
    return out


def green_bin_integrals(ladder: LadderData, x: float, edges) -> np.ndarray:
    edges = np.asarray(edges, float)
    out = np.zeros(len(edges) - 1)
    for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        # the density has a kink at y = x
        cuts = [a, b] if not (a < x < b) else [a, x, b]
        for c, d in zip(cuts[:-1], cuts[1:]):
            yy, w = gl_nodes(c, d)
            out[i] += float(np.sum(w * green_density(ladder, x, yy)))
    return out


# ---------------------------------------------------------------------------
# Gaussian bin integrals used by conditional Monte Carlo

def _gauss_moment_bins(mu, sd, edges, curve):
    """``int_bin f(y) N(mu, sd^2)(dy)`` for every row of ``mu``/``sd`` and every bin."""
    mu = mu[:, None]
    sd = sd[:, None]
    e = np.asarray(edges, float)[None, :]
    if curve is None:
        return np.diff(ndtr((e - mu) / sd), axis=1)
    if isinstance(curve, ExpLinear):
        zc = (e - mu) / sd
        Phi = ndtr(zc)
        phi = np.exp(-0.5 * zc * zc) / math.sqrt(2 * math.pi)
        out = curve.c0 * np.diff(Phi, axis=1)
        out = out + curve.c1 * (mu * np.diff(Phi, axis=1) - sd * np.diff(phi, axis=1))
        for d, g in zip(curve.coefs, curve.rates):
            shift = np.exp(np.clip(-g * mu + 0.5 * g * g * sd * sd, -700, 700))
            out = out + d * shift * np.diff(ndtr((e - mu + g * sd * sd) / sd), axis=1)
        return out
    # tabulated: piecewise linear on eight sub-panels per bin
    nb = e.shape[1] - 1
    out = np.zeros((mu.shape[0], nb))
    for i in range(nb):
        sub = np.linspace(e[0, i], e[0, i + 1], 9)
        fv = curve(sub)
        for a, b, fa, fb in zip(sub[:-1], sub[1:], fv[:-1], fv[1:]):
            slope = (fb - fa) / (b - a)
            za, zb = (a - mu) / sd, (b - mu) / sd
            dP = ndtr(zb) - ndtr(za)
            dp = (np.exp(-0.5 * zb * zb) - np.exp(-0.5 * za * za)) / math.sqrt(2 * math.pi)
            out[:, i] += ((fa - slope * a) * dP + slope * (mu[:, 0:1] * dP - sd[:, 0:1] * dp))[:, 0]
    return out


def killed_kernel_bins(z, s, drift, sigma, edges, curve=None):
    """``int_bin f(y) k_s(z, y) dy`` for Brownian motion with drift killed at 0.

    ``z`` and ``s`` are arrays (start values and durations); ``s == 0`` gives a
    point mass at ``z``.
    """
    z = np.asarray(z, float)
    s = np.asarray(s, float)
    out = np.zeros((z.size, len(edges) - 1))
    pos = s > 1e-14
    if np.any(pos):
        zz, ss = z[pos], s[pos]
        sd = sigma * np.sqrt(ss)
        first = _gauss_moment_bins(zz + drift * ss, sd, edges, curve)
        image = _gauss_moment_bins(-zz + drift * ss, sd, edges, curve)
        fac = np.exp(np.clip(-2.0 * drift * zz / sigma**2, -700, 700))[:, None]
        out[pos] = first - fac * image
    if np.any(~pos):
        zz = z[~pos]
        idx = np.searchsorted(edges, zz, side="right") - 1
        ok = (idx >= 0) & (idx < len(edges) - 1)
        vals = np.ones_like(zz) if curve is None else np.asarray(curve(zz), float)
        rows = np.nonzero(~pos)[0]
        out[rows[ok], idx[ok]] = vals[ok]
    return out


# ---------------------------------------------------------------------------
# Monte Carlo Green function of the killed process

def killed_green_mc(model: LevyModel, x_ref: float, edges, n_paths: int, dt: float, horizon: float,
                    seed: int, stream: int = 11):
    """Occupation density of the process killed below 0, started at ``x_ref``.

    Uses bridge survival weights and a Richardson step over horizons
    ``horizon`` and ``4*horizon`` (the missing mass decays like ``t^(-1/2)``).

    Returns
    -------
    density : ndarray
        Estimated density per bin.
    raw : ndarray
        Density from the longer horizon only.
    """
    edges = np.asarray(edges, float)
    n1 = int(round(horizon / dt))
    occ1, occ2 = sum_blocks(_mc.killed_occupation, n_paths, seed, stream, *model.kernel_args(),
                            float(x_ref), float(dt), n1, 4 * n1, edges, 0.05)
    widths = np.diff(edges)
    d1, d2 = occ1 / n_paths / widths, occ2 / n_paths / widths
    return 2.0 * d2 - d1, d2


# ---------------------------------------------------------------------------
# ladder estimation

def _volterra_renewal(nu_bar, h: float, n: int):
    """Solve ``v + nu_bar * v = 1`` on ``[0, n*h]``; ``nu_bar`` is sampled on the same grid."""
    v = np.empty(n + 1)
    v[0] = 1.0
    denom = 1.0 + 0.5 * h * nu_bar[0]
    for i in range(1, n + 1):
        acc = 0.5 * nu_bar[i] * v[0]
        if i > 1:
            acc += float(np.dot(nu_bar[i - 1:0:-1], v[1:i]))
        v[i] = (1.0 - h * acc) / denom
    return v


def _renewal_side(creep: float, jumps: np.ndarray, grid: np.ndarray, killed: int = 0):
    """Renewal function in creep units (or epoch units when there is no creep).

    ``killed`` paths (escaped for good) enter as jumps to infinity.
    """
    h = grid[1] - grid[0]
    n = len(grid) - 1
    sj = np.sort(jumps)
    if creep > 0:
        nu_bar = (sj.size + killed - np.searchsorted(sj, grid, side="right")) / creep
        v = _volterra_renewal(nu_bar, h, n)
        V = integrate.cumulative_trapezoid(v, grid, initial=0.0)
        slope = 0.0 if killed else 1.0 / (1.0 + float(sj.sum()) / creep)
        return {"mode": "creep", "V": V, "v": v, "nu_bar": nu_bar, "slope": slope,
                "jump_mass": float(sj.sum()) / creep, "kill_rate": killed / creep}
    if sj.size == 0:
        raise CalibrationFailure("no ladder activity observed")
    tot = sj.size + killed
    F = np.searchsorted(sj, grid, side="right") / tot
    f = np.diff(F, prepend=0.0)
    V = np.empty(n + 1)
    V[0] = 1.0 / (1.0 - f[0]) if f[0] < 1 else np.inf
    for i in range(1, n + 1):
        V[i] = (1.0 + float(np.dot(f[1:i + 1], V[i - 1::-1]))) / (1.0 - f[0])
    mean = float(sj.mean())
    return {"mode": "epoch", "V": V, "v": np.gradient(V, grid), "F": F,
            "slope": 0.0 if killed else 1.0 / mean, "mean_jump": mean, "kill_rate": killed / tot}


def estimate_ladder(model: LevyModel, n_paths: int = 100_000, horizon: float = 1e4, dt: float = 1e-3,
                    seed: int = 0, *, level: float = 1.0, x_ref: float = 1.0, x_max: float = 10.0, grid_step: float = 0.01,
                    n_green: int = 20_000, green_horizon: float = 25.0, green_dt: float | None = None,
                    fit_range=(0.1, 3.0), max_residual: float = 0.15) -> LadderData:
    """Monte Carlo ladder data with a calibrated local-time normalization.

    New-maximum increments of exactly simulated paths, each run until its
    maximum passes ``level`` (real time capped at ``horizon``), give the ladder
    renewal functions up to scale (creep units). Paths of a process drifting
    away from the level that hit the cap count as killed ladder processes. The product of the two scales is fitted
    so the convolution of the renewal measures matches a Monte Carlo Green
    function of the killed process; the split uses equal ladder drifts when
    ``sigma > 0`` and a unit mean ladder height otherwise. Vigon's tail identity
    and the mass of the duality measure are reported as residuals.

    Raises
    ------
    RefusesInfiniteMean
        If the ascending ladder height does not have finite mean.
    CalibrationFailure
        If the Green-function fit residual exceeds ``max_residual``.
    """
    if classify_ladder_mean(model) != LadderClass.FINITE:
        raise RefusesInfiniteMean("ladder height mean is infinite; no stationary regime")
    dual = negate(model)
    grid = np.arange(0.0, x_max + 0.5 * grid_step, grid_step)
    sides = {}
    for name, mdl, stream in (("plus", model, 1), ("minus", dual, 2)):
        creep, cens, jumps = run_blocks(_mc.ladder_scan, n_paths, seed, stream, *mdl.kernel_args(),
                                        float(level), float(horizon), 100_000_000)
        killed = int(cens.sum()) if mean_increment(mdl) < 0 else 0
        side = _renewal_side(float(creep.sum()), jumps, grid, killed)
        side["n_jumps"] = int(jumps.size)
        side["censored"] = int(cens.sum())
        side["creep"] = float(creep.sum())
        sides[name] = side
    sp, sm = sides["plus"], sides["minus"]

    # scale product from the Green function (unit scales first)
    unit = _assemble(model, sp, sm, grid, 1.0, 1.0)
    edges = np.linspace(0.0, fit_range[1], int(round(fit_range[1] / 0.1)) + 1)
    gdt = green_dt if green_dt is not None else dt
    G, _ = killed_green_mc(model, x_ref, edges, n_green, gdt, green_horizon, seed)
    conv = green_bin_integrals(unit, x_ref, edges) / np.diff(edges)
    centers = 0.5 * (edges[1:] + edges[:-1])
    use = (centers >= fit_range[0]) & (conv > 0)
    P = float(np.sum(G[use] * conv[use]) / np.sum(conv[use] ** 2))
    fit_res = float(np.max(np.abs(G[use] / (P * conv[use]) - 1.0)))
    if not P > 0 or fit_res > max_residual:
        raise CalibrationFailure(f"Green-function fit residual {fit_res:.3g} (product {P:.4g})")

    if model.sigma > 0:
        k_plus = k_minus = math.sqrt(P)
        split = "symmetric"
    else:
        k_plus = 1.0 + sp["jump_mass"] if sp["mode"] == "creep" else sp["mean_jump"]
        k_minus = P / k_plus
        split = "unit_mean"
    ladder = _assemble(model, sp, sm, grid, k_plus, k_minus)

    # residuals
    ys = np.array([0.0, 0.25, 0.5, 1.0])
    vig = vigon_tail(model, ladder, ys)
    mu = ladder.mu_plus_tail(ys)
    scale = max(float(vig[0]), float(mu[0]), 1e-300)
    vig_res = float(np.max(np.abs(vig - mu)) / scale) if model.has_positive_jumps else 0.0
    mass = mass_of_m(model, ladder) if model.is_hyperexponential else math.nan
    meta = dict(ladder.meta)
    meta.update({"seed": seed, "n_paths": n_paths, "horizon": horizon, "x_ref": x_ref,
                 "scale_product": P, "k_plus": k_plus, "k_minus": k_minus, "split": split,
                 "green_fit_residual": fit_res, "vigon_residual": vig_res,
                 "mass_m": mass, "mass_m_residual": abs(mass - ladder.EH) / ladder.EH,
                 "n_ladder_jumps_plus": sp["n_jumps"], "n_ladder_jumps_minus": sm["n_jumps"],
                 "censored_plus": sp["censored"], "censored_minus": sm["censored"],
                 "kill_rate_minus": sm["kill_rate"],
                 "green_bins": edges.tolist(), "green_mc": G.tolist()})
    return LadderData(ladder.a_plus, ladder.a_minus, ladder.U_plus, ladder.U_minus, ladder.u_plus,
                      ladder.mu_plus_tail, ladder.EH, LadderSource.MONTE_CARLO, ladder.u_minus, meta)


def _assemble(model, sp, sm, grid, k_plus, k_minus) -> LadderData:
    def tab(vals, slope=None):
        return TabulatedFunction(grid, vals, "linear", ("linear", slope) if slope is not None else None)

    U_plus = tab(k_plus * sp["V"], k_plus * sp["slope"])
    U_minus = tab(k_minus * sm["V"], k_minus * sm["slope"])
    u_plus = tab(k_plus * sp["v"])
    u_minus = tab(k_minus * sm["v"])
    if sp["mode"] == "creep":
        a_plus = 1.0 / k_plus
        mu_tail = TabulatedFunction(grid, sp["nu_bar"] / k_plus, "step", ("exp", 0.0, 1.0))
        EH = (1.0 + sp["jump_mass"]) / k_plus
    else:
        a_plus = 0.0
        mu_tail = TabulatedFunction(grid, (1.0 - sp["F"]) / k_plus, "step", ("exp", 0.0, 1.0))
        EH = sp["mean_jump"] / k_plus
    a_minus = 1.0 / k_minus if sm["mode"] == "creep" else 0.0
    return LadderData(a_plus, a_minus, U_plus, U_minus, u_plus, mu_tail, EH, LadderSource.MONTE_CARLO,
                      u_minus, {"mode_plus": sp["mode"], "mode_minus": sm["mode"]})


def exp_fit_r2(y, values):
    """R^2 of a straight-line fit to ``log(values)`` (positive entries only)."""
    y, values = np.asarray(y, float), np.asarray(values, float)
    keep = values > 0
    if keep.sum() < 3:
        return math.nan, math.nan
    A = np.vstack([np.ones(keep.sum()), y[keep]]).T
    coef, *_ = np.linalg.lstsq(A, np.log(values[keep]), rcond=None)
    resid = np.log(values[keep]) - A @ coef
    tot = np.log(values[keep]) - np.log(values[keep]).mean()
    return float(-coef[1]), float(1.0 - resid @ resid / (tot @ tot))


# ---------------------------------------------------------------------------
# the stationary overshoot law

@dataclass(frozen=True)
class RhoLaw:
    """Law of the pair (undershoot, overshoot) in the stationary regime.

    An atom at ``(0, 0)`` of mass ``a_plus/EH`` plus the density
    ``U_minus(x) pi(x + y) / EH`` on ``(0, inf)^2``, with ``pi`` the density of
    upward jumps (a mixture of exponentials ``sum m_k a_k exp(-a_k u)``).
    """

    atom_mass: float
    EH: float
    up_masses: tuple
    laplace_U_minus: tuple
    U_minus: object
    total_mass: float
    x_grid: np.ndarray = field(repr=False)
    x_cum: np.ndarray = field(repr=False)
    comp_cum: np.ndarray = field(repr=False)

    @property
    def has_density(self) -> bool:
        return len(self.up_masses) > 0

    def joint_density(self, x, y):
        x, y = np.asarray(x, float), np.asarray(y, float)
        pi = sum(m * a * np.exp(-a * (x + y)) for m, a in self.up_masses) if self.up_masses else 0.0 * x
        return np.where((x > 0) & (y > 0), self.U_minus(x) * pi / self.EH, 0.0)

    def rho1_density(self, x):
        x = np.asarray(x, float)
        tail = sum(m * np.exp(-a * x) for m, a in self.up_masses) if self.up_masses else 0.0 * x
        return np.where(x > 0, self.U_minus(x) * tail / self.EH, 0.0)

    def rho2_density(self, y):
        """Density part of the overshoot marginal, the Vigon convolution over ``EH``."""
        y = np.asarray(y, float)
        out = 0.0 * y
        for (m, a), L in zip(self.up_masses, self.laplace_U_minus):
            out = out + m * L * np.exp(-a * y) / self.EH
        return np.where(y > 0, out, 0.0)

    def rho1_cdf(self, x):
        x = np.asarray(x, float)
        c = np.interp(x, self.x_grid, self.x_cum, right=self.x_cum[-1])
        return np.where(x < 0, 0.0, (self.atom_mass + c) / self.total_mass)

    def rho2_cdf(self, y):
        y = np.asarray(y, float)
        c = 0.0 * y
        for (m, a), L in zip(self.up_masses, self.laplace_U_minus):
            c = c + m * L / (a * self.EH) * -np.expm1(-a * np.maximum(y, 0.0))
        return np.where(y < 0, 0.0, (self.atom_mass + c) / self.total_mass)

    @staticmethod
    def left_limit(cdf):
        """Left-continuous version of a cdf with a single atom at 0."""
        return lambda v: np.where(np.asarray(v) <= 0, 0.0, cdf(v))

    def joint_cdf(self, x, y):
        """``rho([0, x] x [0, y])``."""
        x, y = np.asarray(x, float), np.asarray(y, float)
        out = np.full(np.broadcast(x, y).shape, self.atom_mass)
        for k, (m, a) in enumerate(self.up_masses):
            ck = np.interp(x, self.x_grid, self.comp_cum[k], right=self.comp_cum[k][-1])
            out = out + ck * -np.expm1(-a * np.maximum(y, 0.0))
        return np.where((x < 0) | (y < 0), 0.0, out / self.total_mass)

    def sample(self, n: int, rng: np.random.Generator):
        """Draw ``n`` pairs; the overshoot given the undershoot is exact (memorylessness)."""
        x = np.zeros(n)
        y = np.zeros(n)
        if not self.has_density:
            return x, y
        u = rng.random(n) * self.total_mass
        dens = u >= self.atom_mass
        k = int(dens.sum())
        if k:
            x[dens] = np.interp(u[dens] - self.atom_mass, self.x_cum, self.x_grid)
            ms = np.array([m for m, _ in self.up_masses])
            rs = np.array([a for _, a in self.up_masses])
            w = ms[None, :] * np.exp(-rs[None, :] * x[dens][:, None])
            w = np.cumsum(w, axis=1)
            pick = (rng.random(k)[:, None] * w[:, -1:] > w).sum(axis=1)
            y[dens] = rng.standard_exponential(k) / rs[pick]
        return x, y

    def to_dict(self) -> dict:
        return {"atom_mass": self.atom_mass, "EH": self.EH, "total_mass": self.total_mass,
                "up_masses": [list(t) for t in self.up_masses],
                "laplace_U_minus": list(self.laplace_U_minus), "U_minus": self.U_minus.to_dict(),
                "x_grid": self.x_grid.tolist(), "x_cum": self.x_cum.tolist(),
                "comp_cum": [c.tolist() for c in self.comp_cum]}

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "RhoLaw":
        return cls(d["atom_mass"], d["EH"], tuple(tuple(t) for t in d["up_masses"]),
                   tuple(d["laplace_U_minus"]), curve_from_dict(d["U_minus"]), d["total_mass"],
                   np.asarray(d["x_grid"]), np.asarray(d["x_cum"]),
                   np.asarray(d["comp_cum"]).reshape(len(d["up_masses"]), -1))


def build_rho(model: LevyModel, ladder: LadderData, n_grid: int = 40_001) -> RhoLaw:
    """Stationary (undershoot, overshoot) law from the ladder data.

    Raises
    ------
    DomainError
        If ``EH`` is not finite and positive.
    Unsupported
        For upward jumps that are not a mixture of exponentials.
    """
    if not (math.isfinite(ladder.EH) and ladder.EH > 0):
        raise DomainError("EH must be finite and positive")
    if model.has_positive_jumps and not model.up_masses():
        raise Unsupported("stationary law needs exponential-mixture upward jumps")
    up = tuple((float(m), float(a)) for m, a in model.up_masses())
    EH = float(ladder.EH)
    atom = float(ladder.a_plus) / EH
    if not up:
        g = np.array([0.0, 1.0])
        return RhoLaw(atom, EH, (), (), ladder.U_minus, atom, g, np.zeros(2), np.zeros((0, 2)))
    L = tuple(laplace_stieltjes(ladder.U_minus, a) for _, a in up)
    amin = min(a for _, a in up)
    x_hi = 40.0 / amin
    xg = np.linspace(0.0, x_hi, n_grid)
    Ux = ladder.U_minus(xg)
    comp = np.array([integrate.cumulative_trapezoid(Ux * m * np.exp(-a * xg) / EH, xg, initial=0.0)
                     for m, a in up])
    cum = comp.sum(axis=0)
    total = atom + float(cum[-1])
    return RhoLaw(atom, EH, up, L, ladder.U_minus, total, xg, cum, comp)


# ---------------------------------------------------------------------------
# the conditioned process

@dataclass
class ConditionedEnsemble:
    """Marginals of the process conditioned to stay positive.

    ``values[i, j]`` is replica ``i`` at ``probes[j]``; ``weights`` has the same
    shape (all ones for exact or transform samplers, likelihood ratios for the
    weighted sampler, 0 after killing).
    """

    x0: np.ndarray
    probes: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    method: str
    flags: dict = field(default_factory=dict)

    def marginal(self, j: int):
        keep = self.weights[:, j] > 0
        return self.values[keep, j], self.weights[keep, j]

    def ess(self, j: int) -> float:
        return effective_sample_size(self.weights[:, j])


def harmonic_params(curve):
    """``(c1, d, g)`` of an exp-linear curve vanishing at 0, or ``None`` if unusable for the transform sampler."""
    if not isinstance(curve, ExpLinear):
        return None
    scale = max(1.0, abs(curve.c1), *[abs(d) for d in curve.coefs])
    if abs(curve.value_at_zero) > 1e-10 * scale:
        return None
    if any(d > 1e-14 * scale for d in curve.coefs):
        return None  # not concave
    return (float(curve.c1), np.array(curve.coefs, float), np.array(curve.rates, float))


def conditioned_method(model: LevyModel, ladder: LadderData) -> str:
    if model.sigma > 0 and model.is_hyperexponential and harmonic_params(ladder.U_minus) is not None:
        if model.jumps is None and model.drift == 0.0:
            return "bessel"
        return "transform"
    return "weighted"


def sample_conditioned(model: LevyModel, ladder: LadderData, x, horizon: float, dt: float, n_paths: int,
                       seed: int, *, probes=None, method: str = "auto", ess_floor: float = 0.1,
                       stream: int = 21) -> ConditionedEnsemble:
    """Ensemble of the process conditioned to stay positive, started at ``x``.

    ``x`` may be a scalar or an array of per-replica starts. Methods: exact
    Bessel-3 steps for driftless Brownian motion; a Doob-transform generator
    sampler when ``U_minus`` is exp-linear and concave with ``U_minus(0) = 0``;
    otherwise the killed process with weights ``U_minus(xi_t)/U_minus(x)``.

    Raises
    ------
    DomainError
        For a start at 0 with the weighted sampler (``U_minus(0) = 0`` makes the
        ratio undefined).
    """
    x0 = np.broadcast_to(np.asarray(x, float), (n_paths,)).copy()
    if np.any(x0 < 0):
        raise DomainError("conditioned process lives on [0, inf)")
    probes = np.array([horizon] if probes is None else probes, float)
    if np.any(np.diff(probes) <= 0) or probes[0] <= 0:
        raise DomainError("probes must be positive and increasing")
    if method == "auto":
        method = conditioned_method(model, ladder)
    flags = {}
    if method in ("bessel", "transform"):
        hp = harmonic_params(ladder.U_minus)
        if hp is None:
            raise Unsupported("transform sampler needs a concave exp-linear U_minus with U_minus(0) = 0")
        up_m, up_a, dn_m, dn_a = jump_arrays(model)
        vals = run_blocks_with_starts(_mc.cond_marginals, x0, seed, stream, probes, float(dt),
                                      float(model.sigma), float(model.drift), up_m, up_a, dn_m, dn_a, *hp)
        weights = np.ones_like(vals)
        if method == "transform":
            flags["approximate"] = f"Euler drift correction and frozen jump clock, dt={dt}"
    elif method == "weighted":
        if np.any(x0 <= 0):
            raise DomainError("weighted sampler cannot start at 0")
        vals = run_blocks_with_starts(_mc.weighted_marginals, x0, seed, stream, probes, float(dt),
                                      *model.kernel_args())
        alive = np.isfinite(vals)
        Ux = ladder.U_minus(x0)
        weights = np.where(alive, ladder.U_minus(np.where(alive, vals, 1.0)) / Ux[:, None], 0.0)
        vals = np.where(alive, vals, np.nan)
        flags["weighted"] = True
        for j in range(probes.size):
            ess = effective_sample_size(weights[:, j])
            if ess < ess_floor * n_paths:
                warnings.warn(f"effective sample size {ess:.0f} below {ess_floor:.2f}*n at t={probes[j]}",
                              WeightDegeneracyWarning, stacklevel=2)
                flags["weight_degeneracy"] = True
    else:
        raise ValueError(f"unknown method {method!r}")
    return ConditionedEnsemble(x0, probes, vals, weights, method, flags)




# ---------------------------------------------------------------------------
# verification routines

def silverstein_check(model: LevyModel, ladder: LadderData, x_ref: float = 1.0, grid=None,
                      n_paths: int = 100_000, seed: int = 0, *, dt: float = 1e-3, horizon: float = 25.0,
                      y_range=(0.1, 3.0), tol: float = 0.05) -> CheckReport:
    """Monte Carlo occupation density of the killed process against the renewal convolution."""
    edges = np.linspace(0.0, 3.0, 31) if grid is None else np.asarray(grid, float)
    mc, raw = killed_green_mc(model, x_ref, edges, n_paths, dt, horizon, seed)
    conv = green_bin_integrals(ladder, x_ref, edges) / np.diff(edges)
    centers = 0.5 * (edges[1:] + edges[:-1])
    use = (centers >= y_range[0]) & (centers <= y_range[1]) & (conv > 0)
    rel = np.abs(mc[use] / conv[use] - 1.0)
    rep = CheckReport("silverstein", n=n_paths, seed=seed)
    rep.add("sup_relative_error", float(rel.max()), tol)
    rep.info("mean_relative_error", float(rel.mean()))
    rep.details.update({"centers": centers.tolist(), "monte_carlo": mc.tolist(), "single_horizon": raw.tolist(),
                        "convolution": conv.tolist()})
    return rep


def _killed_last_piece(model, z, s, edges, curve=None):
    if model.sigma > 0:
        return killed_kernel_bins(z, s, model.drift, model.sigma, edges, curve)
    end = z + model.drift * s
    return killed_kernel_bins(end, np.zeros_like(end), 0.0, 1.0, edges, curve) * (end > 0)[:, None]


def green_duality_check(model: LevyModel, ladder: LadderData, t: float = 0.5, grid=None,
                        n_paths: int = 1_000_000, seed: int = 0, *, dt: float = 2e-3, nodes_per_bin: int = 8,
                        tol: float = 0.07) -> CheckReport:
    """Symmetry of ``U_minus(x) dx p_up_t(x, dy)`` against ``U_minus(y) dy p_dual_t(y, dx)``.

    ``A[i, j]`` uses the conditioned process up to ``t/2`` followed by the
    ``U_minus``-weighted killed process; ``B[j, i]`` uses the killed dual
    process. Both end with the Gaussian piece after the last jump integrated in
    closed form over the target bin. Starts are Gauss-Legendre nodes inside each
    bin.
    """
    edges = np.linspace(0.0, 2.0, 11) if grid is None else np.asarray(grid, float)
    nb = len(edges) - 1
    rule = np.polynomial.legendre.leggauss(nodes_per_bin)
    n_node = max(1, n_paths // (2 * nb * nodes_per_bin))
    dual = negate(model)
    Um = ladder.U_minus
    method = conditioned_method(model, ladder)
    cond_dt = t / 2 if method == "bessel" else dt
    A = np.zeros((nb, nb))
    B = np.zeros((nb, nb))
    rep = CheckReport("green_duality", n=2 * nb * nodes_per_bin * n_node, seed=seed)
    for i in range(nb):
        xs, ws = gl_nodes(edges[i], edges[i + 1], rule)
        for k, (x, w) in enumerate(zip(xs, ws)):
            node = i * nodes_per_bin + k
            # A side: conditioned to t/2, then h-weighted killed process
            ens = sample_conditioned(model, ladder, x, t / 2, cond_dt, n_node, seed, method=method,
                                     stream=1000 + node)
            zmid = ens.values[:, 0]
            wk, zl, sl = run_blocks_with_starts(_mc.killed_to_last_event, zmid, seed, 5000 + node,
                                                *model.kernel_args(), t / 2, 0.0)
            piece = _killed_last_piece(model, zl, sl, edges, Um)
            A[i] += w * Um(x) * np.mean((wk / Um(zmid))[:, None] * piece, axis=0)
            # B side: killed dual process, split at t/2
            wk, zl, sl = run_blocks_with_starts(_mc.killed_to_last_event, np.full(n_node, x), seed, 9000 + node,
                                                *dual.kernel_args(), t, t / 2)
            piece = _killed_last_piece(dual, zl, sl, edges)
            B[i] += w * Um(x) * np.mean(wk[:, None] * piece, axis=0)
        if method == "transform":
            rep.flags["approximate"] = "conditioned half uses the transform sampler"
    Bt = B.T
    asym = np.abs(A - Bt) / (A + Bt)
    rep.add("max_relative_asymmetry", float(np.nanmax(asym)), tol)
    rep.info("mean_relative_asymmetry", float(np.nanmean(asym)))
    rep.details.update({"A": A.tolist(), "B": B.tolist(), "edges": edges.tolist(), "method": method})
    if model.jumps is None and isinstance(Um, ExpLinear):
        exact = _duality_matrix_exact(model, Um, t, edges)
        rep.add("max_relative_error_A_vs_exact", float(np.max(np.abs(A / exact - 1))), tol)
        rep.add("max_relative_error_B_vs_exact", float(np.max(np.abs(Bt / exact - 1))), tol)
        rep.details["exact"] = exact.tolist()
    return rep


def _duality_matrix_exact(model, Um, t, edges):
    nb = len(edges) - 1
    out = np.zeros((nb, nb))
    for i in range(nb):
        xs, ws = gl_nodes(edges[i], edges[i + 1], _GL32)
        piece = killed_kernel_bins(xs, np.full(xs.size, t), model.drift, model.sigma, edges, Um)
        out[i] = ws @ piece
    return out


def potential_identity_check(model: LevyModel, ladder: LadderData, rho: RhoLaw, x_max: float = 2.0,
                             n_paths: int = 100_000, seed: int = 0, *, dt: float = 5e-3, n_bins: int = 20,
                             x_min: float = 0.2, tol: float = 0.05, lemma_oracle=None) -> CheckReport:
    """Occupation density of the conditioned process started from the first marginal of ``rho``.

    The conditioned process runs until it passes above ``L = x_max + 5*x_max``
    and ``2L``; the two occupation measures are combined as ``2*O(2L) - O(L)``,
    which removes the first-order effect of the finite level. ``EH`` times the
    result is compared with ``U_minus`` on ``[x_min, x_max]``.
    """
    method = conditioned_method(model, ladder)
    if method == "weighted":
        raise Unsupported("potential check needs the transform sampler")
    hp = harmonic_params(ladder.U_minus)
    up_m, up_a, dn_m, dn_a = jump_arrays(model)
    rng = np.random.default_rng([seed, 31])
    starts, _ = rho.sample(n_paths, rng)
    L1 = x_max + 5.0 * x_max
    levels = np.array([L1, 2 * L1])
    edges = np.linspace(0.0, x_max, n_bins + 1)
    max_steps = 50_000_000
    kern_args = (float(dt), levels, edges, max_steps, float(model.sigma), float(model.drift),
                 up_m, up_a, dn_m, dn_a, *hp)
    occ, cens = run_blocks_with_starts(_mc.cond_occupation, starts, seed, 41, *kern_args, reduce="sum")
    widths = np.diff(edges)
    dens = (2.0 * occ[1] - occ[0]) / n_paths / widths
    centers = 0.5 * (edges[1:] + edges[:-1])
    target = green_bin_integrals_curve(ladder.U_minus, edges) / widths
    use = (centers >= x_min) & (centers <= x_max)
    ratio = ladder.EH * dens[use] / target[use]
    rep = CheckReport("potential_identity", n=n_paths, seed=seed)
    rep.add("ratio_min", float(ratio.min()), 1.0 - tol, ">=")
    rep.add("ratio_max", float(ratio.max()), 1.0 + tol, "<=")
    rep.info("censored", float(cens))
    rep.info("return_mass_bound", float(ladder.U_minus(x_max) / ladder.U_minus(2 * L1)))
    if method == "transform":
        rep.flags["approximate"] = "transform sampler"
    rep.details.update({"centers": centers.tolist(), "ratio_all": (ladder.EH * dens / target).tolist(),
                        "levels": levels.tolist()})
    # U_up(0, dy) = U_minus(y) u_plus(y) dy, analytically
    if ladder.a_plus > 0:
        ys = np.linspace(x_min, x_max, 41)
        lhs = ladder.U_minus(ys) * ladder.u_plus(ys)
        if lemma_oracle is not None:
            rhs, thr = np.asarray(lemma_oracle(ys), float), 1e-10
        else:
            # small-start limit of the h-transformed killed potential
            x0 = 1e-7
            rhs = np.array([green_density(ladder, x0, y)[0] for y in ys]) * ladder.U_minus(ys) / float(ladder.U_minus(x0))
            thr = 1e-4
        rep.add("lemma_analytic_residual", float(np.max(np.abs(lhs - rhs) / np.maximum(np.abs(rhs), 1e-300))), thr)
        if rho.atom_mass >= 1.0 - 1e-12:
            occ0 = dens
        else:
            occ0_raw, _ = run_blocks_with_starts(_mc.cond_occupation, np.zeros(min(n_paths, 50_000)), seed, 43,
                                                 *kern_args, reduce="sum")
            occ0 = (2.0 * occ0_raw[1] - occ0_raw[0]) / min(n_paths, 50_000) / widths
        lemma_target = np.array([integrate.quad(lambda y: float(ladder.U_minus(y) * ladder.u_plus(y)), a, b)[0]
                                 for a, b in zip(edges[:-1], edges[1:])]) / widths
        r0 = occ0[use] / lemma_target[use]
        rep.add("lemma_ratio_max_deviation", float(np.max(np.abs(r0 - 1.0))), tol)
    return rep


def green_bin_integrals_curve(curve, edges) -> np.ndarray:
    """``int_bin curve(y) dy`` for each bin."""
    out = np.zeros(len(edges) - 1)
    for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        y, w = gl_nodes(a, b, _GL32)
        out[i] = float(np.sum(w * curve(y)))
    return out


@dataclass(frozen=True)
class CrossingEstimate:
    estimate: float
    stderr: float
    analytic: float
    limit: float
    n: int
    undetected: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def continuous_crossing_prob(model: LevyModel, ladder: LadderData, x: float, n_paths: int = 100_000,
                             seed: int = 0, *, max_time: float = 1e6) -> CrossingEstimate:
    """Fraction of continuous first exits from ``(0, inf)`` of the dual process started at ``x``.

    Returned with ``a_plus * u_plus(x)`` and its large-``x`` limit ``a_plus / EH``.
    """
    if x <= 0:
        raise DomainError("x must be positive")
    if ladder.a_plus <= 0:
        return CrossingEstimate(0.0, 0.0, 0.0, 0.0, 0, 0)
    # exit of the dual from x below 0 is the passage of the model from -x above 0
    kinds, _, _, _ = _passage_from(model, -float(x), n_paths, seed, 51, max_time)
    det = kinds > 0
    n = int(det.sum())
    p = float(np.mean(kinds[det] == 1)) if n else math.nan
    se = math.sqrt(p * (1 - p) / n) if n else math.nan
    return CrossingEstimate(p, se, float(ladder.a_plus * ladder.u_plus(x)), ladder.a_plus / ladder.EH,
                            n, int((~det).sum()))


def _passage_from(model, x0, n_paths, seed, stream, max_time):
    starts = np.full(int(n_paths), float(x0))
    return run_blocks_with_starts(_passage.passage_batch, starts, seed, stream, 0.0, float(max_time), 1e-3, 1.0,
                                  *_passage.macro_params(model), *model.kernel_args())


def entrance_pairs(model: LevyModel, z: float, n_paths: int, seed: int, stream: int = 61,
                   max_time: float = 1e6):
    """(undershoot, overshoot) at the first entrance into ``(0, inf)`` from ``-z``; also the undetected count."""
    kinds, _, under, over = _passage_from(model, -float(z), n_paths, seed, stream, max_time)
    det = kinds > 0
    return under[det], over[det], int((~det).sum())


def quadrant_ks(x, y, cdf2, max_points: int = 2000, seed: int = 0) -> float:
    """Max gap between empirical and model lower-left quadrant probabilities at sample points."""
    x, y = np.asarray(x), np.asarray(y)
    if x.size > max_points:
        pick = np.random.default_rng(seed).choice(x.size, max_points, replace=False)
        px, py = x[pick], y[pick]
    else:
        px, py = x, y
    emp = np.array([np.mean((x <= a) & (y <= b)) for a, b in zip(px, py)])
    return float(np.max(np.abs(emp - cdf2(px, py))))


def overshoot_limit_check(model: LevyModel, rho: RhoLaw, z_list=(2.0, 5.0, 10.0), n_paths: int = 100_000,
                          seed: int = 0, *, terminal_tol: float = 0.02, memoryless_tol: float = 0.01,
                          max_time: float = 1e6) -> CheckReport:
    """Distance of the entrance (undershoot, overshoot) law from ``-z`` to ``rho`` for increasing ``z``.

    Monotonicity of the overshoot-marginal KS is judged up to the KS noise
    level ``1.36/sqrt(n)``.
    """
    if classify_ladder_mean(model) != LadderClass.FINITE:
        raise RefusesInfiniteMean("no limit law for infinite-mean ladder heights")
    rep = CheckReport("overshoot_limit", n=n_paths * len(z_list), seed=seed)
    ks2, pos_over = [], []
    left2 = RhoLaw.left_limit(rho.rho2_cdf)
    left1 = RhoLaw.left_limit(rho.rho1_cdf)
    for k, z in enumerate(z_list):
        u, o, und = entrance_pairs(model, z, n_paths, seed, 61 + k, max_time)
        r2 = ks_distance(o, cdf=rho.rho2_cdf, cdf_left=left2)
        r1 = ks_distance(u, cdf=rho.rho1_cdf, cdf_left=left1)
        ks2.append(r2.statistic)
        rep.info(f"ks_overshoot_z{z:g}", r2.statistic)
        rep.info(f"ks_undershoot_z{z:g}", r1.statistic)
        rep.info(f"ks_joint_z{z:g}", quadrant_ks(u, o, rho.joint_cdf, seed=seed))
        rep.info(f"undetected_z{z:g}", float(und))
        rep.info(f"continuous_fraction_z{z:g}", float(np.mean(o == 0.0)))
        pos_over.append(o[o > 0])
    noise = 1.36 / math.sqrt(n_paths)
    steps = np.diff(ks2)
    rep.add("ks_overshoot_nonincreasing", bool(np.all(steps <= noise)), True, "==")
    rep.add("ks_overshoot_terminal", float(ks2[-1]), terminal_tol)
    up = model.up_masses()
    if len(up) == 1:
        pooled = np.concatenate(pos_over)
        a = up[0][1]
        if pooled.size:
            r = ks_distance(pooled, cdf=lambda v: -np.expm1(-a * np.maximum(v, 0.0)))
            rep.add("ks_memoryless", r.statistic, memoryless_tol, pvalue=r.pvalue)
    elif not up:
        rep.add("overshoot_all_zero", bool(all(p.size == 0 for p in pos_over)), True, "==")
    rep.details["z_list"] = list(map(float, z_list))
    rep.details["ks_overshoot"] = [float(v) for v in ks2]
    rep.details["noise_level"] = noise
    return rep
