"""Levy triplets with hyperexponential or truncated one-sided stable-like jumps.

Besides validation and basic analytic ingredients (jump tails, mean, ladder
mean classification) this module computes closed-form ladder data for models
whose jump law is a finite mixture of exponentials. For such models the
Laplace exponent is rational, the Wiener-Hopf factors are rational functions
whose zeros are the real roots of a polynomial, and every renewal function is
a finite sum of exponentials plus a linear part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy import integrate, special

from .curves import ExpLinear
from .errors import (
    DomainError,
    RefusesInfiniteMean,
    RejectCompoundPoisson,
    RejectParam,
    UndeterminedClassification,
    Unsupported,
)
from .ladder import LadderData, LadderSource


class Family(str, Enum):
    BROWNIAN_STANDARD = "BrownianStandard"
    BROWNIAN_DRIFT = "BrownianDrift"
    KOU = "KouTwoSidedExp"
    SPECTRALLY_NEGATIVE_EXP = "SpectrallyNegativeExp"
    CUSTOM = "Custom"


class LadderClass(str, Enum):
    FINITE = "FiniteMeanLadder"
    INFINITE = "InfiniteMeanLadder"


@dataclass(frozen=True)
class ExpComponent:
    """Exponential jump component: size ``sign * Exp(rate)`` chosen with probability ``weight``."""

    weight: float
    rate: float
    sign: int


@dataclass(frozen=True)
class FiniteActivity:
    """Compound Poisson jumps at total intensity ``rate`` with an exponential-mixture size law."""

    rate: float
    components: tuple

    def masses(self, sign: int):
        """Pairs ``(intensity, exponential rate)`` for components of the given sign."""
        return [(self.rate * c.weight, c.rate) for c in self.components if c.sign == sign and c.weight > 0]

    def tail(self, x, sign: int = 1):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for m, a in self.masses(sign):
            out = out + m * np.exp(-a * x)
        return out

    def mean_jump(self) -> float:
        return sum(c.weight * c.sign / c.rate for c in self.components)

    def second_moment(self) -> float:
        return sum(2.0 * c.weight / c.rate**2 for c in self.components)


@dataclass(frozen=True)
class TruncatedSpectral:
    """One-sided density ``scale * x**(-1-alpha) * exp(-tempering * x)`` restricted to ``x > epsilon``.

    Jumps below ``epsilon`` are discarded; their variance is available from
    :meth:`discarded_variance` and must be reported by callers.
    """

    scale: float
    alpha: float
    tempering: float
    sign: int
    epsilon: float = 1e-3
    _tab: dict = field(default_factory=dict, compare=False, repr=False)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            d = self.scale * x ** (-1.0 - self.alpha) * np.exp(-self.tempering * x)
        return np.where(x > self.epsilon, d, 0.0)

    def _upper(self, x: float) -> float:
        x = max(x, self.epsilon)
        if self.tempering > 0:
            val, _ = integrate.quad(lambda u: u ** (-1.0 - self.alpha) * math.exp(-self.tempering * u),
                                    x, np.inf, limit=200)
            return self.scale * val
        return self.scale * x ** (-self.alpha) / self.alpha

    @property
    def rate(self) -> float:
        if "rate" not in self._tab:
            self._tab["rate"] = self._upper(self.epsilon)
        return self._tab["rate"]

    def tail(self, x, sign: int = 1):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if sign != self.sign:
            return np.zeros_like(x)
        return np.array([self._upper(v) for v in x])

    def mean_jump(self) -> float:
        if self.tempering == 0 and self.alpha <= 1:
            return self.sign * math.inf
        if self.tempering > 0:
            val, _ = integrate.quad(lambda u: u ** (-self.alpha) * math.exp(-self.tempering * u),
                                    self.epsilon, np.inf, limit=200)
        else:
            val = self.epsilon ** (1.0 - self.alpha) / (self.alpha - 1.0)
        return self.sign * self.scale * val / self.rate

    def discarded_variance(self) -> float:
        b, a = self.tempering, self.alpha
        if b > 0:
            return self.scale * b ** (a - 2.0) * special.gamma(2.0 - a) * special.gammainc(2.0 - a, b * self.epsilon)
        return self.scale * self.epsilon ** (2.0 - a) / (2.0 - a)

    def quantile_table(self, n: int = 4096):
        """Grid ``(cdf, x)`` of the normalized jump-size law for inverse-transform sampling."""
        if "table" in self._tab:
            return self._tab["table"]
        lam = self.rate
        hi = self.epsilon * 10.0
        while self._upper(hi) / lam > 1e-10 and hi < 1e8:
            hi *= 2.0
        xs = np.geomspace(self.epsilon, hi, n)
        cdf = 1.0 - np.array([self._upper(v) for v in xs]) / lam
        cdf[0] = 0.0
        cdf[-1] = 1.0
        cdf = np.maximum.accumulate(cdf)
        self._tab["table"] = (cdf, xs)
        return cdf, xs


@dataclass(frozen=True)
class LevyModel:
    """Levy triplet: Gaussian coefficient, linear drift and jump specification.

    Attributes
    ----------
    sigma : float
        Gaussian coefficient, ``>= 0``.
    drift : float
        Linear drift ``b``.
    jumps : FiniteActivity, TruncatedSpectral or None
    family_tag : Family
    params : tuple
        Sorted ``(name, value)`` pairs echoing the family parameters.
    """

    sigma: float
    drift: float
    jumps: FiniteActivity | TruncatedSpectral | None = None
    family_tag: Family = Family.CUSTOM
    params: tuple = ()

    @property
    def jump_rate(self) -> float:
        return 0.0 if self.jumps is None else float(self.jumps.rate)

    def up_masses(self):
        if isinstance(self.jumps, FiniteActivity):
            return self.jumps.masses(+1)
        return []

    def down_masses(self):
        if isinstance(self.jumps, FiniteActivity):
            return self.jumps.masses(-1)
        return []

    @property
    def has_positive_jumps(self) -> bool:
        if self.jumps is None:
            return False
        if isinstance(self.jumps, TruncatedSpectral):
            return self.jumps.sign > 0
        return len(self.up_masses()) > 0

    @property
    def has_negative_jumps(self) -> bool:
        if self.jumps is None:
            return False
        if isinstance(self.jumps, TruncatedSpectral):
            return self.jumps.sign < 0
        return len(self.down_masses()) > 0

    @property
    def is_hyperexponential(self) -> bool:
        return self.jumps is None or isinstance(self.jumps, FiniteActivity)

    def param(self, name, default=None):
        return dict(self.params).get(name, default)

    def laplace_exponent(self, theta):
        """``log E exp(theta * xi_1)`` inside the strip of exponential moments (hyperexponential jumps only)."""
        if not self.is_hyperexponential:
            raise Unsupported("Laplace exponent needs hyperexponential jumps")
        th = np.asarray(theta, dtype=complex if np.iscomplexobj(theta) else float)
        out = self.drift * th + 0.5 * self.sigma**2 * th**2
        for m, a in self.up_masses():
            out = out + m * (a / (a - th) - 1.0)
        for m, a in self.down_masses():
            out = out + m * (a / (a + th) - 1.0)
        return out

    def kernel_args(self):
        """Flat arrays describing the model for the compiled simulation kernels."""
        return _kernel_args(self)

    def to_dict(self) -> dict:
        d = {"family": self.family_tag.value, **dict(self.params)}
        if self.family_tag == Family.CUSTOM:
            d = {"family": "Custom", "sigma": self.sigma, "drift": self.drift, "jumps": _jumps_to_dict(self.jumps)}
        return d


def _jumps_to_dict(j):
    if j is None:
        return None
    if isinstance(j, FiniteActivity):
        return {"rate": j.rate, "components": [
            {"weight": c.weight, "rate": c.rate, "sign": c.sign} for c in j.components]}
    return {"scale": j.scale, "alpha": j.alpha, "tempering": j.tempering,
            "sign": j.sign, "epsilon": j.epsilon}


_KERNEL_CACHE: dict = {}


def _kernel_args(model: LevyModel):
    key = id(model)
    hit = _KERNEL_CACHE.get(key)
    if hit is not None and hit[0] is model:
        return hit[1]
    j = model.jumps
    if j is None:
        args = (float(model.sigma), float(model.drift), 0.0, np.ones(1), np.ones(1, np.int64),
                np.zeros(1, np.int64), np.ones(1), np.zeros((1, 2)), np.zeros((1, 2)))
    elif isinstance(j, FiniteActivity):
        comps = [c for c in j.components if c.weight > 0]
        w = np.array([c.weight for c in comps])
        cumw = np.cumsum(w) / w.sum()
        cumw[-1] = 1.0
        args = (float(model.sigma), float(model.drift), float(j.rate), cumw,
                np.array([c.sign for c in comps], np.int64), np.zeros(len(comps), np.int64),
                np.array([c.rate for c in comps]), np.zeros((1, 2)), np.zeros((1, 2)))
    else:
        cdf, xs = j.quantile_table()
        args = (float(model.sigma), float(model.drift), float(j.rate), np.ones(1),
                np.array([j.sign], np.int64), np.ones(1, np.int64), np.ones(1),
                cdf[None, :].copy(), xs[None, :].copy())
    _KERNEL_CACHE[key] = (model, args)
    return args


# ---------------------------------------------------------------------------
# construction

_ALIASES = {"lam": "rate", "lambda": "rate", "intensity": "rate", "b": "drift",
            "alpha_up": "alpha_plus", "alpha_down": "alpha_minus"}


def _canon(params: dict) -> dict:
    return {_ALIASES.get(k, k): v for k, v in params.items()}


def _positive(name, value):
    value = float(value)
    if not value > 0 or not math.isfinite(value):
        raise RejectParam(f"{name} must be a positive finite number, got {value}")
    return value


def _nonneg(name, value):
    value = float(value)
    if value < 0 or not math.isfinite(value):
        raise RejectParam(f"{name} must be nonnegative, got {value}")
    return value


def make_model(spec, **params) -> LevyModel:
    """Validate a family tag plus parameter record and return a :class:`LevyModel`.

    Parameters
    ----------
    spec : str, Family or dict
        Family tag, or a dict with a ``family`` key and the parameters.
    **params
        Family parameters: ``sigma``, ``drift``, ``rate``, ``p``, ``alpha_plus``,
        ``alpha_minus`` (Kou), ``alpha`` (spectrally negative), or ``jumps`` (Custom).

    Raises
    ------
    RejectCompoundPoisson
        Zero Gaussian part, zero drift and finite jump activity.
    RejectParam
        Nonpositive rates, weights not summing to one, or template violations.
    """
    if isinstance(spec, dict):
        params = {**{k: v for k, v in spec.items() if k != "family"}, **params}
        spec = spec.get("family", "Custom")
    try:
        fam = Family(spec) if not isinstance(spec, Family) else spec
    except ValueError:
        raise RejectParam(f"unknown family tag {spec!r}") from None
    p = _canon(params)

    if fam == Family.BROWNIAN_STANDARD:
        model = LevyModel(1.0, 0.0, None, fam, ())
    elif fam == Family.BROWNIAN_DRIFT:
        if "drift" not in p:
            raise RejectParam("BrownianDrift needs a drift")
        sigma = _positive("sigma", p.get("sigma", 1.0))
        b = float(p["drift"])
        model = LevyModel(sigma, b, None, fam, (("drift", b), ("sigma", sigma)))
    elif fam == Family.KOU:
        sigma = _positive("sigma", p.get("sigma", 1.0))
        lam = _nonneg("rate", p.get("rate", 1.0))
        prob = float(p.get("p", 0.5))
        if not 0.0 <= prob <= 1.0:
            raise RejectParam(f"p must lie in [0, 1], got {prob}")
        ap = _positive("alpha_plus", p.get("alpha_plus", 2.0))
        am = _positive("alpha_minus", p.get("alpha_minus", 2.0))
        b = float(p.get("drift", 0.0))
        comps = tuple(c for c in (ExpComponent(prob, ap, +1), ExpComponent(1.0 - prob, am, -1)) if c.weight > 0)
        jumps = FiniteActivity(lam, comps) if lam > 0 else None
        model = LevyModel(sigma, b, jumps, fam, tuple(sorted(
            {"sigma": sigma, "drift": b, "rate": lam, "p": prob, "alpha_plus": ap, "alpha_minus": am}.items())))
    elif fam == Family.SPECTRALLY_NEGATIVE_EXP:
        sigma = _nonneg("sigma", p.get("sigma", 1.0))
        lam = _nonneg("rate", p.get("rate", 1.0))
        a = _positive("alpha", p.get("alpha", 1.0))
        b = float(p.get("drift", 0.0))
        jumps = FiniteActivity(lam, (ExpComponent(1.0, a, -1),)) if lam > 0 else None
        model = LevyModel(sigma, b, jumps, fam, tuple(sorted(
            {"sigma": sigma, "drift": b, "rate": lam, "alpha": a}.items())))
    else:
        sigma = _nonneg("sigma", p.get("sigma", 0.0))
        b = float(p.get("drift", 0.0))
        model = LevyModel(sigma, b, _parse_jumps(p.get("jumps")), Family.CUSTOM, ())
    _check_invariants(model)
    return model


def _parse_jumps(j):
    if j is None or isinstance(j, (FiniteActivity, TruncatedSpectral)):
        if isinstance(j, FiniteActivity):
            return _validate_finite(j)
        return j
    j = _canon(dict(j))
    if "components" in j:
        comps = []
        for c in j["components"]:
            if isinstance(c, ExpComponent):
                comps.append(c)
            else:
                comps.append(ExpComponent(float(c["weight"]), float(c["rate"]), int(c.get("sign", 1))))
        return _validate_finite(FiniteActivity(_nonneg("rate", j.get("rate", 1.0)), tuple(comps)))
    if "alpha" in j:
        alpha = float(j["alpha"])
        if not 0 < alpha < 2:
            raise RejectParam(f"stable-like index must lie in (0, 2), got {alpha}")
        sign = int(j.get("sign", 1))
        if sign not in (-1, 1):
            raise RejectParam("sign must be +1 or -1")
        return TruncatedSpectral(_positive("scale", j.get("scale", 1.0)), alpha,
                                 _nonneg("tempering", j.get("tempering", 0.0)), sign,
                                 _positive("epsilon", j.get("epsilon", 1e-3)))
    raise RejectParam("jump specification needs 'components' or a stable-like 'alpha'")


def _validate_finite(j: FiniteActivity) -> FiniteActivity:
    _nonneg("rate", j.rate)
    if not j.components:
        raise RejectParam("finite-activity jumps need at least one component")
    for c in j.components:
        _positive("component rate", c.rate)
        _nonneg("component weight", c.weight)
        if c.sign not in (-1, 1):
            raise RejectParam("component sign must be +1 or -1")
    total = sum(c.weight for c in j.components)
    if abs(total - 1.0) > 1e-9:
        raise RejectParam(f"mixture weights must sum to 1, got {total}")
    return j


def _check_invariants(model: LevyModel):
    finite = model.jumps is None or isinstance(model.jumps, FiniteActivity) or model.jumps.epsilon > 0
    if model.sigma == 0 and model.drift == 0 and finite:
        raise RejectCompoundPoisson("sigma = 0, drift = 0 and finite jump activity: pure compound Poisson")


def negate(model: LevyModel) -> LevyModel:
    """Model of the dual process ``-xi``: drift negated, jump law reflected, sigma unchanged."""
    j = model.jumps
    if isinstance(j, FiniteActivity):
        j = FiniteActivity(j.rate, tuple(ExpComponent(c.weight, c.rate, -c.sign) for c in j.components))
    elif isinstance(j, TruncatedSpectral):
        j = TruncatedSpectral(j.scale, j.alpha, j.tempering, -j.sign, j.epsilon)
    fam = model.family_tag
    pr = dict(model.params)
    if fam == Family.BROWNIAN_STANDARD:
        return model
    if fam == Family.BROWNIAN_DRIFT:
        pr["drift"] = -model.drift
    elif fam == Family.KOU:
        pr.update(drift=-model.drift, p=1.0 - pr["p"], alpha_plus=pr["alpha_minus"], alpha_minus=pr["alpha_plus"])
        comps = tuple(sorted(j.components, key=lambda c: -c.sign)) if j is not None else ()
        j = FiniteActivity(j.rate, comps) if j is not None else None
    elif fam == Family.SPECTRALLY_NEGATIVE_EXP:
        fam, pr = Family.CUSTOM, {}
    elif fam == Family.CUSTOM and isinstance(j, FiniteActivity) and len(j.components) == 1 \
            and j.components[0].sign < 0:
        fam = Family.SPECTRALLY_NEGATIVE_EXP
        pr = {"sigma": model.sigma, "drift": -model.drift, "rate": j.rate, "alpha": j.components[0].rate}
    return LevyModel(model.sigma, -model.drift, j, fam, tuple(sorted(pr.items())))


# ---------------------------------------------------------------------------
# analytic ingredients

def levy_tail(model: LevyModel, x):
    """Upper tail ``Pi((x, inf))`` of the Levy measure, for ``x > 0``."""
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)):
        raise DomainError("levy_tail needs x > 0")
    if model.jumps is None:
        out = np.zeros_like(xa)
    else:
        out = np.asarray(model.jumps.tail(xa, +1), dtype=float).reshape(xa.shape)
    return out if out.ndim else float(out)


def levy_tail_lower(model: LevyModel, x):
    """Lower tail ``Pi((-inf, -x))`` for ``x > 0``."""
    xa = np.asarray(x, dtype=float)
    if np.any(~(xa > 0)):
        raise DomainError("levy_tail_lower needs x > 0")
    if model.jumps is None:
        out = np.zeros_like(xa)
    else:
        out = np.asarray(model.jumps.tail(xa, -1), dtype=float).reshape(xa.shape)
    return out if out.ndim else float(out)


def jump_density(model: LevyModel, y):
    """Density of the Levy measure at signed jump size ``y``."""
    y = np.asarray(y, dtype=float)
    out = np.zeros_like(y)
    j = model.jumps
    if isinstance(j, FiniteActivity):
        for c in j.components:
            m = j.rate * c.weight
            side = (c.sign * y) > 0
            out = out + np.where(side, m * c.rate * np.exp(-c.rate * np.abs(y)), 0.0)
    elif isinstance(j, TruncatedSpectral):
        out = np.where(j.sign * y > 0, j.density(np.abs(y)), 0.0)
    return out


def mean_increment(model: LevyModel) -> float:
    """``E xi_1``; returns ``+inf``/``-inf`` when the jump part is not integrable."""
    if model.jumps is None:
        return float(model.drift)
    mj = model.jumps.mean_jump()
    if not math.isfinite(mj):
        return mj
    return float(model.drift + model.jumps.rate * mj)


def _mean_scale(model: LevyModel) -> float:
    s = abs(model.drift) + model.sigma
    if isinstance(model.jumps, FiniteActivity):
        s += sum(m / a for m, a in model.up_masses() + model.down_masses())
    return max(s, 1e-300)


def is_centered(model: LevyModel, rtol: float = 1e-12) -> bool:
    m = mean_increment(model)
    return math.isfinite(m) and abs(m) <= rtol * _mean_scale(model)


@dataclass(frozen=True)
class QuadConfig:
    """Settings for the ladder-mean integral test.

    ``x_max`` bounds the adaptive Simpson range; beyond it an analytic
    exponential tail bound must close the integral.
    """

    x_max: float = 50.0
    tol: float = 1e-10
    max_depth: int = 48
    max_evals: int = 200_000


def adaptive_simpson(f, a: float, b: float, tol: float, max_depth: int, max_evals: int):
    """Adaptive Simpson quadrature; returns ``(value, converged)``."""
    evals = [0]

    def simpson(fa, fm, fb, h):
        return h * (fa + 4.0 * fm + fb) / 6.0

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        evals[0] += 2
        left = simpson(fa, flm, fm, m - a)
        right = simpson(fm, frm, fb, b - m)
        delta = left + right - whole
        if abs(delta) <= 15.0 * tol:
            return left + right + delta / 15.0, True
        if depth <= 0 or evals[0] > max_evals:
            return left + right, False
        l_val, l_ok = rec(a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
        r_val, r_ok = rec(m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        return l_val + r_val, l_ok and r_ok

    fa, fm, fb = f(a), f(0.5 * (a + b)), f(b)
    evals[0] = 3
    return rec(a, b, fa, fm, fb, simpson(fa, fm, fb, b - a), tol, max_depth)


def _double_lower_tail(model: LevyModel, x: float) -> float:
    """``int_0^x dy int_y^inf Pi((-inf, -z)) dz``."""
    j = model.jumps
    if isinstance(j, FiniteActivity):
        return float(sum(m / a**2 * (1.0 - math.exp(-a * x)) for m, a in j.masses(-1)))
    if isinstance(j, TruncatedSpectral) and j.sign < 0:
        inner = lambda y: integrate.quad(lambda z: j._upper(z), y, np.inf, limit=200)[0]
        return float(integrate.quad(inner, 0.0, x, limit=100)[0])
    return 0.0


def ladder_mean_integral(model: LevyModel, cfg: QuadConfig = QuadConfig()):
    """Evaluate the centered-case ladder mean integral test.

    Returns
    -------
    (value, bound, converged) : tuple
        Simpson value on ``[1, x_max]``, analytic bound on the remainder and
        whether both are finite and converged. ``value`` is ``inf`` when the
        integrand is infinite (no negative jumps but positive jumps present).
    """
    if not model.has_positive_jumps:
        return 0.0, 0.0, True
    if not model.has_negative_jumps:
        return math.inf, math.inf, True
    j = model.jumps
    denom = lambda x: _double_lower_tail(model, x)
    if isinstance(j, FiniteActivity):
        def f(x):
            return x * float(j.tail(x, +1)) / denom(x)
    else:
        def f(x):
            return x * j._upper(x) / denom(x)
    val, ok = adaptive_simpson(f, 1.0, cfg.x_max, cfg.tol, cfg.max_depth, cfg.max_evals)
    X = cfg.x_max
    d_lo = denom(X)
    if isinstance(j, FiniteActivity):
        bound = sum(m * math.exp(-a * X) * (X / a + 1.0 / a**2) for m, a in j.masses(+1)) / d_lo
    elif isinstance(j, TruncatedSpectral) and j.tempering > 0:
        # Pi-bar(x) <= Pi-bar(X) exp(-tempering (x - X)) for x >= X
        b = j.tempering
        bound = j._upper(X) * (X / b + 1.0 / b**2) / d_lo
    else:
        bound = math.inf
    return val, bound, bool(ok and math.isfinite(bound))


def classify_ladder_mean(model: LevyModel, quad_cfg: QuadConfig = QuadConfig()) -> LadderClass:
    """Decide whether the ascending ladder height has finite mean.

    Raises
    ------
    UndeterminedClassification
        When the mean sign cannot be decided or the quadrature cannot bracket
        the integral within budget.
    """
    m = mean_increment(model)
    if math.isnan(m):
        raise UndeterminedClassification("mean increment undefined")
    if math.isinf(m):
        if m > 0 and not model.has_negative_jumps:
            return LadderClass.INFINITE
        raise UndeterminedClassification("jump part not integrable; ladder mean undetermined")
    if not is_centered(model):
        return LadderClass.FINITE if m > 0 else LadderClass.INFINITE
    val, bound, ok = ladder_mean_integral(model, quad_cfg)
    if math.isinf(val):
        return LadderClass.INFINITE
    if not ok:
        raise UndeterminedClassification(
            f"quadrature did not close: value {val:.6g}, tail bound {bound:.6g}")
    return LadderClass.FINITE


# ---------------------------------------------------------------------------
# Wiener-Hopf factorization for hyperexponential jumps

@dataclass(frozen=True)
class WienerHopf:
    """Rational ladder exponents ``kappa(0, l) = C * prod(l + root) / prod(l + pole)``.

    ``plus_roots`` / ``minus_roots`` include 0 when the corresponding ladder
    process is not killed.
    """

    plus_roots: tuple
    minus_roots: tuple
    up_poles: tuple
    down_poles: tuple
    c_plus: float
    c_minus: float
    mean: float

    def kappa_plus(self, lam):
        return _rational(lam, self.c_plus, self.plus_roots, self.up_poles)

    def kappa_minus(self, lam):
        return _rational(lam, self.c_minus, self.minus_roots, self.down_poles)

    @property
    def a_plus(self) -> float:
        return self.c_plus if len(self.plus_roots) == len(self.up_poles) + 1 else 0.0

    @property
    def a_minus(self) -> float:
        return self.c_minus if len(self.minus_roots) == len(self.down_poles) + 1 else 0.0


def _rational(lam, c, roots, poles):
    lam = np.asarray(lam, dtype=float)
    out = c * np.ones_like(lam)
    for r in roots:
        out = out * (lam + r)
    for p in poles:
        out = out / (lam + p)
    return out


def _merge(masses):
    acc = {}
    for m, a in masses:
        acc[a] = acc.get(a, 0.0) + m
    return sorted((m, a) for a, m in acc.items())


def wiener_hopf(model: LevyModel, split: str = "auto") -> WienerHopf:
    """Factorize ``-psi(theta) = kappa(0, -theta) * kappa_hat(0, theta)`` for hyperexponential jumps.

    The factorization fixes only the product of the two scale constants.
    ``split="auto"`` uses equal ladder drifts when ``sigma > 0`` and a unit
    mean ladder height otherwise.
    """
    if not model.is_hyperexponential:
        raise Unsupported("closed-form factorization needs hyperexponential jumps")
    up = _merge(model.up_masses())
    down = _merge(model.down_masses())
    b, s2 = model.drift, model.sigma**2
    den = npoly.polyfromroots([a for _, a in up] + [-a for _, a in down])
    # den = prod(theta - alpha_i) prod(theta + beta_j); sign-fix to prod(alpha_i - theta)
    den = den * (-1.0) ** len(up)
    total = sum(m for m, _ in up) + sum(m for m, _ in down)
    P = npoly.polymul([-total, b, 0.5 * s2], den)
    for m, a in up:
        rest = npoly.polyfromroots([x for _, x in up if x != a] + [-x for _, x in down]) * (-1.0) ** (len(up) - 1)
        P = npoly.polyadd(P, m * a * rest)
    for m, a in down:
        rest = npoly.polyfromroots([x for _, x in up] + [-x for _, x in down if x != a]) * (-1.0) ** len(up)
        P = npoly.polyadd(P, m * a * rest)
    P = np.array(P, dtype=float)
    mean = mean_increment(model)
    centered = is_centered(model)
    P[0] = 0.0
    P[1] = 0.0 if centered else mean * den[0]
    while len(P) > 1 and P[-1] == 0.0:
        P = P[:-1]
    m0 = 2 if centered else 1
    reduced = P[m0:]
    lc = reduced[-1]
    others = npoly.polyroots(reduced) if len(reduced) > 1 else np.array([])
    if np.any(np.abs(np.imag(others)) > 1e-7 * (1 + np.abs(others))):
        raise Unsupported("non-real Wiener-Hopf roots")
    others = np.sort(np.real(others))
    others = np.array([_newton_refine(model, r) for r in others])
    pos = [float(r) for r in others if r > 0]
    neg = [float(-r) for r in others if r < 0]
    if centered:
        plus, minus = [0.0] + pos, [0.0] + neg
    elif mean > 0:
        plus, minus = [0.0] + pos, neg
    else:
        plus, minus = pos, [0.0] + neg
    prod = -lc * (-1.0) ** len(plus)
    if not prod > 0:
        raise Unsupported(f"inconsistent factorization constant {prod}")
    up_poles = tuple(a for _, a in up)
    down_poles = tuple(a for _, a in down)
    if split == "auto":
        split = "symmetric" if model.sigma > 0 else "unit_mean"
    if split == "symmetric":
        cp = math.sqrt(prod)
    elif split == "unit_mean":
        if 0.0 not in plus:
            raise RefusesInfiniteMean("ascending ladder is killed; unit-mean split undefined")
        nz = [r for r in plus if r != 0.0]
        cp = float(np.prod(up_poles) / np.prod(nz)) if nz or up_poles else 1.0
    else:
        raise ValueError(f"unknown split {split!r}")
    return WienerHopf(tuple(plus), tuple(minus), up_poles, down_poles, cp, prod / cp, mean)


def _newton_refine(model: LevyModel, r: float, iters: int = 6) -> float:
    h = 1e-7 * max(1.0, abs(r))
    for _ in range(iters):
        f = float(model.laplace_exponent(r))
        if not math.isfinite(f):
            break
        d = (float(model.laplace_exponent(r + h)) - float(model.laplace_exponent(r - h))) / (2 * h)
        if d == 0 or not math.isfinite(d):
            break
        step = f / d
        if abs(step) > 1e-6 * max(1.0, abs(r)):
            break
        r -= step
    return r


def renewal_from_exponent(c: float, roots, poles) -> ExpLinear:
    """Renewal function whose Laplace-Stieltjes transform is ``1 / kappa`` with ``kappa`` rational."""
    roots = list(roots)
    nz = [r for r in roots if r != 0.0]
    if len(set(nz)) != len(nz):
        raise Unsupported("repeated ladder roots")
    N = npoly.polyfromroots([-p for p in poles]) if poles else np.array([1.0])
    Q = npoly.polyfromroots([-r for r in nz]) if nz else np.array([1.0])
    N0, Q0 = npoly.polyval(0.0, N), npoly.polyval(0.0, Q)
    if 0.0 in roots:
        dN, dQ = npoly.polyval(0.0, npoly.polyder(N)), npoly.polyval(0.0, npoly.polyder(Q))
        c1 = N0 / (c * Q0)
        c0 = (dN * Q0 - N0 * dQ) / (c * Q0**2)
    else:
        c1, c0 = 0.0, N0 / (c * Q0)
    coefs, rates = [], []
    full = npoly.polymul(Q, [0.0, 1.0])
    if 0.0 in roots:
        full = npoly.polymul(full, [0.0, 1.0])
    dfull = npoly.polyder(full)
    for r in nz:
        coefs.append(float(npoly.polyval(-r, N) / (c * npoly.polyval(-r, dfull))))
        rates.append(float(r))
    return ExpLinear(float(c0), float(c1), tuple(coefs), tuple(rates))


def _ladder_tail(wh: WienerHopf) -> ExpLinear:
    nz = [r for r in wh.plus_roots if r != 0.0]
    coefs = []
    for j, a in enumerate(wh.up_poles):
        num = wh.c_plus * np.prod([-a + r for r in nz]) if nz else wh.c_plus
        den = np.prod([-a + p for k, p in enumerate(wh.up_poles) if k != j]) if len(wh.up_poles) > 1 else 1.0
        coefs.append(float(num / den))
    return ExpLinear(0.0, 0.0, tuple(coefs), tuple(wh.up_poles))


def closed_form_ladder(model: LevyModel, split: str = "auto") -> LadderData:
    """Exact ladder data for the reference families.

    Raises
    ------
    Unsupported
        For ``Custom`` models.
    RefusesInfiniteMean
        When the ascending ladder height has infinite mean.
    """
    if model.family_tag == Family.CUSTOM:
        raise Unsupported("no closed form for Custom models; use estimate_ladder")
    return _closed_form(model, split)


def _closed_form(model: LevyModel, split: str = "auto") -> LadderData:
    if classify_ladder_mean(model) != LadderClass.FINITE:
        raise RefusesInfiniteMean("ascending ladder height has infinite mean")
    wh = wiener_hopf(model, split)
    U_plus = renewal_from_exponent(wh.c_plus, wh.plus_roots, wh.up_poles)
    U_minus = renewal_from_exponent(wh.c_minus, wh.minus_roots, wh.down_poles)
    tail = _ladder_tail(wh)
    nz = [r for r in wh.plus_roots if r != 0.0]
    EH = wh.c_plus * (np.prod(nz) if nz else 1.0) / (np.prod(wh.up_poles) if wh.up_poles else 1.0)
    meta = {"plus_roots": list(wh.plus_roots), "minus_roots": list(wh.minus_roots),
            "up_poles": list(wh.up_poles), "down_poles": list(wh.down_poles),
            "c_plus": wh.c_plus, "c_minus": wh.c_minus, "scale_product": wh.c_plus * wh.c_minus,
            "split": split}
    return LadderData(
        a_plus=float(wh.a_plus), a_minus=float(wh.a_minus),
        U_plus=U_plus, U_minus=U_minus, u_plus=U_plus.derivative(), mu_plus_tail=tail,
        EH=float(EH), source=LadderSource.CLOSED_FORM, u_minus=U_minus.derivative(), meta=meta,
    )


def rescale_ladder(ladder: LadderData, k: float) -> LadderData:
    """Move a factor ``k`` from the ascending to the descending side (``U_minus -> k U_minus``)."""
    Up, Um = ladder.U_plus, ladder.U_minus
    if isinstance(Up, ExpLinear):
        Up, Um, up = Up.scaled(1.0 / k), Um.scaled(k), ladder.u_plus.scaled(1.0 / k)
        um = ladder.u_minus.scaled(k) if ladder.u_minus is not None else None
        tail = ladder.mu_plus_tail.scaled(k)
    else:
        from .curves import TabulatedFunction as TF
        sc = lambda f, s: TF(f.grid, f.values * s, f.interpolation,
                             (f.tail_model[0], f.tail_model[1] * s, *f.tail_model[2:]) if f.tail_model else None)
        Up, Um, up = sc(Up, 1.0 / k), sc(Um, k), sc(ladder.u_plus, 1.0 / k)
        um = sc(ladder.u_minus, k) if ladder.u_minus is not None else None
        tail = sc(ladder.mu_plus_tail, k)
    return replace(ladder, a_plus=ladder.a_plus * k, a_minus=ladder.a_minus / k, U_plus=Up, U_minus=Um,
                   u_plus=up, u_minus=um, mu_plus_tail=tail, EH=ladder.EH * k)
