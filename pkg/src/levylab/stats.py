"""Distribution distances and dependence tests used by every check."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sst

from .errors import EmptySample


@dataclass(frozen=True)
class KSResult:
    statistic: float
    pvalue: float
    n: int
    m: int | None = None


def _clean(a, name="sample"):
    a = np.asarray(a, dtype=float).ravel()
    if a.size == 0:
        raise EmptySample(f"{name} is empty")
    return a


def _weighted_ecdf_gap(a, wa, b, wb):
    pts = np.concatenate([a, b])
    oa, ob = np.argsort(a), np.argsort(b)
    ca = np.concatenate([[0.0], np.cumsum(wa[oa])]) / wa.sum()
    cb = np.concatenate([[0.0], np.cumsum(wb[ob])]) / wb.sum()
    fa = ca[np.searchsorted(a[oa], pts, side="right")]
    fb = cb[np.searchsorted(b[ob], pts, side="right")]
    return float(np.max(np.abs(fa - fb)))


def ks_distance(sample_a, sample_b=None, *, cdf=None, cdf_left=None, weights_a=None, weights_b=None,
                n_perm: int = 200, seed: int = 0) -> KSResult:
    """Kolmogorov-Smirnov distance, one-sample (``cdf``) or two-sample (``sample_b``).

    ``cdf`` may have atoms; ``cdf_left`` (the left limit ``F(x-)``) is then used
    so the statistic is the exact supremum. Unweighted p-values use the exact or
    asymptotic null law; weighted samples get a permutation p-value.

    Raises
    ------
    EmptySample
    """
    a = _clean(sample_a, "sample_a")
    if sample_b is None and cdf is None:
        raise ValueError("need sample_b or cdf")
    if sample_b is None:
        xs = np.sort(a) if weights_a is None else a[np.argsort(a)]
        n = xs.size
        if weights_a is None:
            w = np.full(n, 1.0 / n)
        else:
            w = np.asarray(weights_a, float)[np.argsort(a)]
            w = w / w.sum()
        hi = np.cumsum(w)
        lo = hi - w
        # ties: the empirical cdf only jumps at the last copy
        last = np.r_[xs[1:] != xs[:-1], True]
        first = np.r_[True, xs[1:] != xs[:-1]]
        F = np.asarray(cdf(xs), float)
        Fl = np.asarray(cdf_left(xs), float) if cdf_left is not None else F
        d = max(np.max(np.abs(hi[last] - F[last])), np.max(np.abs(lo[first] - Fl[first])))
        if weights_a is None:
            # conservative when the oracle has atoms
            return KSResult(float(d), float(sst.kstwo.sf(d, n)), n)
        ess = 1.0 / np.sum(w**2)
        return KSResult(float(d), float(sst.kstwo.sf(d, max(int(ess), 1))), n)
    b = _clean(sample_b, "sample_b")
    if weights_a is None and weights_b is None:
        r = sst.ks_2samp(a, b, method="asymp")
        return KSResult(float(r.statistic), float(r.pvalue), a.size, b.size)
    wa = np.ones(a.size) if weights_a is None else np.asarray(weights_a, float)
    wb = np.ones(b.size) if weights_b is None else np.asarray(weights_b, float)
    d = _weighted_ecdf_gap(a, wa, b, wb)
    rng = np.random.default_rng(seed)
    pool, wpool = np.concatenate([a, b]), np.concatenate([wa / wa.sum() * a.size, wb / wb.sum() * b.size])
    hits = 0
    for _ in range(n_perm):
        idx = rng.permutation(pool.size)
        ia, ib = idx[: a.size], idx[a.size:]
        if _weighted_ecdf_gap(pool[ia], wpool[ia], pool[ib], wpool[ib]) >= d:
            hits += 1
    return KSResult(d, (hits + 1) / (n_perm + 1), a.size, b.size)


def ks_censored(a, b, cap: float) -> KSResult:
    """Two-sample KS of ``min(X, cap)`` samples; equals the sup-gap of the cdfs on ``[0, cap)``."""
    return ks_distance(np.minimum(a, cap), np.minimum(b, cap))


def w1_distance(sample_a, sample_b, weights_a=None, weights_b=None) -> float:
    """Empirical 1-Wasserstein distance (quantile coupling)."""
    a, b = _clean(sample_a, "sample_a"), _clean(sample_b, "sample_b")
    return float(sst.wasserstein_distance(a, b, weights_a, weights_b))


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, float)
    s = w.sum()
    return float(s * s / np.sum(w * w)) if s > 0 else 0.0


def _centered_distances(x):
    d = np.abs(x[:, None] - x[None, :])
    return d - d.mean(0)[None, :] - d.mean(1)[:, None] + d.mean()


def distance_correlation(x, y) -> float:
    x, y = _clean(x, "x"), _clean(y, "y")
    A, B = _centered_distances(x), _centered_distances(y)
    dxy, dxx, dyy = (A * B).mean(), (A * A).mean(), (B * B).mean()
    if dxx <= 0 or dyy <= 0:
        return 0.0
    return float(math.sqrt(max(dxy, 0.0) / math.sqrt(dxx * dyy)))


def dcor_permutation_test(x, y, n_perm: int = 199, seed: int = 0):
    """Distance-correlation independence test; returns ``(dcor, pvalue)``."""
    x, y = _clean(x, "x"), _clean(y, "y")
    A, B = _centered_distances(x), _centered_distances(y)
    stat = (A * B).mean()
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_perm):
        p = rng.permutation(y.size)
        if (A * B[np.ix_(p, p)]).mean() >= stat:
            hits += 1
    return distance_correlation(x, y), (hits + 1) / (n_perm + 1)


def log_survival_fit(counts):
    """Linear fit of ``log P(N > k)`` against ``k`` for integer counts; returns ``(slope, r2, ks)``.

    Levels with fewer than 20 survivors are dropped.
    """
    counts = np.asarray(counts, dtype=int)
    ks = np.arange(1, counts.max() + 1)
    surv = np.array([(counts > k).mean() for k in ks])
    keep = surv * counts.size >= 20
    ks, surv = ks[keep], surv[keep]
    if ks.size < 3:
        return math.nan, math.nan, ks
    fit = sst.linregress(ks, np.log(surv))
    return float(fit.slope), float(fit.rvalue**2), ks


def fd_bin_width(x) -> float:
    """Freedman-Diaconis histogram bin width."""
    x = _clean(x)
    q75, q25 = np.percentile(x, [75, 25])
    return float(2 * (q75 - q25) / x.size ** (1 / 3)) if q75 > q25 else 1.0


def mean_and_se(x, weights=None):
    x = _clean(x)
    if weights is None:
        return float(np.mean(x)), float(np.std(x, ddof=1) / math.sqrt(x.size))
    w = np.asarray(weights, float)
    m = float(np.sum(w * x) / w.sum())
    ess = effective_sample_size(w)
    var = float(np.sum(w * (x - m) ** 2) / w.sum())
    return m, math.sqrt(var / ess)
