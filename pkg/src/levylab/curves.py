"""Function carriers for renewal functions, densities and tails on [0, inf)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ExpLinear:
    """Closed-form curve ``c0 + c1*x + sum_k d_k exp(-g_k x)`` on ``x >= 0``.

    Evaluates to 0 for ``x < 0`` so that renewal functions vanish on the
    negative half-line. Every closed-form ladder quantity of a model with
    hyperexponential jumps has this shape.
    """

    c0: float = 0.0
    c1: float = 0.0
    coefs: tuple = ()
    rates: tuple = ()

    def __post_init__(self):
        if len(self.coefs) != len(self.rates):
            raise ValueError("coefs and rates must have equal length")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        xp = np.maximum(x, 0.0)
        out = self.c0 + self.c1 * xp
        for d, g in zip(self.coefs, self.rates):
            out = out + d * np.exp(-g * xp)
        out = np.where(x < 0.0, 0.0, out)
        return out if out.ndim else float(out)

    def derivative(self) -> "ExpLinear":
        return ExpLinear(
            self.c1, 0.0,
            tuple(-d * g for d, g in zip(self.coefs, self.rates)),
            tuple(self.rates),
        )

    def antiderivative(self) -> "ExpLinear":
        """Primitive vanishing at 0 (only for curves with ``c1 == 0`` the result stays ExpLinear)."""
        if self.c1 != 0.0:
            raise ValueError("quadratic term not representable")
        coefs = tuple(-d / g for d, g in zip(self.coefs, self.rates))
        return ExpLinear(-sum(coefs), self.c0, coefs, tuple(self.rates))

    @property
    def value_at_zero(self) -> float:
        return float(self.c0 + sum(self.coefs))

    def tabulate(self, grid) -> "TabulatedFunction":
        grid = np.asarray(grid, dtype=float)
        tail = ("linear", float(self.derivative()(grid[-1])))
        return TabulatedFunction(grid, self(grid), "linear", tail)

    def scaled(self, k: float) -> "ExpLinear":
        return ExpLinear(k * self.c0, k * self.c1, tuple(k * d for d in self.coefs), tuple(self.rates))

    def to_dict(self) -> dict:
        return {"kind": "explinear", "c0": self.c0, "c1": self.c1,
                "coefs": list(self.coefs), "rates": list(self.rates)}


@dataclass(frozen=True)
class TabulatedFunction:
    """Tabulated curve on a strictly increasing grid.

    Parameters
    ----------
    grid, values : array_like
        Abscissae and ordinates, same length.
    interpolation : {"linear", "step"}
        Linear interpolation, or right-continuous step function.
    tail_model : tuple, optional
        Extrapolation past the last grid point: ``("exp", coef, rate)`` for
        ``coef * exp(-rate * x)``, or ``("linear", slope)`` continuing from the
        last value. Without a tail model the last value is held.
    """

    grid: np.ndarray
    values: np.ndarray
    interpolation: str = "linear"
    tail_model: tuple | None = None
    monotone: str | None = None
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)
        if g.shape != v.shape or g.ndim != 1:
            raise ValueError("grid and values must be 1-D arrays of equal length")
        if np.any(np.diff(g) <= 0):
            raise ValueError("grid must be strictly increasing")
        if self.interpolation not in ("linear", "step"):
            raise ValueError("interpolation must be 'linear' or 'step'")
        if self.monotone == "nondecreasing" and np.any(np.diff(v) < -1e-12 * max(1.0, np.abs(v).max())):
            raise ValueError("values declared nondecreasing are not")
        if self.monotone == "nonincreasing" and np.any(np.diff(v) > 1e-12 * max(1.0, np.abs(v).max())):
            raise ValueError("values declared nonincreasing are not")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        g, v = self.grid, self.values
        if self.interpolation == "linear":
            out = np.interp(x, g, v)
        else:
            idx = np.searchsorted(g, x, side="right") - 1
            out = v[np.clip(idx, 0, len(v) - 1)]
        hi = x > g[-1]
        if np.any(hi) and self.tail_model is not None:
            kind = self.tail_model[0]
            if kind == "exp":
                _, c, r = self.tail_model
                out = np.where(hi, c * np.exp(-r * x), out)
            elif kind == "linear":
                out = np.where(hi, v[-1] + self.tail_model[1] * (x - g[-1]), out)
        out = np.where(x < 0.0, 0.0, out)
        return out if out.ndim else float(out)

    def derivative(self) -> "TabulatedFunction":
        d = np.gradient(self.values, self.grid)
        return TabulatedFunction(self.grid, d, "linear", None)

    @property
    def value_at_zero(self) -> float:
        return float(self(0.0))

    def tabulate(self, grid) -> "TabulatedFunction":
        grid = np.asarray(grid, dtype=float)
        return TabulatedFunction(grid, self(grid), self.interpolation, self.tail_model)

    def is_subadditive(self, tol: float = 1e-9) -> bool:
        """Check ``f(x+y) <= f(x) + f(y)`` over pairs of grid points."""
        g = self.grid
        x = g[:, None] + g[None, :]
        lhs = self(x)
        rhs = self.values[:, None] + self.values[None, :]
        scale = max(1.0, float(np.abs(self.values).max()))
        return bool(np.all(lhs <= rhs + tol * scale))

    def to_dict(self) -> dict:
        return {"kind": "tabulated", "grid": self.grid.tolist(), "values": self.values.tolist(),
                "interpolation": self.interpolation,
                "tail_model": list(self.tail_model) if self.tail_model else None}


def curve_from_dict(d: dict):
    if d["kind"] == "explinear":
        return ExpLinear(d["c0"], d["c1"], tuple(d["coefs"]), tuple(d["rates"]))
    tail = tuple(d["tail_model"]) if d.get("tail_model") else None
    return TabulatedFunction(np.asarray(d["grid"]), np.asarray(d["values"]), d["interpolation"], tail)
