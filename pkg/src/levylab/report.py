"""Check results: named statistics with explicit thresholds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass
class Statistic:
    """One scored number.

    ``rule`` is ``"<="`` (value at most threshold), ``">="``, ``"in"`` (threshold
    is a ``(lo, hi)`` pair) or ``"info"`` (reported, not scored).
    """

    name: str
    value: float
    threshold: float | tuple | None = None
    rule: str = "<="
    stderr: float | None = None
    pvalue: float | None = None

    @property
    def passed(self) -> bool | None:
        if self.rule == "info" or self.threshold is None:
            return None
        v = self.value
        if isinstance(v, bool):
            return v == bool(self.threshold)
        if v is None or (isinstance(v, float) and math.isnan(v)):
            return False
        if self.rule == "<=":
            return v <= self.threshold
        if self.rule == ">=":
            return v >= self.threshold
        if self.rule == "<":
            return v < self.threshold
        if self.rule == ">":
            return v > self.threshold
        if self.rule == "in":
            lo, hi = self.threshold
            return lo <= v <= hi
        if self.rule == "==":
            return v == self.threshold
        raise ValueError(f"unknown rule {self.rule!r}")

    def to_dict(self) -> dict:
        thr = list(self.threshold) if isinstance(self.threshold, tuple) else self.threshold
        return {"name": self.name, "value": _num(self.value), "stderr": _num(self.stderr),
                "pvalue": _num(self.pvalue), "threshold": thr, "rule": self.rule, "pass": self.passed}


def _num(v):
    if v is None or isinstance(v, bool):
        return v
    v = float(v)
    return v if math.isfinite(v) else repr(v)


@dataclass
class CheckReport:
    """Outcome of one verification routine."""

    name: str
    statistics: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)
    n: int = 0
    seed: int = 0

    def add(self, name, value, threshold=None, rule="<=", stderr=None, pvalue=None) -> Statistic:
        if threshold is None and rule != "info":
            rule = "info"
        st = Statistic(name, value, threshold, rule, stderr, pvalue)
        self.statistics.append(st)
        return st

    def info(self, name, value, stderr=None):
        return self.add(name, value, None, "info", stderr)

    def __getitem__(self, name) -> Statistic:
        for st in self.statistics:
            if st.name == name:
                return st
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        return all(st.passed is not False for st in self.statistics)

    def merge(self, other: "CheckReport", prefix: str = "") -> "CheckReport":
        for st in other.statistics:
            self.statistics.append(Statistic(prefix + st.name, st.value, st.threshold, st.rule, st.stderr, st.pvalue))
        self.flags.update({prefix + k: v for k, v in other.flags.items()})
        self.details.update({prefix + k: v for k, v in other.details.items()})
        self.n += other.n
        return self
