"""Ladder-height data container and its JSON round trip."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .curves import ExpLinear, TabulatedFunction, curve_from_dict


class LadderSource(str, Enum):
    CLOSED_FORM = "ClosedForm"
    MONTE_CARLO = "MonteCarloCalibrated"


@dataclass(frozen=True)
class LadderData:
    """Ascending and descending ladder quantities under a common normalization.

    The local-time normalization is fixed so that the killed potential factorizes
    exactly as the convolution of the two renewal measures.

    Attributes
    ----------
    a_plus, a_minus : float
        Drift coefficients of the ascending and descending ladder height subordinators.
    U_plus, U_minus : curve
        Renewal functions (``ExpLinear`` for closed forms, ``TabulatedFunction`` otherwise).
    u_plus : curve
        Density of ``U_plus``.
    mu_plus_tail : curve
        Tail of the Levy measure of the ascending ladder height process.
    EH : float
        Mean ascending ladder height per unit local time.
    source : LadderSource
    meta : dict
        Roots, scale constants, residuals and provenance.
    """

    a_plus: float
    a_minus: float
    U_plus: ExpLinear | TabulatedFunction
    U_minus: ExpLinear | TabulatedFunction
    u_plus: ExpLinear | TabulatedFunction
    mu_plus_tail: ExpLinear | TabulatedFunction
    EH: float
    source: LadderSource
    u_minus: ExpLinear | TabulatedFunction | None = None
    meta: dict = field(default_factory=dict)

    @property
    def is_closed_form(self) -> bool:
        return self.source == LadderSource.CLOSED_FORM

    def density_minus(self):
        return self.u_minus if self.u_minus is not None else self.U_minus.derivative()

    def to_dict(self) -> dict:
        return {
            "a_plus": self.a_plus, "a_minus": self.a_minus, "EH": self.EH,
            "source": self.source.value,
            "U_plus": self.U_plus.to_dict(), "U_minus": self.U_minus.to_dict(),
            "u_plus": self.u_plus.to_dict(), "mu_plus_tail": self.mu_plus_tail.to_dict(),
            "u_minus": self.u_minus.to_dict() if self.u_minus is not None else None,
            "meta": _jsonable(self.meta),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LadderData":
        return cls(
            a_plus=d["a_plus"], a_minus=d["a_minus"],
            U_plus=curve_from_dict(d["U_plus"]), U_minus=curve_from_dict(d["U_minus"]),
            u_plus=curve_from_dict(d["u_plus"]), mu_plus_tail=curve_from_dict(d["mu_plus_tail"]),
            EH=d["EH"], source=LadderSource(d["source"]),
            u_minus=curve_from_dict(d["u_minus"]) if d.get("u_minus") else None,
            meta=d.get("meta", {}),
        )

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "LadderData":
        s = str(text_or_path)
        if not s.lstrip().startswith("{"):
            with open(s, encoding="utf-8") as fh:
                s = fh.read()
        return cls.from_dict(json.loads(s))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Enum):
        return obj.value
    return obj
