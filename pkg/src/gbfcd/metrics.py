"""Confusion counts and the standard change detection scores.

Changed is the positive class. Missed alarms are normalized by the
reference changed count and false alarms by the reference unchanged count,
so MA = 0 exactly when recall = 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .raster_io import ChangeMask

CSV_COLUMNS = ("method", "ma_pct", "fa_pct", "precision", "recall", "kappa", "oe_pct")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    ma_pct: float
    fa_pct: float
    precision: float
    recall: float
    kappa: float
    oe_pct: float
    undefined: tuple[str, ...] = ()

    def as_dict(self) -> dict:
        d = {
            "ma_pct": self.ma_pct,
            "fa_pct": self.fa_pct,
            "precision": self.precision,
            "recall": self.recall,
            "kappa": self.kappa,
            "oe_pct": self.oe_pct,
        }
        if self.undefined:
            d["undefined"] = list(self.undefined)
        return d


def confusion(pred: ChangeMask, ref: ChangeMask) -> ConfusionCounts:
    """Exact TP/FP/FN/TN tallies; changed is positive."""
    if (pred.width, pred.height) != (ref.width, ref.height):
        raise ConfigError(
            f"mask size mismatch: {pred.width}x{pred.height} vs {ref.width}x{ref.height}"
        )
    p = pred.data
    r = ref.data
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & r)),
        fp=int(np.count_nonzero(p & ~r)),
        fn=int(np.count_nonzero(~p & r)),
        tn=int(np.count_nonzero(~p & ~r)),
    )


def report(c: ConfusionCounts) -> MetricsReport:
    """Derive MA/FA/P/R/kappa/OE; undefined ratios become NaN and are
    listed in the undefined field instead of raising."""
    n = c.total
    if n <= 0:
        raise ConfigError("empty confusion counts")
    undefined = []

    def ratio(num, den, name):
        if den == 0:
            undefined.append(name)
            return math.nan
        return num / den

    ma = 100.0 * ratio(c.fn, c.tp + c.fn, "ma_pct")
    fa = 100.0 * ratio(c.fp, c.fp + c.tn, "fa_pct")
    precision = ratio(c.tp, c.tp + c.fp, "precision")
    recall = ratio(c.tp, c.tp + c.fn, "recall")
    oe = 100.0 * (c.fp + c.fn) / n
    p_o = (c.tp + c.tn) / n
    p_e = ((c.tp + c.fp) * (c.tp + c.fn) + (c.fn + c.tn) * (c.fp + c.tn)) / (n * n)
    if p_e == 1.0:
        undefined.append("kappa")
        kappa = math.nan
    else:
        kappa = (p_o - p_e) / (1.0 - p_e)
    return MetricsReport(
        ma_pct=ma,
        fa_pct=fa,
        precision=precision,
        recall=recall,
        kappa=kappa,
        oe_pct=oe,
        undefined=tuple(undefined),
    )


def metrics_csv(rows: list[tuple[str, MetricsReport]]) -> str:
    """CSV text with the fixed column order, one row per scored method."""
    lines = [",".join(CSV_COLUMNS)]
    for method, rep in rows:
        d = rep.as_dict()
        lines.append(
            ",".join([method] + [repr(float(d[k])) for k in CSV_COLUMNS[1:]])
        )
    return "\n".join(lines) + "\n"


def metrics_json(rows: list[tuple[str, MetricsReport]]) -> str:
    return json.dumps({method: rep.as_dict() for method, rep in rows}, indent=2) + "\n"
