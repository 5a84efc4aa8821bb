"""Flow-prediction evaluation: RMSE, MAE, and Common Part of Commuters.

All three operate on OD-pair keyed maps. CPC measures overlap,
2 * sum(min(pred, truth)) / (sum(pred) + sum(truth)): 1 when the two maps are
identical, 0 when they agree nowhere.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import BothTotalsZero, EmptyInput, KeyMismatch

FlowMap = Mapping[tuple[str, str], float]


def _aligned(pred: FlowMap, truth: FlowMap, assume_zero: bool) -> tuple[np.ndarray, np.ndarray]:
    if not truth and not pred:
        raise EmptyInput("no pairs to evaluate")
    missing = set(truth) - set(pred)
    extra = set(pred) - set(truth)
    if extra:
        raise KeyMismatch(f"{len(extra)} predicted pair(s) absent from ground truth, "
                          f"e.g. {sorted(extra)[0]}")
    if missing and not assume_zero:
        raise KeyMismatch(f"{len(missing)} pair(s) lack predictions, "
                          f"e.g. {sorted(missing)[0]}; pass assume_zero to fill with 0")
    keys = sorted(truth)
    p = np.array([pred.get(k, 0.0) for k in keys], dtype=float)
    t = np.array([truth[k] for k in keys], dtype=float)
    return p, t


def rmse(pred: FlowMap, truth: FlowMap, assume_zero: bool = False) -> float:
    """Root mean squared error over all pairs."""
    p, t = _aligned(pred, truth, assume_zero)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def mae(pred: FlowMap, truth: FlowMap, assume_zero: bool = False) -> float:
    """Mean absolute error over all pairs."""
    p, t = _aligned(pred, truth, assume_zero)
    return float(np.mean(np.abs(p - t)))


def cpc(pred: FlowMap, truth: FlowMap, assume_zero: bool = False) -> float:
    """Common Part of Commuters; undefined (raises) when both totals are 0."""
    p, t = _aligned(pred, truth, assume_zero)
    denom = p.sum() + t.sum()
    if denom == 0.0:
        raise BothTotalsZero("CPC undefined: predictions and truth both sum to 0")
    return float(2.0 * np.minimum(p, t).sum() / denom)


@dataclass(frozen=True)
class EvalReport:
    rmse: float
    mae: float
    cpc: float
    n_pairs: int
    split: str

    def __post_init__(self):
        if not (self.rmse >= self.mae >= 0.0):
            raise ValueError("expected rmse >= mae >= 0")
        if not 0.0 <= self.cpc <= 1.0:
            raise ValueError("cpc must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {"split": self.split, "rmse": self.rmse, "mae": self.mae,
                "cpc": self.cpc, "n_pairs": self.n_pairs}

    def machine_line(self) -> str:
        return json.dumps(self.to_dict())

    def table(self, label: str | None = None) -> str:
        """Human-readable table: label, RMSE, MAE, CPC (higher is better)."""
        name = label or self.split
        width = max(len(name), len("City/split"))
        lines = [
            f"{'City/split':<{width}}  {'RMSE':>8}  {'MAE':>8}  {'CPC*':>8}",
            f"{name:<{width}}  {self.rmse:>8.2f}  {self.mae:>8.2f}  {self.cpc:>8.2f}",
            "* Higher is better",
        ]
        return "\n".join(lines)


def evaluate(pred: FlowMap, truth: FlowMap, split: str,
             assume_zero: bool = False) -> EvalReport:
    return EvalReport(
        rmse=rmse(pred, truth, assume_zero),
        mae=mae(pred, truth, assume_zero),
        cpc=cpc(pred, truth, assume_zero),
        n_pairs=len(truth),
        split=split,
    )
