"""Forecast-driven dynamic tariffs and the cost of mis-forecast generation.

The tariff is a linear function of the forecast's relative deviation from its
own trailing mean, clamped to ``[floor_price, cap_price]``:

    price_t = clamp(base * (1 + sensitivity * (L_t - Lbar_t) / Lbar_t))

``Lbar_t`` averages the forecast over the ``reference_window`` hours ending at
``t`` (fewer at the start of the horizon). Setting ``sensitivity = 0`` gives a
flat tariff.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from loadcast._io import atomic_write_text


@dataclass(frozen=True)
class PricingPolicy:
    base_price: float = 0.10
    sensitivity: float = 1.0
    floor_price: float = 0.05
    cap_price: float = 0.30
    reference_window: int = 24
    peak_threshold: float = 0.20

    def __post_init__(self):
        if not self.floor_price <= self.base_price <= self.cap_price:
            raise ValueError("need floor_price <= base_price <= cap_price")
        if self.sensitivity < 0:
            raise ValueError("sensitivity must be >= 0")
        if self.reference_window < 1:
            raise ValueError("reference_window must be >= 1")

    @classmethod
    def from_json(cls, path: str | Path) -> "PricingPolicy":
        data = json.loads(Path(path).read_text())
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown policy fields: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PriceSchedule:
    prices: np.ndarray
    peak: np.ndarray
    reference: np.ndarray
    timestamps: np.ndarray | None = None

    def to_csv(self) -> str:
        lines = ["timestamp,price,peak"]
        ts = self.timestamps if self.timestamps is not None else range(len(self.prices))
        for t, p, k in zip(ts, self.prices, self.peak):
            stamp = str(np.datetime64(t, "s")) if self.timestamps is not None else str(t)
            lines.append(f"{stamp},{float(p)!r},{int(k)}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str | Path) -> None:
        atomic_write_text(path, self.to_csv())


def trailing_mean(x: np.ndarray, window: int) -> np.ndarray:
    """Mean of ``x[max(0, t-window+1) .. t]`` for every ``t``."""
    csum = np.concatenate(([0.0], np.cumsum(x)))
    t = np.arange(len(x))
    lo = np.maximum(0, t - window + 1)
    return (csum[t + 1] - csum[lo]) / (t + 1 - lo)


def price_schedule(forecast, policy: PricingPolicy, timestamps=None) -> PriceSchedule:
    load = np.asarray(forecast, dtype=float)
    if load.ndim != 1 or len(load) == 0:
        raise ValueError("forecast must be a non-empty 1-D series")
    bad = np.flatnonzero(~(load > 0))
    if len(bad):
        raise ValueError(f"forecast value at index {bad[0]} is not positive ({load[bad[0]]})")
    ref = trailing_mean(load, policy.reference_window)
    rel = (load - ref) / ref
    prices = np.clip(policy.base_price * (1.0 + policy.sensitivity * rel), policy.floor_price, policy.cap_price)
    peak = load >= (1.0 + policy.peak_threshold) * ref
    return PriceSchedule(prices, peak, ref, None if timestamps is None else np.asarray(timestamps))


def generation_cost_gap(actual, predicted, over_cost: float, under_cost: float) -> float:
    """Asymmetric cost of generating to the forecast instead of the actual load.

    Over-forecast kWh cost ``over_cost`` each (wasted generation), under-forecast
    kWh cost ``under_cost`` each (shortfall).
    """
    y = np.asarray(actual, dtype=float)
    yhat = np.asarray(predicted, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.shape} actual vs {yhat.shape} predicted")
    if over_cost < 0 or under_cost < 0:
        raise ValueError("costs must be >= 0")
    over = np.maximum(yhat - y, 0.0)
    under = np.maximum(y - yhat, 0.0)
    return float(over_cost * over.sum() + under_cost * under.sum())
