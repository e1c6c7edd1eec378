"""Forecast error metrics in percent, plus wall-clock timing.

Sign convention for MPE: positive means the model under-predicted on net.
"""

from __future__ import annotations

import json
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from typing import Callable, Iterator

import numpy as np

from loadcast.ingest import day_of_week

DAY_NAMES = ("sun", "mon", "tue", "wed", "thu", "fri", "sat")


def _check(actual, predicted) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(actual, dtype=float)
    yhat = np.asarray(predicted, dtype=float)
    if y.shape != yhat.shape:
        raise ValueError(f"length mismatch: {y.shape} actual vs {yhat.shape} predicted")
    if y.ndim != 1 or len(y) == 0:
        raise ValueError("need one or more points")
    bad = np.flatnonzero(~(y > 0))
    if len(bad):
        raise ValueError(f"actual value at index {bad[0]} is not positive ({y[bad[0]]})")
    return y, yhat


def mape(actual, predicted) -> float:
    y, yhat = _check(actual, predicted)
    return float(100.0 * np.mean(np.abs(y - yhat) / y))


def mpe(actual, predicted) -> float:
    y, yhat = _check(actual, predicted)
    return float(100.0 * np.mean((y - yhat) / y))


def daily_mape(actual, predicted, timestamps) -> list[float | None]:
    """Pooled MAPE per weekday, Sunday first.

    A weekday with no points yields ``None`` rather than zero.
    """
    y, yhat = _check(actual, predicted)
    if len(timestamps) != len(y):
        raise ValueError(f"length mismatch: {len(timestamps)} timestamps vs {len(y)} points")
    dow = day_of_week(np.asarray(timestamps, dtype="datetime64[h]"))
    out: list[float | None] = []
    for d in range(7):
        mask = dow == d
        out.append(mape(y[mask], yhat[mask]) if mask.any() else None)
    return out


@dataclass(frozen=True)
class MetricsReport:
    model: str
    mape: float
    mpe: float
    daily_mape: tuple[float | None, ...]
    train_seconds: float
    n_test: int

    CSV_HEADER = ("model", "mape", "mpe") + DAY_NAMES + ("train_s", "n_test")

    @classmethod
    def from_predictions(cls, model, actual, predicted, timestamps, train_seconds) -> "MetricsReport":
        return cls(
            model=model,
            mape=mape(actual, predicted),
            mpe=mpe(actual, predicted),
            daily_mape=tuple(daily_mape(actual, predicted, timestamps)),
            train_seconds=float(train_seconds),
            n_test=len(actual),
        )

    def csv_row(self) -> str:
        days = ["" if v is None else repr(v) for v in self.daily_mape]
        return ",".join([self.model, repr(self.mape), repr(self.mpe), *days, repr(self.train_seconds), str(self.n_test)])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["daily_mape"] = list(self.daily_mape)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        return cls(
            model=d["model"],
            mape=d["mape"],
            mpe=d["mpe"],
            daily_mape=tuple(d["daily_mape"]),
            train_seconds=d["train_seconds"],
            n_test=d["n_test"],
        )


class Stopwatch:
    """Monotonic wall-clock timer usable as a context manager."""

    def __init__(self):
        self.start: float | None = None
        self.seconds: float = 0.0

    def __enter__(self) -> "Stopwatch":
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc) -> None:
        self.seconds = time.perf_counter() - self.start

    def elapsed(self) -> float:
        return time.perf_counter() - self.start


@contextmanager
def timed() -> Iterator[Stopwatch]:
    with Stopwatch() as sw:
        yield sw


def time_block(action: Callable, *args, **kwargs):
    """Run ``action`` and return ``(result, wall_seconds)``."""
    t0 = time.perf_counter()
    result = action(*args, **kwargs)
    return result, time.perf_counter() - t0
