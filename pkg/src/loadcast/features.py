"""Lag/calendar feature rows, standardization and chronological splits."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from loadcast._io import atomic_write_text
from loadcast.ingest import MIN_SERIES_LENGTH, LoadSeries, day_of_week

# (name, hours back) for the single-hour load lags
LOAD_LAGS = (
    ("lag_1h", 1),
    ("lag_2h", 2),
    ("lag_3h", 3),
    ("lag_1d_0h", 24),
    ("lag_1d_1h", 25),
    ("lag_1d_2h", 26),
    ("lag_2d_0h", 48),
    ("lag_2d_1h", 49),
    ("lag_2d_2h", 50),
    ("lag_7d_0h", 168),
)
LOAD_FEATURES = tuple(name for name, _ in LOAD_LAGS) + ("avg_24h", "avg_7d")
EXOGENOUS_FEATURES = ("day_of_week", "hour_of_day", "is_weekend", "is_holiday", "temperature", "humidity")
FEATURE_NAMES = LOAD_FEATURES + EXOGENOUS_FEATURES
N_FEATURES = len(FEATURE_NAMES)
BURN_IN = 168

CATEGORICAL_FEATURES = frozenset({"day_of_week", "hour_of_day", "is_weekend", "is_holiday"})

COL = {name: i for i, name in enumerate(FEATURE_NAMES)}


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature rows ``X`` (n x 18), targets ``y`` (kW) and aligned timestamps."""

    X: np.ndarray
    y: np.ndarray
    timestamps: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self):
        if self.X.ndim != 2 or self.X.shape[1] != len(self.feature_names):
            raise ValueError(f"X has shape {self.X.shape}, expected (n, {len(self.feature_names)})")
        if not len(self.X) == len(self.y) == len(self.timestamps):
            raise ValueError("X, y and timestamps must have the same length")

    def __len__(self) -> int:
        return len(self.y)

    def __getitem__(self, key: slice) -> "FeatureMatrix":
        if not isinstance(key, slice):
            raise TypeError("FeatureMatrix only supports slicing; use .row(i) for a single row")
        return replace(self, X=self.X[key], y=self.y[key], timestamps=self.timestamps[key])

    def row(self, i: int) -> dict[str, float]:
        out = dict(zip(self.feature_names, map(float, self.X[i])))
        out["target"] = float(self.y[i])
        return out

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.feature_names.index(name)]

    @property
    def day_of_week(self) -> np.ndarray:
        return day_of_week(self.timestamps)

    def to_csv(self) -> str:
        lines = [",".join(("timestamp",) + self.feature_names + ("target",))]
        for ts, x, y in zip(self.timestamps, self.X, self.y):
            vals = ",".join(repr(float(v)) for v in x)
            lines.append(f"{np.datetime64(ts, 's')},{vals},{float(y)!r}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str | Path) -> None:
        atomic_write_text(path, self.to_csv())


def extract_features(s: LoadSeries) -> FeatureMatrix:
    """Build one row per target hour ``t >= 168``.

    Row ``t`` holds load lags at 1, 2, 3, 24, 25, 26, 48, 49, 50 and 168 hours,
    the mean of the 24 and the 168 loads preceding ``t`` (both exclusive of
    ``t``), then day of week (Sunday = 0), hour, weekend flag, holiday flag,
    temperature and humidity at ``t``. The target is ``load[t]``.
    """
    n = len(s)
    if n < MIN_SERIES_LENGTH:
        raise ValueError(f"series has {n} hours; need at least {MIN_SERIES_LENGTH}")
    load = np.asarray(s.load, dtype=float)
    t = np.arange(BURN_IN, n)
    cols = [load[t - lag] for _, lag in LOAD_LAGS]

    # explicit windows rather than cumsum differences: no cancellation error
    win24 = np.lib.stride_tricks.sliding_window_view(load[:-1], 24)[BURN_IN - 24 :]
    win168 = np.lib.stride_tricks.sliding_window_view(load[:-1], 168)
    cols.append(win24.mean(axis=1))
    cols.append(win168.mean(axis=1))

    ts = s.timestamps[t]
    dow = day_of_week(ts)
    hour = (ts - ts.astype("datetime64[D]")).astype(int)
    cols.append(dow.astype(float))
    cols.append(hour.astype(float))
    cols.append(((dow == 0) | (dow == 6)).astype(float))
    cols.append(np.asarray(s.is_holiday, dtype=float)[t])
    cols.append(np.asarray(s.temperature, dtype=float)[t])
    cols.append(np.asarray(s.humidity, dtype=float)[t])

    X = np.column_stack(cols)
    return FeatureMatrix(X=X, y=load[t].copy(), timestamps=np.array(ts))


# --------------------------------------------------------------------------
# scaling


class ScalerError(ValueError):
    pass


@dataclass(frozen=True)
class Scaler:
    """Per-column mean/std (population convention), optionally for the target too.

    Columns listed in ``passthrough`` were constant categorical columns at fit
    time; they are stored with mean 0 and std 1 and so pass through unchanged.
    """

    mean: np.ndarray
    std: np.ndarray
    target_mean: float | None = None
    target_std: float | None = None
    passthrough: tuple[str, ...] = ()

    @property
    def has_target(self) -> bool:
        return self.target_mean is not None

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "target_mean": self.target_mean,
            "target_std": self.target_std,
            "passthrough": list(self.passthrough),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scaler":
        return cls(
            mean=np.asarray(d["mean"], dtype=float),
            std=np.asarray(d["std"], dtype=float),
            target_mean=d.get("target_mean"),
            target_std=d.get("target_std"),
            passthrough=tuple(d.get("passthrough", ())),
        )


def fit_scaler(train: FeatureMatrix, scale_target: bool = False, *, exempt_categorical: bool = True) -> Scaler:
    """Column statistics of the training rows.

    A zero-variance column raises :class:`ScalerError` naming it, unless it is
    a categorical/binary column and ``exempt_categorical`` is set, in which
    case it is passed through unscaled.
    """
    if len(train) < 2:
        raise ScalerError("need at least 2 rows to fit a scaler")
    X = train.X
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    passthrough = []
    for j, name in enumerate(train.feature_names):
        if std[j] > 0:
            continue
        if exempt_categorical and name in CATEGORICAL_FEATURES:
            passthrough.append(name)
            mean[j], std[j] = 0.0, 1.0
        else:
            raise ScalerError(f"feature {name!r} is constant in the training rows")
    tmean = tstd = None
    if scale_target:
        tmean, tstd = float(train.y.mean()), float(train.y.std())
        if not tstd > 0:
            raise ScalerError("target is constant in the training rows")
    return Scaler(mean, std, tmean, tstd, tuple(passthrough))


def apply_scaler(m: FeatureMatrix, sc: Scaler) -> FeatureMatrix:
    """Standardize features (and the target, if the scaler has target stats)."""
    if m.X.shape[1] != len(sc.mean):
        raise ScalerError(f"matrix has {m.X.shape[1]} features, scaler expects {len(sc.mean)}")
    X = (m.X - sc.mean) / sc.std
    y = m.y if not sc.has_target else (m.y - sc.target_mean) / sc.target_std
    return replace(m, X=X, y=y)


def invert_features(X: np.ndarray, sc: Scaler) -> np.ndarray:
    return X * sc.std + sc.mean


def invert_target(yhat_scaled, sc: Scaler):
    """Map standardized predictions back to kW."""
    if not sc.has_target:
        raise ScalerError("scaler was fitted without target statistics")
    out = np.asarray(yhat_scaled, dtype=float) * sc.target_std + sc.target_mean
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# splits

SPLIT_FRACTIONS = (0.65, 0.15, 0.20)


@dataclass
class DatasetSplit:
    """Contiguous chronological train/validation/test partitions.

    The test partition is only reachable through :meth:`open_test`, which logs
    every access under a caller-supplied tag so a run can prove each final
    model looked at test targets exactly once.
    """

    train: FeatureMatrix
    validation: FeatureMatrix
    _test: FeatureMatrix = field(repr=False)
    test_accesses: Counter = field(default_factory=Counter)

    def open_test(self, tag: str) -> FeatureMatrix:
        self.test_accesses[tag] += 1
        return self._test

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self._test)


def split_sizes(n: int) -> tuple[int, int, int]:
    n_train = n * 65 // 100
    n_val = n * 15 // 100
    return n_train, n_val, n - n_train - n_val


def split_chronological(m: FeatureMatrix) -> DatasetSplit:
    """First 65% train, next 15% validation, the rest test (floor rounding)."""
    n = len(m)
    if n < 20:
        raise ValueError(f"need at least 20 rows to split, got {n}")
    a, b, _ = split_sizes(n)
    return DatasetSplit(m[:a], m[a : a + b], m[a + b :])
