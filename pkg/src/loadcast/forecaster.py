"""The train/predict contract every model in the benchmark implements."""

from __future__ import annotations

import numpy as np

from loadcast.features import FeatureMatrix


class NotFittedError(RuntimeError):
    pass


class Forecaster:
    """Base class for baselines and neural models.

    ``fit`` trains on the training partition (``validation`` is used only by
    models that select internal settings on it). ``predict`` returns kW
    predictions aligned with ``m[warmup:]``; row models have ``warmup = 0``,
    sequence models consume their first ``L - 1`` rows as context.
    """

    kind: str = "forecaster"
    warmup: int = 0

    def __init__(self):
        self.train_seconds: float | None = None

    @property
    def is_fitted(self) -> bool:
        return self.train_seconds is not None

    def _require_fitted(self) -> None:
        if not self.is_fitted:
            raise NotFittedError(f"{type(self).__name__} must be fitted before predict")

    def fit(self, train: FeatureMatrix, validation: FeatureMatrix | None = None) -> "Forecaster":
        raise NotImplementedError

    def predict(self, m: FeatureMatrix) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError
