"""Versioned JSON documents for trained models, so predict-only runs can be
reproduced without retraining.
"""

from __future__ import annotations

import json
from pathlib import Path

from loadcast._io import atomic_write_text
from loadcast.architectures import NeuralForecaster
from loadcast.baselines import LinearForecaster, SvrForecaster, TreeForecaster, WmaForecaster
from loadcast.forecaster import Forecaster

FORMAT = "loadcast-model"
VERSION = 1

_TYPES = {cls.kind: cls for cls in (WmaForecaster, LinearForecaster, TreeForecaster, SvrForecaster, NeuralForecaster)}


class ModelFormatError(ValueError):
    pass


def model_to_dict(f: Forecaster) -> dict:
    f._require_fitted()
    return {"format": FORMAT, "version": VERSION, "kind": f.kind, "state": f.to_dict()}


def model_from_dict(doc: dict) -> Forecaster:
    if doc.get("format") != FORMAT:
        raise ModelFormatError(f"not a {FORMAT} document")
    if doc.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model format version {doc.get('version')!r}")
    try:
        cls = _TYPES[doc["kind"]]
    except KeyError:
        raise ModelFormatError(f"unknown model kind {doc.get('kind')!r}") from None
    return cls.from_dict(doc["state"])


def save_model(f: Forecaster, path: str | Path) -> None:
    atomic_write_text(path, json.dumps(model_to_dict(f), sort_keys=True))


def load_model(path: str | Path) -> Forecaster:
    return model_from_dict(json.loads(Path(path).read_text()))
