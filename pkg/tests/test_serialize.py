import json

import numpy as np
import pytest

from loadcast.baselines import LinearForecaster, SvrForecaster, TreeForecaster, WmaForecaster
from loadcast.forecaster import NotFittedError
from loadcast.serialize import ModelFormatError, load_model, model_from_dict, model_to_dict, save_model


@pytest.mark.parametrize(
    "make",
    [
        lambda sp: WmaForecaster().fit(sp.train, sp.validation),
        lambda sp: LinearForecaster("linear").fit(sp.train),
        lambda sp: LinearForecaster("quadratic").fit(sp.train),
        lambda sp: TreeForecaster(min_leaf=64).fit(sp.train),
        lambda sp: SvrForecaster(epochs=3).fit(sp.train),
    ],
)
def test_round_trip_predictions(tmp_path, year_split, make):
    f = make(year_split)
    save_model(f, tmp_path / "m.json")
    g = load_model(tmp_path / "m.json")
    assert type(g) is type(f)
    assert np.array_equal(f.predict(year_split.validation), g.predict(year_split.validation))


def test_unfitted_model_refused():
    with pytest.raises(NotFittedError):
        model_to_dict(TreeForecaster())


def test_format_checks(year_split):
    doc = model_to_dict(LinearForecaster().fit(year_split.train))
    with pytest.raises(ModelFormatError, match="version"):
        model_from_dict({**doc, "version": 99})
    with pytest.raises(ModelFormatError, match="kind"):
        model_from_dict({**doc, "kind": "forest"})
    with pytest.raises(ModelFormatError):
        model_from_dict({"kind": "linear"})
    json.dumps(doc)
