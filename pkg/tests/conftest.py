import numpy as np
import pytest

from loadcast.features import extract_features, split_chronological
from loadcast.ingest import LoadSeries, SyntheticProfileConfig, generate_synthetic


def make_series(load, start="2015-01-04T00:00", temperature=None, humidity=None, holidays=None) -> LoadSeries:
    """Hourly series from a load array; 2015-01-04 is a Sunday."""
    load = np.asarray(load, dtype=float)
    n = len(load)
    ts = np.datetime64(start, "h") + np.arange(n)
    return LoadSeries(
        timestamps=ts,
        load=load,
        temperature=np.full(n, 27.0) if temperature is None else np.asarray(temperature, dtype=float),
        humidity=np.full(n, 70.0) if humidity is None else np.asarray(humidity, dtype=float),
        is_holiday=np.zeros(n, dtype=bool) if holidays is None else np.asarray(holidays, dtype=bool),
    )


@pytest.fixture(scope="session")
def synthetic_year():
    return generate_synthetic(SyntheticProfileConfig())


@pytest.fixture(scope="session")
def year_features(synthetic_year):
    return extract_features(synthetic_year)


@pytest.fixture
def year_split(year_features):
    return split_chronological(year_features)
