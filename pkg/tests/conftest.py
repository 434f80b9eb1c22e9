import numpy as np
import pandas as pd
import pytest

from wsnthin import dataset, synth


@pytest.fixture(scope="session")
def small_network():
    """6 stations, 30 days; observed Ta/e table with scaling from the first 20 days."""
    cfg = synth.ScenarioConfig(n_stations=6, n_days=30, extent_km=6.0)
    res = synth.generate(cfg, seed=3)
    start = res.timestamps[0]
    table = dataset.build_wide_table(res.model_long(), res.stations,
                                     (start, start + pd.Timedelta(days=20)))
    return res, table


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
