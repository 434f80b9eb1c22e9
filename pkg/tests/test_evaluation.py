import math
import warnings

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from wsnthin import evaluation, gbt
from wsnthin.evaluation import PAIR_COLUMNS

finite = st.floats(-1e3, 1e3, allow_nan=False)


# -- metrics -------------------------------------------------------------------------

def _oracle(pred, obs):
    n = len(obs)
    d = [p - o for p, o in zip(pred, obs)]
    mean_obs = math.fsum(obs) / n
    sse = math.fsum(x * x for x in d)
    sst = math.fsum((o - mean_obs) ** 2 for o in obs)
    return {"rmse": math.sqrt(sse / n), "mae": math.fsum(abs(x) for x in d) / n,
            "mbe": math.fsum(d) / n, "r2": 1 - sse / sst}


@pytest.mark.parametrize("seed", range(5))
def test_metrics_match_closed_form(seed):
    rng = np.random.default_rng(seed)
    obs = rng.normal(20, 5, 500)
    pred = obs + rng.normal(0.3, 1.2, 500)
    got = evaluation.compute_metrics(pred, obs)
    want = _oracle(pred.tolist(), obs.tolist())
    assert got["n"] == 500
    for k, v in want.items():
        assert got[k] == pytest.approx(v, rel=1e-12, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(arrays(float, st.integers(2, 60), elements=finite), st.integers(0, 2**31))
def test_rmse_decomposes_into_bias_and_variance(obs, seed):
    pred = obs + np.random.default_rng(seed).normal(size=len(obs)) * 3
    m = evaluation.compute_metrics(pred, obs)
    var = np.var(pred - obs)
    assert m["rmse"] ** 2 == pytest.approx(m["mbe"] ** 2 + var, rel=1e-9, abs=1e-9)
    assert m["mae"] <= m["rmse"] + 1e-12


def test_metrics_edge_cases():
    assert np.isnan(evaluation.compute_metrics([1.0], [2.0])["r2"])
    assert np.isnan(evaluation.compute_metrics([1.0, 2.0], [3.0, 3.0])["r2"])
    assert evaluation.compute_metrics([], [])["n"] == 0
    m = evaluation.compute_metrics([1.0, np.nan, 3.0], [1.0, 2.0, np.nan])
    assert m["n"] == 1 and m["rmse"] == 0.0


def _pairs(values, **labels):
    base = {"variant": "1->1", "model": "EGB", "size": 3, "repeat": 0, "fold": 0}
    base.update(labels)
    df = pd.DataFrame(values)
    for k, v in base.items():
        if k not in df:
            df[k] = v
    return df[PAIR_COLUMNS]


def test_metrics_table_network_mean_is_mean_of_stations():
    ts = pd.date_range("2023-07-01", periods=4, freq="10min")
    pairs = pd.concat([
        _pairs({"timestamp": ts, "station": "A", "variable": "Ta", "pred": [1, 1, 1, 1.0], "obs": 0.0}),
        _pairs({"timestamp": ts, "station": "B", "variable": "Ta", "pred": [3, 3, 3, 3.0], "obs": 0.0}),
    ])
    m = evaluation.metrics_table(pairs).set_index("station")
    assert m.loc["A", "rmse"] == 1 and m.loc["B", "rmse"] == 3
    assert m.loc["network_mean", "rmse"] == 2


def test_with_rh_derives_relative_humidity():
    ts = pd.date_range("2023-07-01", periods=2, freq="10min")
    pairs = pd.concat([
        _pairs({"timestamp": ts, "station": "A", "variable": "Ta", "pred": 20.0, "obs": 20.0}),
        _pairs({"timestamp": ts, "station": "A", "variable": "e", "pred": [11.7, -1.0], "obs": 11.7}),
    ])
    rh = evaluation.with_rh(pairs).query("variable == 'RH'")
    assert len(rh) == 2
    assert rh["obs"].iloc[0] == pytest.approx(rh["pred"].iloc[0])
    assert rh["pred"].iloc[1] == 0.0   # negative vapour pressure clipped


# -- indicator days ----------------------------------------------------------------

def crafted_indicator_series():
    """30 days of Ta with hand-placed exceedances and their expected counts."""
    idx = pd.date_range("2023-06-01", periods=30 * 144, freq="10min")
    hour = idx.hour
    ta = pd.Series(np.select([hour < 6, hour < 12, hour < 18], [10.0, 15.0, 20.0], 12.0), index=idx)

    def day(d, h0=0, h1=24):
        start = idx[0] + pd.Timedelta(days=d, hours=h0)
        return (idx >= start) & (idx < start + pd.Timedelta(hours=h1 - h0))

    ta[day(3, 13, 14)] = 25.0           # exactly at the summer threshold
    ta[day(5, 13, 14)] = 24.99          # just below
    ta[day(7, 12, 15)] = 31.0           # summer + hot
    ta[day(9, 12, 15)] = 36.0           # summer + hot + desert
    ta[day(12)] = 3.0
    ta[day(12, 4, 5)] = -0.5            # frost, no ice
    ta[day(14)] = -2.0                  # frost + ice
    ta[day(20, 18, 24) | day(21, 0, 7)] = 21.0    # tropical night across midnight
    ta[day(25, 18, 24) | day(26, 0, 7)] = 20.0    # exactly at the threshold
    ta[day(27, 18, 24) | day(28, 0, 7)] = 22.0
    ta[day(28, 0, 1)] = 19.9            # one cool sample after midnight spoils it
    expected = {"summer": 3, "hot": 2, "desert": 1, "frost": 2, "ice": 1, "tropical_night": 2}
    return ta, expected


def test_indicator_counts_match_hand_counts():
    ta, expected = crafted_indicator_series()
    res = evaluation.indicator_days(ta)
    assert res.counts() == expected
    nights = res.nights.set_index("date")["tropical_night"]
    assert nights[pd.Timestamp("2023-06-21")] and nights[pd.Timestamp("2023-06-26")]
    assert not nights[pd.Timestamp("2023-06-28")]
    assert (res.days["coverage"] == 1.0).all()


def test_indicator_night_window_edges():
    # samples at 06:50 belong to the night, 07:00 does not
    ta, _ = crafted_indicator_series()
    ta = ta.copy()
    ta[pd.Timestamp("2023-06-22 06:50")] = 19.0   # spoils the night of the 21st
    ta[pd.Timestamp("2023-06-27 07:00")] = 5.0    # outside the night of the 26th
    assert evaluation.indicator_days(ta).counts()["tropical_night"] == 1


def test_indicator_coverage_reports_gaps():
    ta, _ = crafted_indicator_series()
    ta = ta.drop(ta.index[:72])
    days = evaluation.indicator_days(ta).days
    assert days["coverage"].iloc[0] == pytest.approx(0.5)


def test_indicator_table_deviation():
    ta, expected = crafted_indicator_series()
    pairs = _pairs({"timestamp": ta.index, "station": "A", "variable": "Ta",
                    "obs": ta.to_numpy(), "pred": ta.to_numpy() - 0.5})
    tab = evaluation.indicator_table(pairs).set_index("indicator")
    assert tab.loc["summer", "observed"] == 3
    assert tab.loc["summer", "predicted"] == 2    # the 25.0 day drops out
    assert tab.loc["summer", "deviation"] == -1
    assert tab.loc["tropical_night", "predicted"] == 1


# -- error distributions -----------------------------------------------------------

def _linear_percentile(x, p):
    s = sorted(x)
    pos = (len(s) - 1) * p / 100
    lo = math.floor(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (s[hi] - s[lo]) * (pos - lo)


def test_error_percentiles_match_sort_oracle(rng):
    ts = pd.date_range("2023-07-01", periods=3 * 144, freq="10min")
    obs = 20 + 12 * np.sin(np.arange(len(ts)) / 144 * 2 * np.pi)
    err = rng.standard_t(3, len(ts))
    pairs = _pairs({"timestamp": ts, "station": "A", "variable": "Ta", "obs": obs, "pred": obs + err})
    out = evaluation.error_splits(pairs, hot_threshold=30).set_index(["period", "condition"])
    day = (ts.hour >= 6) & (ts.hour < 18)
    for period, sel in (("day", day), ("night", ~day)):
        row = out.loc[(period, "all")]
        assert row["n"] == sel.sum()
        for p in evaluation.PERCENTILES:
            assert row[f"p{p:g}"] == pytest.approx(_linear_percentile(err[sel], p), abs=1e-12)
    # every day peaks at 32 so all samples are hot
    assert out.loc[("day", "hot"), "n"] == day.sum()


def test_error_splits_warns_on_empty_group():
    ts = pd.date_range("2023-07-01 08:00", periods=6, freq="10min")
    pairs = _pairs({"timestamp": ts, "station": "A", "variable": "Ta", "obs": 10.0, "pred": 11.0})
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = evaluation.error_splits(pairs)
    msgs = {str(w.message).split()[3] for w in caught}
    assert msgs == {"night/all;", "day/hot;", "night/hot;"}
    assert set(out["period"]) == {"day"}


def test_hot_days_use_network_mean_of_daily_max():
    ts = pd.date_range("2023-07-01", periods=2 * 144, freq="10min")
    a = np.where(ts.day == 1, 33.0, 28.0)
    b = np.where(ts.day == 1, 28.0, 28.0)
    pairs = pd.concat([
        _pairs({"timestamp": ts, "station": "A", "variable": "Ta", "obs": a, "pred": a}),
        _pairs({"timestamp": ts, "station": "B", "variable": "Ta", "obs": b, "pred": b}),
    ])
    assert list(evaluation.hot_days(pairs, 30)) == [pd.Timestamp("2023-07-01")]


def test_bias_of_constant_error_is_constant():
    ts = pd.date_range("2023-07-01", periods=10 * 144, freq="10min")
    pairs = _pairs({"timestamp": ts, "station": "A", "variable": "Ta", "obs": 0.0, "pred": 0.7})
    out = evaluation.bias_timeseries(pairs)
    assert np.allclose(out["error_ma"], 0.7)
    assert len(out) == len(ts)


def test_bias_of_step_is_window_average():
    ts = pd.date_range("2023-07-01", periods=20 * 144, freq="10min")
    err = np.where(np.arange(len(ts)) < 10 * 144, 0.0, 1.0)
    pairs = _pairs({"timestamp": ts, "station": "A", "variable": "Ta", "obs": 0.0, "pred": err})
    out = evaluation.bias_timeseries(pairs, window_days=2)
    ma = out["error_ma"].to_numpy()
    # centred at the step: half the window on each side
    assert ma[10 * 144] == pytest.approx(0.5, abs=1 / 288)
    assert ma[5 * 144] == 0.0 and ma[15 * 144] == 1.0


def test_bias_respects_minimum_coverage():
    ts = pd.date_range("2023-07-01", periods=30 * 144, freq="10min")
    keep = np.zeros(len(ts), bool)
    keep[::20] = True          # 5 % of samples
    pairs = _pairs({"timestamp": ts[keep], "station": "A", "variable": "Ta", "obs": 0.0, "pred": 1.0})
    out = evaluation.bias_timeseries(pairs)
    assert out["error_ma"].isna().all()


# -- final fits ------------------------------------------------------------------

def test_variant_validation():
    with pytest.raises(ValueError):
        evaluation.RunVariant("x", ("2023-07-02", "2023-07-01"), ("2023-07-01", "2023-07-02"), True)
    v = evaluation.standard_variants(("2022-06-01", "2022-07-01"), ("2022-07-01", "2022-08-01"))
    assert v["1->1"].cross_validated and not v["1->2"].cross_validated
    assert v["12->12"].train_period == ("2022-06-01", "2022-08-01")


@pytest.fixture(scope="module")
def final_runs(small_network):
    res, table = small_network
    start = res.timestamps[0]
    mid, end = start + pd.Timedelta(days=15), start + pd.Timedelta(days=30)
    v = evaluation.standard_variants((start, mid), (mid, end))
    subsets = {6: list(table.station_ids), 2: list(table.station_ids[:2])}
    p = gbt.GbtParams(learning_rate=0.3, max_depth=4, early_stopping_rounds=10, max_rounds=60)
    return table, {name: evaluation.fit_final(table, subsets, {6: p}, v[name], seed=1,
                                              test_folds=[0, 1])
                   for name in ("1->1", "1->2")}


def test_cv_variant_predicts_each_test_row_once(final_runs):
    table, runs = final_runs
    pairs = runs["1->1"].pairs
    assert set(pairs["fold"]) == {0, 1}
    dup = pairs.duplicated(["size", "timestamp", "station", "variable"])
    assert not dup.any()
    # every station is imputed, subset members with their own column hidden
    for k in (2, 6):
        assert set(pairs.loc[pairs["size"] == k, "station"]) == set(table.station_ids)


def test_non_cv_variant_averages_fold_models(final_runs):
    table, runs = final_runs
    pairs = runs["1->2"].pairs
    assert set(pairs["fold"]) == {-1}
    ts = pd.DatetimeIndex(pairs["timestamp"])
    assert ts.min() >= table.timestamps[0] + pd.Timedelta(days=15)
    assert np.isfinite(pairs["pred"]).all()
    two = pairs[(pairs["size"] == 2) & (pairs["variable"] == "Ta")]
    m = evaluation.compute_metrics(two["pred"], two["obs"])
    assert m["rmse"] < np.std(two["obs"])
