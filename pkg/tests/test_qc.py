import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wsnthin import qc, synth
from wsnthin.domain import Variable, rh_to_e


def crafted_ta():
    """10-min Ta with 5 range, 5 rate and 5 persistence violations, non-overlapping.

    Returns the series and the injected index sets per test.
    """
    rng = np.random.default_rng(7)
    idx = pd.date_range("2023-07-01", periods=15 * 144, freq="10min")
    hours = np.arange(len(idx)) / 6.0
    v = 20 + 5 * np.sin(2 * np.pi * hours / 24) + 0.05 * rng.standard_normal(len(idx))
    injected = {"range": [], "rate": [], "persistence": []}
    # range: triangular humps rising 2.1 K per step, peak 45.3 > 45
    for day in (1, 2, 3, 4, 5):
        c = day * 144 + 72
        for k in range(-12, 13):
            v[c + k] = max(v[c + k], 45.3 - 2.1 * abs(k))
        injected["range"].append(c)
    # rate: +11 K within 10 min, held 2 h, then back down by 1 K per step
    for day in (6, 7, 8, 9, 10):
        c = day * 144 + 30
        base = v[c - 1]
        v[c:c + 12] = base + 11.0
        for k in range(11):
            v[c + 12 + k] = base + 10.0 - k
        injected["rate"].append(c)
    # persistence: constant for 6 h 10 min (38 samples)
    for day in (11, 12, 13, 14):
        c = day * 144 + 10
        v[c:c + 38] = round(v[c], 2)
        injected["persistence"].extend(range(c, c + 38))
    c = 14 * 144 + 80
    v[c:c + 38] = round(v[c], 2)
    injected["persistence"].extend(range(c, c + 38))
    return pd.Series(v, index=idx), {k: idx[i] for k, i in injected.items()}


def test_crafted_series_flags_exactly_the_injected_violations():
    s, injected = crafted_ta()
    res = qc.apply_qc(s, Variable.TA)
    for test in ("range", "rate", "persistence"):
        flagged = res.flags.index[res.flags[test]]
        assert flagged.equals(injected[test]), test
    # events: 5 + 5 + 5 runs
    assert len(injected["range"]) == 5 and len(injected["rate"]) == 5
    assert len(injected["persistence"]) == 5 * 38
    assert res.counts()["manual"] == 0
    union = injected["range"].union(injected["rate"]).union(injected["persistence"])
    assert res.cleaned.index[res.cleaned.isna()].equals(union)


def test_clean_synthetic_data_yields_no_flags():
    res = synth.generate(synth.ScenarioConfig(n_stations=4, n_days=10), seed=1)
    cleaned, report = qc.run_qc_long(res.observed_long())
    assert report["flagged_count"].sum() == 0
    assert cleaned["value"].notna().all()


def test_range_limits_inclusive():
    s = pd.Series([-35.0, 45.0, -35.01, 45.01],
                  index=pd.date_range("2023-01-01", periods=4, freq="h"))
    assert qc.range_test(s, "Ta").tolist() == [False, False, True, True]
    rh = pd.Series([10.0, 100.0, 9.99], index=s.index[:3])
    assert qc.range_test(rh, "RH").tolist() == [False, False, True]


def test_rate_limit_is_strict():
    idx = pd.date_range("2023-01-01", periods=3, freq="1min")
    assert not qc.rate_of_change_test(pd.Series([10.0, 15.0, 15.0], idx), "Ta").any()
    flags = qc.rate_of_change_test(pd.Series([10.0, 15.01, 15.01], idx), "Ta")
    assert flags.tolist() == [False, True, False]


def test_rate_uses_every_window():
    # +4 K per minute passes the 1-min limit but 3 steps exceed 10 K in 10 min
    idx = pd.date_range("2023-01-01", periods=4, freq="1min")
    flags = qc.rate_of_change_test(pd.Series([0.0, 4.0, 8.0, 12.0], idx), "Ta")
    assert flags.tolist() == [False, False, False, True]


def test_persistence_threshold_is_strict():
    idx = pd.date_range("2023-01-01", periods=37, freq="10min")   # exactly 6 h
    s = pd.Series(12.5, index=idx)
    assert not qc.persistence_test(s, "Ta").any()
    s2 = pd.Series(12.5, index=pd.date_range("2023-01-01", periods=38, freq="10min"))
    assert qc.persistence_test(s2, "Ta").all()


def test_persistence_broken_by_missing_sample():
    s = pd.Series(12.5, index=pd.date_range("2023-01-01", periods=60, freq="10min"))
    s.iloc[30] = np.nan
    assert not qc.persistence_test(s, "Ta").any()


def test_rh_persistence_uses_72_hours():
    s = pd.Series(80.0, index=pd.date_range("2023-01-01", periods=7 * 24, freq="h"))
    assert not qc.persistence_test(s.iloc[:73], "RH").any()
    assert qc.persistence_test(s.iloc[:74], "RH").all()


def test_manual_exclusion_window():
    s, _ = crafted_ta()
    win = qc.ExclusionWindow("X", "Ta", s.index[10], s.index[19])
    res = qc.apply_qc(s, "Ta", exclusions=[win], station="X")
    assert res.counts()["manual"] == 10
    other = qc.apply_qc(s, "Ta", exclusions=[win], station="Y")
    assert other.counts()["manual"] == 0
    with pytest.raises(ValueError):
        qc.ExclusionWindow("X", "Ta", s.index[5], s.index[5])


def test_already_missing_samples_are_not_counted():
    s = pd.Series([np.nan, 50.0, 20.0], index=pd.date_range("2023-01-01", periods=3, freq="h"))
    res = qc.apply_qc(s, "Ta")
    assert res.counts()["range"] == 1


def test_resample_is_left_closed_mean():
    idx = pd.date_range("2023-01-01 00:00", periods=20, freq="1min")
    s = pd.Series(np.arange(20.0), index=idx)
    r = qc.resample_10min(s)
    assert r.index[0] == pd.Timestamp("2023-01-01 00:00")
    assert r.tolist() == [4.5, 14.5]


def test_to_model_series_converts_before_averaging():
    idx = pd.date_range("2023-01-01", periods=10, freq="1min")
    ta = np.linspace(0, 30, 10)
    rh = np.full(10, 50.0)
    long = pd.concat([
        pd.DataFrame({"timestamp": idx, "station": "A", "variable": "Ta", "value": ta}),
        pd.DataFrame({"timestamp": idx, "station": "A", "variable": "RH", "value": rh}),
    ])
    out = qc.to_model_series(long)
    e = out[out["variable"] == "e"]["value"].iloc[0]
    assert e == pytest.approx(np.mean(rh_to_e(rh, ta)), rel=1e-12)
    assert e != pytest.approx(rh_to_e(50.0, ta.mean()), rel=1e-3)


def test_config_from_dict_and_validation():
    cfg = qc.QcConfig.from_dict({"ta_range": [-30, 40], "rate_limits_ta": [[1, 3], [10, 8]]})
    assert cfg.ta_range == (-30, 40)
    assert cfg.rate_limits_ta == ((1, 3), (10, 8))
    with pytest.raises(ValueError):
        qc.QcConfig(ta_range=(5.0, 5.0))
    with pytest.raises(ValueError):
        qc.QcConfig(rate_limits_ta=((10, 1.0), (1, 1.0)))
    with pytest.raises(ValueError):
        qc.QcConfig().limits("e")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.one_of(st.floats(-40, 50), st.just(20.0), st.just(float("nan"))),
                min_size=1, max_size=200),
       st.sampled_from(["1min", "10min", "1h"]))
def test_qc_is_idempotent(values, freq):
    s = pd.Series(values, index=pd.date_range("2023-01-01", periods=len(values), freq=freq))
    once = qc.apply_qc(s, "Ta").cleaned
    twice = qc.apply_qc(once, "Ta")
    assert not twice.flags.any().any()
    pd.testing.assert_series_equal(twice.cleaned, once)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-40, 50), min_size=1, max_size=100))
def test_flags_only_delete(values):
    s = pd.Series(values, index=pd.date_range("2023-01-01", periods=len(values), freq="10min"))
    res = qc.apply_qc(s, "Ta")
    kept = res.cleaned.notna()
    assert (res.cleaned[kept] == s[kept]).all()
    assert (kept == ~res.flags.any(axis=1)).all()
