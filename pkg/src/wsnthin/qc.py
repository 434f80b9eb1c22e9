"""Quality control of raw station series and resampling to a 10-minute cadence.

Series are ``pandas.Series`` with a sorted ``DatetimeIndex`` (UTC) and NaN
for missing samples. The three automatic tests run independently on the raw
series and their flags are unioned; flagged samples are deleted (set to NaN),
never altered.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .domain import Variable, rh_to_e

QC_TESTS = ("range", "rate", "persistence", "manual")


@dataclass(frozen=True)
class QcConfig:
    ta_range: tuple[float, float] = (-35.0, 45.0)
    rh_range: tuple[float, float] = (10.0, 100.0)
    # (window length in minutes, maximum absolute change)
    rate_limits_ta: tuple[tuple[float, float], ...] = ((1, 5.0), (10, 10.0), (60, 15.0))
    rate_limits_rh: tuple[tuple[float, float], ...] = ((1, 10.0), (10, 30.0), (60, 50.0))
    persistence_ta_hours: float = 6.0
    persistence_rh_hours: float = 72.0

    def __post_init__(self):
        for lo, hi in (self.ta_range, self.rh_range):
            if not lo < hi:
                raise ValueError("range limits must satisfy lower < upper")
        for limits in (self.rate_limits_ta, self.rate_limits_rh):
            windows = [w for w, _ in limits]
            if windows != sorted(windows):
                raise ValueError("rate windows must be sorted ascending")
            if any(w <= 0 or lim <= 0 for w, lim in limits):
                raise ValueError("rate windows and limits must be positive")
        if self.persistence_ta_hours <= 0 or self.persistence_rh_hours <= 0:
            raise ValueError("persistence thresholds must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "QcConfig":
        d = dict(d)
        for key in ("ta_range", "rh_range"):
            if key in d:
                d[key] = tuple(d[key])
        for key in ("rate_limits_ta", "rate_limits_rh"):
            if key in d:
                d[key] = tuple(tuple(p) for p in d[key])
        return cls(**d)

    def limits(self, variable: Variable):
        variable = Variable(variable)
        if variable is Variable.TA:
            return self.ta_range, self.rate_limits_ta, self.persistence_ta_hours
        if variable is Variable.RH:
            return self.rh_range, self.rate_limits_rh, self.persistence_rh_hours
        raise ValueError(f"no QC limits defined for {variable.value}")


@dataclass(frozen=True)
class ExclusionWindow:
    station: str
    variable: Variable
    start: pd.Timestamp
    end: pd.Timestamp

    def __post_init__(self):
        object.__setattr__(self, "variable", Variable(self.variable))
        object.__setattr__(self, "start", pd.Timestamp(self.start))
        object.__setattr__(self, "end", pd.Timestamp(self.end))
        if not self.start < self.end:
            raise ValueError("exclusion window needs start < end")


@dataclass
class QcResult:
    cleaned: pd.Series
    flags: pd.DataFrame = field(repr=False)

    def counts(self) -> dict[str, int]:
        return {t: int(self.flags[t].sum()) for t in QC_TESTS}


def range_test(series: pd.Series, variable, config: QcConfig = QcConfig()) -> pd.Series:
    (lo, hi), _, _ = config.limits(variable)
    v = series.to_numpy(dtype=float)
    return pd.Series((v < lo) | (v > hi), index=series.index)


def rate_of_change_test(series: pd.Series, variable, config: QcConfig = QcConfig()) -> pd.Series:
    """Flag the later sample of any pair closer than a window whose change exceeds its limit.

    For a window ``w`` each sample is compared against every available
    sample in ``[t - w, t)``; a pair is flagged when the absolute difference
    strictly exceeds the limit.
    """
    _, rate_limits, _ = config.limits(variable)
    flags = pd.Series(False, index=series.index)
    s = series.dropna()
    if s.empty:
        return flags
    for minutes, limit in rate_limits:
        roll = s.rolling(pd.Timedelta(minutes=minutes), closed="both")
        hi = roll.max().to_numpy()
        lo = roll.min().to_numpy()
        v = s.to_numpy()
        bad = (v - lo > limit) | (hi - v > limit)
        flags.loc[s.index[bad]] = True
    return flags


def persistence_test(series: pd.Series, variable, config: QcConfig = QcConfig()) -> pd.Series:
    """Flag whole runs of identical consecutive values lasting longer than the threshold.

    A run's duration is the time between its first and last sample. Missing
    entries break a run.
    """
    _, _, hours = config.limits(variable)
    v = series.to_numpy(dtype=float)
    flags = np.zeros(len(v), dtype=bool)
    if len(v) == 0:
        return pd.Series(flags, index=series.index)
    t = series.index.asi8
    limit = pd.Timedelta(hours=hours).value
    # run boundaries: value changes or either neighbour is missing
    same = (v[1:] == v[:-1])
    starts = np.flatnonzero(np.concatenate(([True], ~same)))
    ends = np.concatenate((starts[1:], [len(v)])) - 1
    for a, b in zip(starts, ends):
        if np.isnan(v[a]):
            continue
        if t[b] - t[a] > limit:
            flags[a:b + 1] = True
    return pd.Series(flags, index=series.index)


def apply_qc(series: pd.Series, variable, config: QcConfig = QcConfig(),
             exclusions=(), station: str | None = None) -> QcResult:
    variable = Variable(variable)
    flags = pd.DataFrame({
        "range": range_test(series, variable, config),
        "rate": rate_of_change_test(series, variable, config),
        "persistence": persistence_test(series, variable, config),
        "manual": False,
    }, index=series.index)
    for win in exclusions:
        if win.variable is variable and (station is None or win.station == station):
            inside = (series.index >= win.start) & (series.index <= win.end)
            flags.loc[inside, "manual"] = True
    # already-missing samples are not counted as flagged
    flags[series.isna().to_numpy()] = False
    cleaned = series.where(~flags.any(axis=1))
    return QcResult(cleaned=cleaned, flags=flags)


def resample_10min(series: pd.Series) -> pd.Series:
    """Mean of available samples per left-closed 10-minute bin; empty bins are NaN."""
    return series.resample("10min", closed="left", label="left").mean()


def run_qc_long(obs: pd.DataFrame, config: QcConfig = QcConfig(), exclusions=()):
    """QC a long table (timestamp, station, variable, value) of Ta and RH.

    Returns the cleaned long table and the per-series report as a DataFrame.
    """
    cleaned, report = [], []
    for (station, var), grp in obs.groupby(["station", "variable"], sort=True):
        s = grp.set_index("timestamp")["value"].sort_index()
        res = apply_qc(s, var, config, exclusions, station=station)
        present = int(s.notna().sum())
        for test, count in res.counts().items():
            report.append({"station": station, "variable": var, "test": test,
                           "flagged_count": count,
                           "flagged_fraction": count / present if present else 0.0})
        out = res.cleaned.rename("value").reset_index()
        out.insert(1, "station", station)
        out.insert(2, "variable", var)
        cleaned.append(out)
    cols = ["timestamp", "station", "variable", "value"]
    cleaned = pd.concat(cleaned, ignore_index=True)[cols] if cleaned else pd.DataFrame(columns=cols)
    return cleaned, pd.DataFrame(report, columns=["station", "variable", "test",
                                                  "flagged_count", "flagged_fraction"])


def to_model_series(cleaned: pd.DataFrame) -> pd.DataFrame:
    """Convert cleaned Ta/RH samples to 10-minute Ta and vapour pressure.

    RH is converted to e at the raw cadence (only where Ta is present at the
    same instant) before averaging.
    """
    out = []
    for station, grp in cleaned.groupby("station", sort=True):
        wide = grp.pivot_table(index="timestamp", columns="variable", values="value",
                               aggfunc="first", dropna=False).sort_index()
        ta = wide.get(Variable.TA.value, pd.Series(np.nan, index=wide.index))
        rh = wide.get(Variable.RH.value, pd.Series(np.nan, index=wide.index))
        ok = ta.notna() & rh.notna()
        e = pd.Series(np.nan, index=wide.index)
        if ok.any():
            e[ok] = rh_to_e(rh[ok].to_numpy(), ta[ok].to_numpy())
        for var, s in ((Variable.TA, ta), (Variable.E, e)):
            r = resample_10min(s.astype(float)).rename("value").reset_index()
            r.insert(1, "station", station)
            r.insert(2, "variable", var.value)
            out.append(r)
    cols = ["timestamp", "station", "variable", "value"]
    return pd.concat(out, ignore_index=True)[cols] if out else pd.DataFrame(columns=cols)
