"""Final-model training on thinned subsets and the evaluation suite.

Predictions are collected in a long "pairs" frame with columns
``variant, model, size, repeat, fold, timestamp, station, variable, pred, obs``
in physical units; every report below is a reduction over that frame.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .dataset import (MODELED_VARIABLES, FoldAssignment, ObservationTable,
                      build_training_instances, make_folds, mask_station_columns)
from .domain import Variable, e_to_rh
from .modeling import derive_seed, params_for_size, run_jobs, train_fold_model

log = logging.getLogger(__name__)

PAIR_COLUMNS = ["variant", "model", "size", "repeat", "fold", "timestamp", "station",
                "variable", "pred", "obs"]
PERCENTILES = (1, 5, 50, 95, 99)
INDICATORS = ("summer", "hot", "desert", "frost", "ice", "tropical_night")


# -- run variants ------------------------------------------------------------------

@dataclass(frozen=True)
class RunVariant:
    """Training and evaluation periods, each a half-open ``(start, end)``.

    ``cross_validated`` variants score the held-out CV test folds of the
    training period; otherwise the whole evaluation period is predicted by
    the mean of the fold models.
    """
    name: str
    train_period: tuple
    eval_period: tuple
    cross_validated: bool

    def __post_init__(self):
        for lo, hi in (self.train_period, self.eval_period):
            if not pd.Timestamp(lo) < pd.Timestamp(hi):
                raise ValueError(f"empty period in variant {self.name}")


def standard_variants(year1: tuple, year2: tuple) -> dict[str, RunVariant]:
    """Gap filling within year 1, extrapolation to year 2, and gap filling over both."""
    both = (year1[0], year2[1])
    return {
        "1->1": RunVariant("1->1", year1, year1, True),
        "1->2": RunVariant("1->2", year1, year2, False),
        "12->12": RunVariant("12->12", both, both, True),
    }


@dataclass
class FinalRun:
    variant: RunVariant
    folds: FoldAssignment
    pairs: pd.DataFrame
    models: dict = field(default_factory=dict, repr=False)   # (size, fold) -> TreeEnsemble


def _subset_for(subsets, size, fold):
    s = subsets[size]
    return list(s[fold]) if isinstance(s, dict) else list(s)


def _pairs_frame(table, inst, pred, **labels) -> pd.DataFrame:
    obs = table.unscale(inst.y, inst.station, inst.var)
    ids = np.asarray(table.station_ids)
    names = np.array([v.value for v in MODELED_VARIABLES])
    df = pd.DataFrame({
        "timestamp": table.timestamps[inst.row],
        "station": ids[inst.station],
        "variable": names[inst.var],
        "pred": table.unscale(pred, inst.station, inst.var),
        "obs": obs,
    })
    for k, v in labels.items():
        df.insert(0, k, v)
    return df


def fit_final(table: ObservationTable, subsets: dict, params_by_size: dict, variant: RunVariant,
              seed: int, n_folds: int = 10, test_folds=None, model_label: str = "EGB",
              repeat: int = 0, keep_models: bool = False, workers: int = 1) -> FinalRun:
    """Train one model per (subset size, CV fold) and predict every station.

    Parameters
    ----------
    subsets : dict
        Size -> station ids, or size -> {fold: station ids} for fold-specific subsets.
    params_by_size : dict
        Tuned parameters; each size uses the nearest tuned size.
    seed : int
        Seeds the new CV folds and every model.
    test_folds : iterable of int, optional
        Restrict to these folds (all by default).
    """
    train_rows = table.rows_between(*variant.train_period)
    folds = make_folds(table, derive_seed(seed, "final-folds", variant.name), n_folds,
                       rows=train_rows)
    fold_ids = list(range(n_folds)) if test_folds is None else list(test_folds)
    S = table.n_stations

    if variant.cross_validated:
        tests = {f: build_training_instances(table, folds.rows(table, [f]), "test")
                 for f in fold_ids}
    else:
        shared = build_training_instances(table, table.rows_between(*variant.eval_period), "test")
        tests = {f: shared for f in fold_ids}

    jobs = [(k, f) for k in sorted(subsets) for f in fold_ids]

    def run(job):
        k, f = job
        keep = np.isin(table.station_ids, _subset_for(subsets, k, f))
        model = train_fold_model(table, folds, f, keep, params_for_size(params_by_size, k),
                                 derive_seed(seed, "final", variant.name, k, f))
        X = mask_station_columns(tests[f].X, np.flatnonzero(~keep), S)
        return model, model.predict(X)

    out = run_jobs(run, jobs, workers)
    frames, models = [], {}
    if variant.cross_validated:
        for (k, f), (model, pred) in zip(jobs, out):
            frames.append(_pairs_frame(table, tests[f], pred, fold=f, repeat=repeat, size=k,
                                       model=model_label, variant=variant.name))
            models[(k, f)] = model
    else:
        for k in sorted(subsets):
            preds = [p for (kk, _), (_, p) in zip(jobs, out) if kk == k]
            frames.append(_pairs_frame(table, shared, np.mean(preds, axis=0), fold=-1,
                                       repeat=repeat, size=k, model=model_label,
                                       variant=variant.name))
        models = {job: m for job, (m, _) in zip(jobs, out)}
    pairs = pd.concat(frames, ignore_index=True)[PAIR_COLUMNS]
    return FinalRun(variant=variant, folds=folds, pairs=pairs,
                    models=models if keep_models else {})


def with_rh(pairs: pd.DataFrame) -> pd.DataFrame:
    """Append RH rows derived from the Ta and e rows sharing a timestamp and station."""
    keys = [c for c in PAIR_COLUMNS if c not in ("variable", "pred", "obs")]
    ta = pairs[pairs["variable"] == Variable.TA.value]
    e = pairs[pairs["variable"] == Variable.E.value]
    m = ta.merge(e, on=keys, suffixes=("_ta", "_e"))
    if m.empty:
        return pairs
    rh = m[keys].copy()
    rh["variable"] = Variable.RH.value
    rh["pred"] = e_to_rh(np.maximum(m["pred_e"].to_numpy(), 0.0), m["pred_ta"].to_numpy(),
                         warn=False)
    rh["obs"] = e_to_rh(m["obs_e"].to_numpy(), m["obs_ta"].to_numpy(), warn=False)
    return pd.concat([pairs, rh[PAIR_COLUMNS]], ignore_index=True)


# -- metrics -------------------------------------------------------------------------

def compute_metrics(pred, obs) -> dict:
    """RMSE, MAE, MBE and R² of ``pred`` against ``obs`` (d = pred - obs).

    R² is NaN with fewer than two pairs or constant observations.
    """
    pred = np.asarray(pred, dtype=float)
    obs = np.asarray(obs, dtype=float)
    ok = ~(np.isnan(pred) | np.isnan(obs))
    pred, obs = pred[ok], obs[ok]
    n = len(obs)
    if n == 0:
        return {"n": 0, "rmse": np.nan, "mae": np.nan, "mbe": np.nan, "r2": np.nan}
    d = pred - obs
    sst = np.sum((obs - obs.mean()) ** 2)
    r2 = 1.0 - np.sum(d ** 2) / sst if n >= 2 and sst > 0 else np.nan
    return {"n": n, "rmse": float(np.sqrt(np.mean(d ** 2))), "mae": float(np.mean(np.abs(d))),
            "mbe": float(np.mean(d)), "r2": float(r2)}


def metrics_table(pairs: pd.DataFrame,
                  by=("variant", "model", "size", "station", "variable")) -> pd.DataFrame:
    """Per-group metrics plus a ``network_mean`` row (mean over stations) per group.

    Pairs of several CV folds or random repeats are pooled within a station.
    """
    by = list(by)
    rows = []
    for key, g in pairs.groupby(by, sort=True):
        rows.append({**dict(zip(by, key)), **compute_metrics(g["pred"], g["obs"])})
    table = pd.DataFrame(rows, columns=by + ["n", "rmse", "mae", "mbe", "r2"])
    if "station" in by and len(table):
        rest = [c for c in by if c != "station"]
        net = table.groupby(rest, sort=True)[["n", "rmse", "mae", "mbe", "r2"]].mean().reset_index()
        net["station"] = "network_mean"
        table = pd.concat([table, net[table.columns]], ignore_index=True)
    return table


# -- climatic indicators ---------------------------------------------------------------

@dataclass(frozen=True)
class IndicatorCriteria:
    summer: float = 25.0       # max >= 25
    hot: float = 30.0          # max >= 30
    desert: float = 35.0       # max >= 35
    frost: float = 0.0         # min < 0
    ice: float = 0.0           # max < 0
    tropical_night: float = 20.0   # night min >= 20
    night_start_hour: int = 18     # evening hour, inclusive
    night_end_hour: int = 6        # morning hour, inclusive


@dataclass
class IndicatorResult:
    days: pd.DataFrame     # per calendar day: tmax, tmin, coverage and day indicators
    nights: pd.DataFrame   # per evening date: tmin, coverage, tropical_night

    def counts(self) -> dict[str, int]:
        out = {k: int(self.days[k].sum()) for k in INDICATORS[:-1]}
        out["tropical_night"] = int(self.nights["tropical_night"].sum())
        return out


def indicator_days(ta: pd.Series, criteria: IndicatorCriteria = IndicatorCriteria(),
                   cadence: str = "10min") -> IndicatorResult:
    """Climatic indicator days of a Ta series indexed by UTC timestamps.

    Day indicators use each calendar day's max/min; a tropical night uses the
    minimum from ``night_start_hour`` of the evening through the end of
    ``night_end_hour`` next morning and is credited to the evening's date.
    All available samples count; ``coverage`` is the fraction present.
    """
    ta = ta.dropna()
    idx = pd.DatetimeIndex(ta.index)
    step = pd.Timedelta(cadence)
    per_day = pd.Timedelta("1D") / step
    daily = ta.groupby(idx.normalize()).agg(["max", "min", "count"])
    days = pd.DataFrame({
        "date": daily.index, "tmax": daily["max"].to_numpy(), "tmin": daily["min"].to_numpy(),
        "coverage": daily["count"].to_numpy() / per_day,
    })
    days["summer"] = days["tmax"] >= criteria.summer
    days["hot"] = days["tmax"] >= criteria.hot
    days["desert"] = days["tmax"] >= criteria.desert
    days["frost"] = days["tmin"] < criteria.frost
    days["ice"] = days["tmax"] < criteria.ice

    hour = idx.hour
    evening = hour >= criteria.night_start_hour
    morning = hour <= criteria.night_end_hour
    in_night = evening | morning
    night_date = idx.normalize() - pd.to_timedelta(np.where(morning, 1, 0), unit="D")
    hours = 24 - criteria.night_start_hour + criteria.night_end_hour + 1
    nightly = ta[in_night].groupby(night_date[in_night]).agg(["min", "count"])
    nights = pd.DataFrame({
        "date": nightly.index, "tmin": nightly["min"].to_numpy(),
        "coverage": nightly["count"].to_numpy() / (pd.Timedelta(hours=hours) / step),
    })
    nights["tropical_night"] = nights["tmin"] >= criteria.tropical_night
    return IndicatorResult(days=days.reset_index(drop=True), nights=nights.reset_index(drop=True))


def indicator_table(pairs: pd.DataFrame, criteria: IndicatorCriteria = IndicatorCriteria(),
                    cadence: str = "10min") -> pd.DataFrame:
    """Observed vs predicted indicator counts per station, size and model.

    For cross-validated variants each timestamp appears in exactly one fold,
    so pooling the folds reconstructs the full predicted series.
    """
    ta = pairs[pairs["variable"] == Variable.TA.value]
    rows = []
    for key, g in ta.groupby(["variant", "model", "size", "repeat", "station"], sort=True):
        g = g.sort_values("timestamp")
        obs = indicator_days(pd.Series(g["obs"].to_numpy(), index=g["timestamp"]), criteria, cadence)
        prd = indicator_days(pd.Series(g["pred"].to_numpy(), index=g["timestamp"]), criteria, cadence)
        co, cp = obs.counts(), prd.counts()
        cov = float(obs.days["coverage"].mean()) if len(obs.days) else np.nan
        for ind in INDICATORS:
            rows.append(dict(zip(["variant", "model", "size", "repeat", "station"], key),
                             indicator=ind, observed=co[ind], predicted=cp[ind],
                             deviation=cp[ind] - co[ind], coverage=cov))
    return pd.DataFrame(rows, columns=["variant", "model", "size", "repeat", "station", "indicator",
                                       "observed", "predicted", "deviation", "coverage"])


# -- error distributions -----------------------------------------------------------------

def hot_days(pairs: pd.DataFrame, threshold: float = 30.0) -> pd.DatetimeIndex:
    """Days whose network-mean daily maximum of observed Ta reaches ``threshold``."""
    ta = pairs[pairs["variable"] == Variable.TA.value][["timestamp", "station", "obs"]]
    ta = ta.drop_duplicates(["timestamp", "station"])
    day = pd.DatetimeIndex(ta["timestamp"]).normalize()
    dmax = ta.groupby([day, ta["station"]])["obs"].max()
    net = dmax.groupby(level=0).mean()
    return pd.DatetimeIndex(net.index[net >= threshold])


def error_splits(pairs: pd.DataFrame, day_hours=(6, 18), hot_threshold: float = 30.0,
                 percentiles=PERCENTILES) -> pd.DataFrame:
    """Error percentiles by day/night and all/hot conditions.

    Daytime is ``day_hours[0] <= hour < day_hours[1]`` (UTC). Hot conditions
    are timestamps on days from :func:`hot_days`. Empty groups are omitted.
    """
    df = pairs.assign(error=pairs["pred"] - pairs["obs"]).dropna(subset=["error"])
    hour = pd.DatetimeIndex(df["timestamp"]).hour
    df["period"] = np.where((hour >= day_hours[0]) & (hour < day_hours[1]), "day", "night")
    hot = pd.DatetimeIndex(df["timestamp"]).normalize().isin(hot_days(pairs, hot_threshold))
    pcols = [f"p{p:g}" for p in percentiles]
    rows = []
    for condition, sel in (("all", np.ones(len(df), bool)), ("hot", hot)):
        sub = df[sel]
        for period in ("day", "night"):
            part = sub[sub["period"] == period]
            for key, g in part.groupby(["variant", "model", "size", "variable"], sort=True):
                q = np.percentile(g["error"].to_numpy(), percentiles)
                rows.append(dict(zip(["variant", "model", "size", "variable"], key),
                                 period=period, condition=condition, n=len(g),
                                 **dict(zip(pcols, q))))
            if part.empty:
                warnings.warn(f"no errors for {period}/{condition}; group omitted",
                              RuntimeWarning, stacklevel=2)
    return pd.DataFrame(rows, columns=["variant", "model", "size", "variable", "period",
                                       "condition", "n"] + pcols)


def bias_timeseries(pairs: pd.DataFrame, window_days: float = 7.0, min_fraction: float = 0.1,
                    cadence: str = "10min") -> pd.DataFrame:
    """Raw errors and their centred moving average per station and variable.

    The series is placed on a regular grid; a window with fewer than
    ``min_fraction`` of its samples available yields a missing average.
    """
    step = pd.Timedelta(cadence)
    width = int(round(pd.Timedelta(days=window_days) / step))
    min_periods = max(1, math.ceil(min_fraction * width))
    keys = ["variant", "model", "size", "repeat", "station", "variable"]
    frames = []
    for key, g in pairs.groupby(keys, sort=True):
        err = (g["pred"] - g["obs"]).groupby(g["timestamp"].to_numpy()).mean()
        grid = pd.date_range(err.index.min(), err.index.max(), freq=step)
        err = err.reindex(grid)
        ma = err.rolling(width, center=True, min_periods=min_periods).mean()
        f = pd.DataFrame({"timestamp": grid, "error": err.to_numpy(), "error_ma": ma.to_numpy()})
        for k, v in zip(keys[::-1], key[::-1]):
            f.insert(0, k, v)
        frames.append(f[~(f["error"].isna() & f["error_ma"].isna())])
    if not frames:
        return pd.DataFrame(columns=keys + ["timestamp", "error", "error_ma"])
    return pd.concat(frames, ignore_index=True)
