"""Wide-format observation table, min-max scaling, masked training instances and CV folds.

The wide table stores, per 10-minute timestamp, Ta and e for every station.
Training instances are built by picking target stations per timestamp and
deleting all of their predictor cells, so a model never sees the value it
has to reconstruct.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .domain import MODELED_VARIABLES, StationMeta, Variable, check_unique_ids

N_VARS = len(MODELED_VARIABLES)
EXTERNAL_FEATURES = ("tod_sin", "tod_cos", "doy_sin", "doy_cos")
TARGET_FEATURES = ("target_svf", "target_elevation", "target_lat", "target_lon", "target_is_e")
DAYS_PER_YEAR = 365.25


class ConfigurationError(ValueError):
    pass


@dataclass
class ObservationTable:
    """Physical values ``raw[t, s, v]`` plus per-column scaling parameters.

    ``v`` indexes ``MODELED_VARIABLES`` (0 = Ta, 1 = e). Scaling parameters
    come from the training-period rows only.
    """
    timestamps: pd.DatetimeIndex
    stations: list[StationMeta]
    raw: np.ndarray
    scale_min: np.ndarray
    scale_max: np.ndarray
    train_rows: np.ndarray

    @property
    def n_stations(self) -> int:
        return len(self.stations)

    @property
    def station_ids(self) -> list[str]:
        return [s.id for s in self.stations]

    @property
    def columns(self) -> list[str]:
        return [f"{s.id}_{v.value}" for s in self.stations for v in MODELED_VARIABLES]

    def station_index(self, station_id: str) -> int:
        return self.station_ids.index(station_id)

    def scaled(self) -> np.ndarray:
        """Scaled values as a ``(T, 2 * S)`` matrix in ``columns`` order."""
        z = (self.raw - self.scale_min) / (self.scale_max - self.scale_min)
        return z.reshape(len(self.timestamps), -1)

    def scale(self, values, station, var):
        lo, hi = self.scale_min[station, var], self.scale_max[station, var]
        return (np.asarray(values, dtype=float) - lo) / (hi - lo)

    def unscale(self, values, station, var):
        lo, hi = self.scale_min[station, var], self.scale_max[station, var]
        return np.asarray(values, dtype=float) * (hi - lo) + lo

    def rows_between(self, start, end) -> np.ndarray:
        """Row indices with ``start <= t < end`` (either bound may be None)."""
        ok = np.ones(len(self.timestamps), dtype=bool)
        if start is not None:
            ok &= self.timestamps >= pd.Timestamp(start)
        if end is not None:
            ok &= self.timestamps < pd.Timestamp(end)
        return np.flatnonzero(ok)

    def days(self) -> np.ndarray:
        return self.timestamps.normalize().to_numpy()


def stations_from_frame(meta: pd.DataFrame) -> list[StationMeta]:
    meta = meta.rename(columns={"class": "station_class"})
    if "station_class" not in meta:
        meta = meta.assign(station_class="open")
    stations = [StationMeta(id=str(r.id), latitude=float(r.lat), longitude=float(r.lon),
                            elevation=float(r.elevation), svf=float(r.svf),
                            station_class=str(r.station_class))
                for r in meta.itertuples(index=False)]
    check_unique_ids(stations)
    return stations


def stations_to_frame(stations) -> pd.DataFrame:
    return pd.DataFrame({
        "id": [s.id for s in stations],
        "lat": [s.latitude for s in stations],
        "lon": [s.longitude for s in stations],
        "elevation": [s.elevation for s in stations],
        "svf": [s.svf for s in stations],
        "class": [s.station_class for s in stations],
    })


def build_wide_table(series: pd.DataFrame, stations, train_period,
                     cadence: str = "10min") -> ObservationTable:
    """Assemble the wide table from a long frame of 10-minute Ta and e values.

    Parameters
    ----------
    series : DataFrame
        Columns ``timestamp, station, variable, value`` with variables ``Ta`` and ``e``.
    stations : list of StationMeta
        Defines the column order; stations without data get all-missing columns.
    train_period : (start, end)
        Half-open interval whose rows define the scaling parameters.
    """
    check_unique_ids(stations)
    ids = [s.id for s in stations]
    series = series[series["variable"].isin([v.value for v in MODELED_VARIABLES])]
    ts = pd.DatetimeIndex(series["timestamp"])
    grid = pd.date_range(ts.min().floor(cadence), ts.max(), freq=cadence)
    wide = series.pivot_table(index="timestamp", columns=["station", "variable"],
                              values="value", aggfunc="mean", dropna=False)
    raw = np.full((len(grid), len(ids), N_VARS), np.nan)
    for si, sid in enumerate(ids):
        for vi, var in enumerate(MODELED_VARIABLES):
            if (sid, var.value) in wide.columns:
                raw[:, si, vi] = wide[(sid, var.value)].reindex(grid).to_numpy(dtype=float)
    start, end = train_period
    train_rows = np.ones(len(grid), dtype=bool)
    if start is not None:
        train_rows &= grid >= pd.Timestamp(start)
    if end is not None:
        train_rows &= grid < pd.Timestamp(end)
    train_rows = np.flatnonzero(train_rows)
    lo = np.full((len(ids), N_VARS), np.nan)
    hi = np.full((len(ids), N_VARS), np.nan)
    block = raw[train_rows]
    for si, sid in enumerate(ids):
        for vi, var in enumerate(MODELED_VARIABLES):
            col = block[:, si, vi]
            col = col[~np.isnan(col)]
            if col.size == 0 or not col.max() > col.min():
                raise ConfigurationError(
                    f"column {sid}_{var.value} has no range in the training period")
            lo[si, vi], hi[si, vi] = col.min(), col.max()
    return ObservationTable(timestamps=grid, stations=list(stations), raw=raw,
                            scale_min=lo, scale_max=hi, train_rows=train_rows)


def table_to_long(table: ObservationTable) -> pd.DataFrame:
    """Inverse of the pivot in ``build_wide_table`` (physical values, missing dropped)."""
    T, S, V = table.raw.shape
    df = pd.DataFrame({
        "timestamp": np.repeat(table.timestamps.to_numpy(), S * V),
        "station": np.tile(np.repeat(table.station_ids, V), T),
        "variable": np.tile([v.value for v in MODELED_VARIABLES], T * S),
        "value": table.raw.reshape(-1),
    })
    return df.dropna(subset=["value"]).reset_index(drop=True)


# -- external predictors -------------------------------------------------------

def cyclic_time_features(timestamps: pd.DatetimeIndex) -> np.ndarray:
    """``(T, 4)`` sin/cos encodings of minute-of-day and day-of-year."""
    minutes = np.asarray(timestamps.hour * 60 + timestamps.minute, dtype=float)
    doy = np.asarray(timestamps.dayofyear, dtype=float)
    a = 2.0 * np.pi * minutes / 1440.0
    b = 2.0 * np.pi * doy / DAYS_PER_YEAR
    return np.column_stack([np.sin(a), np.cos(a), np.sin(b), np.cos(b)])


def target_descriptors(stations) -> np.ndarray:
    """Per station and variable: svf, elevation, lat, lon and an e-indicator; shape (S, 2, 5)."""
    static = np.array([[s.svf, s.elevation, s.latitude, s.longitude] for s in stations], float)
    out = np.empty((len(stations), N_VARS, len(TARGET_FEATURES)))
    for vi in range(N_VARS):
        out[:, vi, :4] = static
        out[:, vi, 4] = float(MODELED_VARIABLES[vi] is Variable.E)
    return out


def feature_names(table: ObservationTable) -> list[str]:
    return table.columns + list(EXTERNAL_FEATURES) + list(TARGET_FEATURES)


# -- folds -----------------------------------------------------------------------

@dataclass
class FoldAssignment:
    days: np.ndarray   # datetime64[ns] midnights
    fold: np.ndarray   # fold index per day
    n_folds: int = 10

    def roles(self, test_fold: int):
        """(train folds, validation fold, test fold) for one model run."""
        val = (test_fold + 1) % self.n_folds
        train = [f for f in range(self.n_folds) if f not in (test_fold, val)]
        return train, val, test_fold

    def fold_of_rows(self, table: ObservationTable) -> np.ndarray:
        lookup = pd.Series(self.fold, index=pd.DatetimeIndex(self.days))
        return lookup.reindex(pd.DatetimeIndex(table.days())).fillna(-1).to_numpy(dtype=int)

    def rows(self, table: ObservationTable, folds) -> np.ndarray:
        return np.flatnonzero(np.isin(self.fold_of_rows(table), list(folds)))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"day": pd.DatetimeIndex(self.days).strftime("%Y-%m-%d"),
                             "fold": self.fold})

    @classmethod
    def from_frame(cls, df: pd.DataFrame, n_folds: int = 10) -> "FoldAssignment":
        return cls(days=pd.to_datetime(df["day"]).to_numpy(), fold=df["fold"].to_numpy(int),
                   n_folds=n_folds)


def make_folds(table: ObservationTable, seed: int, n_folds: int = 10,
               rows: np.ndarray | None = None) -> FoldAssignment:
    """Stratify days into folds by their network-mean daily Ta.

    Days are sorted by mean Ta and cut into consecutive blocks of ``n_folds``
    days; each block hands exactly one day to each fold (a shuffled
    permutation), the last partial block to distinct folds.
    """
    rows = table.train_rows if rows is None else np.asarray(rows)
    ta = table.raw[rows, :, 0]
    day = pd.DatetimeIndex(table.timestamps[rows]).normalize()
    frame = pd.DataFrame({"day": np.repeat(day.to_numpy(), ta.shape[1]), "ta": ta.reshape(-1)})
    daily = frame.dropna().groupby("day")["ta"].mean()
    if len(daily) < n_folds:
        raise ConfigurationError(f"need at least {n_folds} days with data, got {len(daily)}")
    ordered = daily.sort_values(kind="stable")
    rng = np.random.default_rng(seed)
    fold = np.empty(len(ordered), dtype=int)
    for b in range(0, len(ordered), n_folds):
        size = min(n_folds, len(ordered) - b)
        fold[b:b + size] = rng.permutation(n_folds)[:size]
    out = pd.Series(fold, index=ordered.index).sort_index()
    return FoldAssignment(days=out.index.to_numpy(), fold=out.to_numpy(), n_folds=n_folds)


# -- training instances ------------------------------------------------------------

def draw_target_stations(available: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Pick 1..max(1, N // 4) distinct target stations among the available ones."""
    available = np.asarray(available)
    n_max = max(1, len(available) // 4)
    n = int(rng.integers(1, n_max + 1))
    return rng.choice(available, size=min(n, len(available)), replace=False)


@dataclass
class Instances:
    X: np.ndarray
    y: np.ndarray
    row: np.ndarray       # table row of the timestamp
    station: np.ndarray   # target station index
    var: np.ndarray       # target variable index

    def __len__(self) -> int:
        return len(self.y)


def _assemble(scaled, targets, ext, desc, inst_row, inst_station, inst_var, masked):
    """Stack predictor rows; ``masked`` is a bool (n_instances, S) of deleted stations."""
    S = masked.shape[1]
    Xs = scaled[inst_row].copy()
    Xs[np.repeat(masked, N_VARS, axis=1)] = np.nan
    X = np.empty((len(inst_row), Xs.shape[1] + ext.shape[1] + desc.shape[2]))
    X[:, :N_VARS * S] = Xs
    X[:, N_VARS * S:N_VARS * S + ext.shape[1]] = ext[inst_row]
    X[:, N_VARS * S + ext.shape[1]:] = desc[inst_station, inst_var]
    y = targets[inst_row, inst_station * N_VARS + inst_var]
    return Instances(X=X, y=y, row=inst_row, station=inst_station, var=inst_var)


def build_training_instances(table: ObservationTable, rows, mode: str,
                             rng: np.random.Generator | None = None,
                             predictor_mask=None) -> Instances:
    """Generate masked-target instances for the given table rows.

    Parameters
    ----------
    mode : {"train", "test"}
        ``train`` draws random target stations per timestamp and emits one
        instance per present (target, variable) value, deleting all targets'
        predictor cells. ``test`` predicts every present value of every
        station, deleting only that station's own cells.
    predictor_mask : bool array of length S, optional
        Stations allowed as predictors; the others' cells are always missing.
        Every station remains a prediction target.
    """
    rows = np.asarray(rows, dtype=int)
    S = table.n_stations
    allowed = np.ones(S, bool) if predictor_mask is None else np.asarray(predictor_mask, bool)
    scaled = table.scaled()
    scaled[:, np.repeat(~allowed, N_VARS)] = np.nan
    # targets come from the unmasked table
    target_vals = table.scaled()
    ext = cyclic_time_features(table.timestamps)
    desc = target_descriptors(table.stations)
    present = ~np.isnan(table.raw[rows])           # (R, S, V)
    has_data = present.any(axis=2)                  # (R, S)

    if mode == "train":
        if rng is None:
            raise ValueError("train mode needs an rng")
        sel = np.zeros((len(rows), S), dtype=bool)
        for i in range(len(rows)):
            avail = np.flatnonzero(has_data[i])
            if avail.size:
                sel[i, draw_target_stations(avail, rng)] = True
        r_i, s_i, v_i = np.nonzero(sel[:, :, None] & present)
        masked = sel[r_i]
    elif mode == "test":
        r_i, s_i, v_i = np.nonzero(present)
        masked = np.zeros((len(r_i), S), dtype=bool)
        masked[np.arange(len(r_i)), s_i] = True
    else:
        raise ValueError(f"unknown mode {mode!r}")

    return _assemble(scaled, target_vals, ext, desc, rows[r_i], s_i, v_i, masked)


def mask_station_columns(X: np.ndarray, stations, n_stations: int) -> np.ndarray:
    """Copy of ``X`` with the Ta and e predictor cells of ``stations`` set missing."""
    X = X.copy()
    for s in stations:
        X[:, s * N_VARS:(s + 1) * N_VARS] = np.nan
    return X
