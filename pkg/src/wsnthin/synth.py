"""Synthetic station-network simulator with known ground truth.

Air temperature at station ``s`` and time ``t`` is the sum of a seasonal
cycle, a diurnal cycle damped by station class, a network-wide AR(1)
synoptic signal, class offsets that differ between day and night, an
elevation lapse term, spatially correlated AR(1) noise with an exponential
covariance, and propagating front events. Vapour pressure follows its own
slowly varying AR(1) process and is clipped at saturation. Observations add
white noise, drift and gaps on top of the truth.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd
from scipy.signal import lfilter

from .domain import STATION_CLASSES, StationMeta, Variable, saturation_vapor_pressure

REF_LAT, REF_LON = 48.0, 7.85
KM_PER_DEG = 111.2

# class -> (daytime offset K, nighttime offset K, diurnal damping)
CLASS_EFFECTS = {
    "built-up": (0.3, 1.5, 0.1),
    "open": (0.0, 0.0, 0.0),
    "forest": (-1.0, 0.3, 0.3),
    "water-adjacent": (-0.5, 0.5, 0.2),
}
CLASS_SVF = {"built-up": 0.5, "open": 0.9, "forest": 0.3, "water-adjacent": 0.8}


@dataclass
class StationSpec:
    id: str
    x_km: float
    y_km: float
    elevation: float = 250.0
    svf: float | None = None
    station_class: str = "open"


@dataclass
class FrontEvent:
    day: float                 # arrival at the most upwind station, days from start
    amplitude: float = -6.0    # K
    speed_kmh: float = 2.0
    direction_deg: float = 0.0  # direction of travel; 0 = towards +x (east)
    decay_hours: float = 12.0
    ramp_hours: float = 0.5


@dataclass
class Gap:
    station: str
    start_day: float
    n_days: float
    variable: str | None = None  # None = both


@dataclass
class Drift:
    station: str
    start_day: float
    k_per_day: float


@dataclass
class ScenarioConfig:
    n_stations: int = 12
    stations: list[StationSpec] | None = None
    extent_km: float = 12.0
    start: str = "2022-06-01"
    n_days: int = 40
    cadence_minutes: int = 10
    base_temp: float = 15.0
    seasonal_amplitude: float = 8.0
    diurnal_amplitude: float = 5.0
    synoptic_phi: float = 0.999
    synoptic_sigma: float = 0.04
    spatial_sigma: float = 0.6
    correlation_length_km: float = 4.0
    spatial_phi: float = 0.98
    lapse_rate: float = -0.0065
    reference_elevation: float = 250.0
    class_offsets: bool = True
    fronts: list[FrontEvent] = field(default_factory=list)
    e_base: float = 13.0
    e_seasonal_amplitude: float = 3.0
    e_phi: float = 0.999
    e_sigma: float = 0.05
    e_spatial_sigma: float = 0.4
    noise_ta: float = 0.1
    noise_rh: float = 1.0
    gaps: list[Gap] = field(default_factory=list)
    drifts: list[Drift] = field(default_factory=list)
    duplicates: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.correlation_length_km <= 0:
            raise ValueError("correlation length must be positive")
        if self.noise_ta < 0 or self.noise_rh < 0:
            raise ValueError("noise levels must be non-negative")
        if self.cadence_minutes <= 0 or 1440 % self.cadence_minutes:
            raise ValueError("cadence must divide one day")
        if self.n_days < 1:
            raise ValueError("n_days must be >= 1")
        for p in (self.synoptic_phi, self.spatial_phi, self.e_phi):
            if not 0 <= p < 1:
                raise ValueError("AR coefficients must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if d.get("stations") is not None:
            d["stations"] = [StationSpec(**s) for s in d["stations"]]
        d["fronts"] = [FrontEvent(**f) for f in d.get("fronts", [])]
        d["gaps"] = [Gap(**g) for g in d.get("gaps", [])]
        d["drifts"] = [Drift(**g) for g in d.get("drifts", [])]
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SynthResult:
    stations: list[StationMeta]
    timestamps: pd.DatetimeIndex
    xy_km: np.ndarray
    truth_ta: np.ndarray   # (T, S)
    truth_e: np.ndarray
    obs_ta: np.ndarray
    obs_rh: np.ndarray

    @property
    def truth_rh(self) -> np.ndarray:
        return 100.0 * self.truth_e / saturation_vapor_pressure(self.truth_ta)

    def _long(self, arrays: dict) -> pd.DataFrame:
        T, S = self.truth_ta.shape
        frames = []
        for var, a in arrays.items():
            frames.append(pd.DataFrame({
                "timestamp": np.repeat(self.timestamps.to_numpy(), S),
                "station": np.tile([s.id for s in self.stations], T),
                "variable": var,
                "value": a.reshape(-1),
            }))
        df = pd.concat(frames, ignore_index=True)
        return df.sort_values(["timestamp", "station", "variable"], kind="stable").reset_index(drop=True)

    def observed_long(self) -> pd.DataFrame:
        """Observed Ta and RH; missing samples are omitted."""
        df = self._long({Variable.TA.value: self.obs_ta, Variable.RH.value: self.obs_rh})
        return df.dropna(subset=["value"]).reset_index(drop=True)

    def truth_long(self) -> pd.DataFrame:
        return self._long({Variable.TA.value: self.truth_ta, Variable.RH.value: self.truth_rh,
                           Variable.E.value: self.truth_e})

    def model_long(self, truth: bool = False) -> pd.DataFrame:
        """10-minute Ta and e in the layout consumed by ``build_wide_table``."""
        if truth:
            ta, e = self.truth_ta, self.truth_e
        else:
            ta = self.obs_ta
            e = self.obs_rh / 100.0 * saturation_vapor_pressure(np.where(np.isnan(ta), 0.0, ta))
            e = np.where(np.isnan(ta), np.nan, e)
        df = self._long({Variable.TA.value: ta, Variable.E.value: e})
        return df.dropna(subset=["value"]).reset_index(drop=True)


def exponential_covariance(xy_km: np.ndarray, length_km: float, sigma: float) -> np.ndarray:
    d = np.sqrt(((xy_km[:, None, :] - xy_km[None, :, :]) ** 2).sum(-1))
    return sigma ** 2 * np.exp(-d / length_km)


def ar1(innov: np.ndarray, phi: float) -> np.ndarray:
    """Stationary unit-variance AR(1) along axis 0 driven by standard normal innovations."""
    scaled = innov * np.sqrt(1.0 - phi ** 2)
    scaled[0] = innov[0]
    return lfilter([1.0], [1.0, -phi], scaled, axis=0)


def spatial_noise(xy_km: np.ndarray, length_km: float, sigma: float, phi: float,
                  n_steps: int, rng: np.random.Generator) -> np.ndarray:
    """AR(1)-in-time field whose marginal covariance is exponential in distance."""
    cov = exponential_covariance(xy_km, length_km, sigma)
    # eigh tolerates co-located stations (singular covariance)
    w, v = np.linalg.eigh(cov)
    root = v * np.sqrt(np.clip(w, 0.0, None))
    eps = rng.standard_normal((n_steps, len(xy_km)))
    return ar1(eps, phi) @ root.T


def _layout(cfg: ScenarioConfig, rng: np.random.Generator) -> list[StationSpec]:
    if cfg.stations is not None:
        return list(cfg.stations)
    specs = []
    for i in range(cfg.n_stations):
        cls = STATION_CLASSES[i % len(STATION_CLASSES)]
        specs.append(StationSpec(id=f"S{i:02d}", x_km=float(rng.uniform(0, cfg.extent_km)),
                                 y_km=float(rng.uniform(0, cfg.extent_km)),
                                 elevation=float(np.round(rng.uniform(200, 450), 1)),
                                 station_class=cls))
    return specs


def _front_signal(fronts, t_hours: np.ndarray, xy_km: np.ndarray) -> np.ndarray:
    out = np.zeros((len(t_hours), len(xy_km)))
    for fr in fronts:
        theta = np.deg2rad(fr.direction_deg)
        proj = xy_km[:, 0] * np.cos(theta) + xy_km[:, 1] * np.sin(theta)
        arrival = fr.day * 24.0 + (proj - proj.min()) / fr.speed_kmh
        dt = t_hours[:, None] - arrival[None, :]
        ramp = np.clip(dt / fr.ramp_hours, 0.0, 1.0)
        out += fr.amplitude * ramp * np.exp(-np.clip(dt, 0.0, None) / fr.decay_hours)
    return out


def front_arrival_hours(front: FrontEvent, xy_km: np.ndarray) -> np.ndarray:
    theta = np.deg2rad(front.direction_deg)
    proj = xy_km[:, 0] * np.cos(theta) + xy_km[:, 1] * np.sin(theta)
    return front.day * 24.0 + (proj - proj.min()) / front.speed_kmh


def generate(cfg: ScenarioConfig, seed: int = 0) -> SynthResult:
    rng = np.random.default_rng(seed)
    specs = _layout(cfg, rng)
    ids = [s.id for s in specs]
    if len(set(ids)) != len(ids):
        raise ValueError("station ids must be unique")
    for dup, src in cfg.duplicates.items():
        if dup not in ids or src not in ids:
            raise ValueError(f"duplicate mapping {dup}->{src} names unknown stations")
    S = len(specs)
    xy = np.array([[s.x_km, s.y_km] for s in specs], dtype=float)
    # duplicates share the source position
    for dup, src in cfg.duplicates.items():
        xy[ids.index(dup)] = xy[ids.index(src)]

    steps_per_day = 1440 // cfg.cadence_minutes
    T = cfg.n_days * steps_per_day
    ts = pd.date_range(pd.Timestamp(cfg.start), periods=T, freq=f"{cfg.cadence_minutes}min")
    t_hours = np.arange(T) * cfg.cadence_minutes / 60.0
    hour = np.asarray(ts.hour + ts.minute / 60.0, dtype=float)
    doy = np.asarray(ts.dayofyear, dtype=float) + hour / 24.0

    seasonal = -cfg.seasonal_amplitude * np.cos(2 * np.pi * (doy - 20.0) / 365.25)
    diurnal = cfg.diurnal_amplitude * np.cos(2 * np.pi * (hour - 15.0) / 24.0)
    night_w = 0.5 * (1.0 + np.cos(2 * np.pi * (hour - 3.0) / 24.0))

    synoptic = np.zeros(T)
    if cfg.synoptic_sigma > 0:
        synoptic = cfg.synoptic_sigma / np.sqrt(1 - cfg.synoptic_phi ** 2) * \
            ar1(rng.standard_normal(T), cfg.synoptic_phi)
    spatial = np.zeros((T, S))
    if cfg.spatial_sigma > 0:
        spatial = spatial_noise(xy, cfg.correlation_length_km, cfg.spatial_sigma,
                                cfg.spatial_phi, T, rng)

    ta = np.empty((T, S))
    for i, sp in enumerate(specs):
        day_off, night_off, damp = CLASS_EFFECTS[sp.station_class] if cfg.class_offsets \
            else (0.0, 0.0, 0.0)
        offset = day_off * (1 - night_w) + night_off * night_w
        ta[:, i] = (cfg.base_temp + seasonal + diurnal * (1 - damp) + synoptic + offset
                    + cfg.lapse_rate * (sp.elevation - cfg.reference_elevation))
    ta += spatial + _front_signal(cfg.fronts, t_hours, xy)

    e_common = cfg.e_base - cfg.e_seasonal_amplitude * np.cos(2 * np.pi * (doy - 20.0) / 365.25)
    if cfg.e_sigma > 0:
        e_common = e_common + cfg.e_sigma / np.sqrt(1 - cfg.e_phi ** 2) * \
            ar1(rng.standard_normal(T), cfg.e_phi)
    e_sp = np.zeros((T, S))
    if cfg.e_spatial_sigma > 0:
        e_sp = spatial_noise(xy, cfg.correlation_length_km, cfg.e_spatial_sigma,
                             cfg.spatial_phi, T, rng)
    es = saturation_vapor_pressure(ta)
    e = np.clip(e_common[:, None] + e_sp, 0.05 * es, es)

    obs_ta = ta + cfg.noise_ta * rng.standard_normal((T, S))
    rh_true = 100.0 * e / es
    obs_rh = np.clip(rh_true + cfg.noise_rh * rng.standard_normal((T, S)), 0.0, 100.0)
    for dr in cfg.drifts:
        i = ids.index(dr.station)
        days = t_hours / 24.0 - dr.start_day
        obs_ta[:, i] += np.where(days > 0, dr.k_per_day * days, 0.0)
    for g in cfg.gaps:
        i = ids.index(g.station)
        inside = (t_hours >= g.start_day * 24) & (t_hours < (g.start_day + g.n_days) * 24)
        if g.variable in (None, Variable.TA.value):
            obs_ta[inside, i] = np.nan
        if g.variable in (None, Variable.RH.value):
            obs_rh[inside, i] = np.nan
    for dup, src in cfg.duplicates.items():
        a, b = ids.index(dup), ids.index(src)
        ta[:, a], e[:, a] = ta[:, b], e[:, b]
        obs_ta[:, a], obs_rh[:, a] = obs_ta[:, b], obs_rh[:, b]

    cos_lat = np.cos(np.deg2rad(REF_LAT))
    stations = []
    for i, sp in enumerate(specs):
        src = specs[ids.index(cfg.duplicates[sp.id])] if sp.id in cfg.duplicates else sp
        svf = src.svf if src.svf is not None else CLASS_SVF[src.station_class]
        stations.append(StationMeta(id=sp.id, latitude=REF_LAT + xy[i, 1] / KM_PER_DEG,
                                    longitude=REF_LON + xy[i, 0] / (KM_PER_DEG * cos_lat),
                                    elevation=src.elevation, svf=svf,
                                    station_class=src.station_class))
    return SynthResult(stations=stations, timestamps=ts, xy_km=xy, truth_ta=ta, truth_e=e,
                       obs_ta=obs_ta, obs_rh=obs_rh)
