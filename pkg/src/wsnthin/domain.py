"""Station metadata, variable conventions and humidity conversions.

Units are fixed throughout the package: air temperature in degrees Celsius,
relative humidity in percent and vapour pressure in hPa.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

# Teten coefficients. The prefactor is in kPa and converted to hPa once here.
TETEN_A_KPA = 0.61078
TETEN_B = 17.7
TETEN_C = 237.3
KPA_TO_HPA = 10.0


class DomainError(ValueError):
    """Input outside the mathematical domain of a conversion."""


class SupersaturationWarning(UserWarning):
    """Relative humidity above 100 % was produced from model output."""


class Variable(str, enum.Enum):
    TA = "Ta"
    RH = "RH"
    E = "e"

    @property
    def unit(self) -> str:
        return {"Ta": "degC", "RH": "%", "e": "hPa"}[self.value]


# Variables carried in the wide table, in column order per station.
MODELED_VARIABLES = (Variable.TA, Variable.E)

STATION_CLASSES = ("built-up", "open", "forest", "water-adjacent")


@dataclass(frozen=True)
class StationMeta:
    id: str
    latitude: float
    longitude: float
    elevation: float
    svf: float
    station_class: str = "open"

    def __post_init__(self):
        if not 0.0 <= self.svf <= 1.0:
            raise ValueError(f"station {self.id}: svf {self.svf} outside [0, 1]")
        if not np.isfinite(self.elevation):
            raise ValueError(f"station {self.id}: elevation must be finite")
        if self.station_class not in STATION_CLASSES:
            raise ValueError(f"station {self.id}: unknown class {self.station_class!r}")


def check_unique_ids(stations) -> None:
    ids = [s.id for s in stations]
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate station ids: {dup}")


def saturation_vapor_pressure(ta_celsius):
    """Saturation vapour pressure over water in hPa.

    Accepts scalars or arrays; NaN propagates. Raises ``DomainError`` for
    temperatures at or below the pole of the exponent (-237.3 degC).
    """
    ta = np.asarray(ta_celsius, dtype=float)
    if np.any(ta <= -TETEN_C):
        raise DomainError(f"temperature must exceed {-TETEN_C} degC")
    es = KPA_TO_HPA * TETEN_A_KPA * np.exp(TETEN_B * ta / (ta + TETEN_C))
    return es if es.ndim else float(es)


def rh_to_e(rh_percent, ta_celsius):
    rh = np.asarray(rh_percent, dtype=float)
    if np.any((rh < 0.0) | (rh > 100.0)):
        raise ValueError("relative humidity must lie in [0, 100] %")
    e = rh / 100.0 * saturation_vapor_pressure(ta_celsius)
    return e if np.ndim(e) else float(e)


def e_to_rh(e_hpa, ta_celsius, warn: bool = True):
    """Relative humidity in percent from vapour pressure and temperature.

    Values above 100 % (possible for model output) are returned unchanged;
    a ``SupersaturationWarning`` is issued unless ``warn`` is False.
    """
    e = np.asarray(e_hpa, dtype=float)
    if np.any(e < 0.0):
        raise DomainError("vapour pressure must be non-negative")
    rh = 100.0 * e / saturation_vapor_pressure(ta_celsius)
    if warn and np.any(rh > 100.0):
        warnings.warn("relative humidity above 100 %", SupersaturationWarning, stacklevel=2)
    return rh if np.ndim(rh) else float(rh)
