"""Reference evapotranspiration and crop water use.

Daily ET0 from either the FAO-56 Penman-Monteith form or the
Blaney-Criddle temperature method, conversion to per-minute rates, and
the dual crop coefficient composition ``(Ks*Kcb + Ke) * ET0``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .soil_dynamics import CropParams

MINUTES_PER_DAY = 1440


@dataclass(frozen=True)
class WeatherSample:
    """Daily meteorological inputs for Penman-Monteith.

    Units follow FAO-56: ``delta_svp`` and ``psychrometric_const`` in kPa/degC,
    radiation terms in MJ m-2 day-1, wind in m/s at 2 m, vapour pressures in kPa.
    """

    delta_svp: float
    net_irradiance: float
    ground_heat_flux: float
    psychrometric_const: float
    wind_2m: float
    temp_2m: float
    sat_vapor_pressure: float
    ambient_vapor_pressure: float

    def __post_init__(self):
        if not self.sat_vapor_pressure >= self.ambient_vapor_pressure >= 0:
            raise ValueError("vapour pressures must satisfy e_s >= e_a >= 0")
        if self.wind_2m < 0:
            raise ValueError("wind_2m must be >= 0")
        if not (self.delta_svp > 0 and self.psychrometric_const > 0):
            raise ValueError("delta_svp and psychrometric_const must be > 0")


@dataclass(frozen=True)
class BlaneyCriddleInput:
    temp_mean: float
    rho: float

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"rho must be > 0, got {self.rho}")


def penman_monteith(w: WeatherSample) -> float:
    """Daily grass-reference ET0 in mm/day, clamped at zero."""
    radiation = 0.408 * w.delta_svp * (w.net_irradiance - w.ground_heat_flux)
    aero = (
        w.psychrometric_const
        * (900.0 / (w.temp_2m + 273.0))
        * w.wind_2m
        * (w.sat_vapor_pressure - w.ambient_vapor_pressure)
    )
    denom = w.delta_svp + w.psychrometric_const * (1.0 + 0.34 * w.wind_2m)
    return max(0.0, (radiation + aero) / denom)


def blaney_criddle(temp_mean, rho: Optional[float] = None) -> float:
    """Daily ET0 in mm/day from mean temperature and the daylight factor ``rho``.

    Accepts either ``(temp_mean, rho)`` or a single :class:`BlaneyCriddleInput`.
    A bare ``rho`` of zero is allowed here and gives 0.
    """
    if isinstance(temp_mean, BlaneyCriddleInput):
        temp_mean, rho = temp_mean.temp_mean, temp_mean.rho
    if rho is None:
        raise TypeError("blaney_criddle needs rho")
    if rho < 0:
        raise ValueError(f"rho must be >= 0, got {rho}")
    return max(0.0, rho * (0.46 * temp_mean + 8.0))


def daily_to_per_minute(et0_daily: float) -> float:
    if et0_daily < 0:
        raise ValueError("et0_daily must be >= 0")
    return et0_daily / MINUTES_PER_DAY


def crop_et(et0_rate: float, crop: CropParams, ks: float = 1.0) -> float:
    """Actual crop ET rate; same units as ``et0_rate``."""
    if et0_rate < 0:
        raise ValueError("et0_rate must be >= 0")
    if not 0.0 <= ks <= 1.0:
        raise ValueError(f"ks must lie in [0, 1], got {ks}")
    return et0_rate * (ks * crop.kcb + crop.ke)


class RhoTable:
    """Blaney-Criddle daylight factors by latitude band and month.

    The file is whitespace- or comma-separated with a header
    ``latitude month rho``; latitude is the band's signed centre in degrees
    and month is 1..12.  Lookups pick the nearest tabulated latitude.
    """

    def __init__(self, rows):
        self._rows = {}
        for lat, month, rho in rows:
            month = int(month)
            if not 1 <= month <= 12:
                raise ValueError(f"month out of range: {month}")
            self._rows[(float(lat), month)] = float(rho)
        if not self._rows:
            raise ValueError("empty rho table")
        self._lats = sorted({lat for lat, _ in self._rows})

    @classmethod
    def load(cls, path) -> "RhoTable":
        text = Path(path).read_text()
        lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
        dialect_comma = "," in lines[0]
        if dialect_comma:
            reader = csv.reader(lines)
        else:
            reader = (ln.split() for ln in lines)
        header = [h.strip().lower() for h in next(reader)]
        if header != ["latitude", "month", "rho"]:
            raise ValueError(f"rho table header must be 'latitude month rho', got {header}")
        return cls([tuple(r) for r in reader])

    @classmethod
    def default(cls) -> "RhoTable":
        return cls.load(Path(__file__).with_name("data") / "blaney_criddle_rho.txt")

    def lookup(self, latitude: float, month: int) -> float:
        lat = min(self._lats, key=lambda x: (abs(x - latitude), x))
        try:
            return self._rows[(lat, int(month))]
        except KeyError:
            raise KeyError(f"no rho entry for latitude {lat}, month {month}") from None
