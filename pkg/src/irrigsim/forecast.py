"""Per-minute environmental forcing and the forecast provider built on it."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

COLUMNS = ("minute", "ref_evt_rate", "rain_rate", "temp")


@dataclass(frozen=True)
class ForecastWindow:
    ref_evt_rate: Optional[float]
    rain_rate: float
    temp: Optional[float]


class ForecastSeries:
    """Sparse forcing series with step-hold semantics.

    Each row gives values that hold from its minute until the next row.
    ``ref_evt_rate`` (mm/min) and ``temp`` (deg C) may be NaN/None where
    unknown; ``rain_rate`` (mm/min) defaults to zero.
    """

    def __init__(self, minutes, ref_evt_rate, rain_rate=None, temp=None):
        minutes = [int(m) for m in minutes]
        n = len(minutes)
        if n == 0:
            raise ValueError("forcing series needs at least one row")
        if minutes[0] != 0:
            raise ValueError("forcing series must start at minute 0")
        if any(b <= a for a, b in zip(minutes, minutes[1:])):
            raise ValueError("forcing minutes must be strictly increasing")
        self.minutes = tuple(minutes)
        self.ref_evt_rate = tuple(_opt(v) for v in ref_evt_rate)
        self.rain_rate = tuple(0.0 if _opt(v) is None else float(v) for v in (rain_rate or [0.0] * n))
        self.temp = tuple(_opt(v) for v in (temp or [None] * n))
        if not (len(self.ref_evt_rate) == len(self.rain_rate) == len(self.temp) == n):
            raise ValueError("forcing columns must have equal length")
        for v in self.ref_evt_rate:
            if v is not None and v < 0:
                raise ValueError("ref_evt_rate must be >= 0")
        if any(v < 0 for v in self.rain_rate):
            raise ValueError("rain_rate must be >= 0")

    @classmethod
    def constant(cls, ref_evt_rate: float, rain_rate: float = 0.0, temp=None) -> "ForecastSeries":
        return cls([0], [ref_evt_rate], [rain_rate], [temp])

    def __eq__(self, other):
        if not isinstance(other, ForecastSeries):
            return NotImplemented
        return self.rows() == other.rows()

    def __repr__(self):
        return f"ForecastSeries({len(self.minutes)} rows)"

    def rows(self):
        return [
            (m, e, r, t)
            for m, e, r, t in zip(self.minutes, self.ref_evt_rate, self.rain_rate, self.temp)
        ]

    def expand(self, length: int):
        """Per-minute arrays ``(et0, rain, temp)`` of ``length`` entries.

        Unknown ET0 or temperature become NaN.
        """
        idx = np.searchsorted(np.asarray(self.minutes), np.arange(length), side="right") - 1
        et0 = np.array([np.nan if v is None else v for v in self.ref_evt_rate])[idx]
        rain = np.asarray(self.rain_rate, dtype=float)[idx]
        temp = np.array([np.nan if v is None else v for v in self.temp])[idx]
        return et0, rain, temp

    @classmethod
    def load_csv(cls, path) -> "ForecastSeries":
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = set(COLUMNS[:2]) - set(reader.fieldnames or ())
            if missing:
                raise ValueError(f"{path}: missing forcing columns {sorted(missing)}")
            rows = list(reader)
        return cls(
            [r["minute"] for r in rows],
            [r["ref_evt_rate"] for r in rows],
            [r.get("rain_rate", "") for r in rows],
            [r.get("temp", "") for r in rows],
        )

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(COLUMNS)
            for m, e, r, t in self.rows():
                w.writerow([m, "" if e is None else repr(e), repr(r), "" if t is None else repr(t)])


def _opt(v):
    if v is None:
        return None
    if isinstance(v, str):
        v = v.strip()
        if v == "" or v.lower() == "nan":
            return None
    v = float(v)
    return None if math.isnan(v) else v


class SeriesForecastProvider:
    """Forecast provider backed by a forcing series.

    ``outages`` is a list of ``(start, end)`` minute ranges during which
    the provider is unreachable.
    """

    def __init__(self, series: ForecastSeries, length: int, outages: Sequence = ()):
        self.length = length
        self.et0, self.rain, self.temp = series.expand(length)
        self.outages = tuple((int(a), int(b)) for a, b in outages)
        self._minutes = np.asarray(series.minutes)
        # prefix sums for O(1) window means; NaN-aware via counts
        known = ~np.isnan(self.et0)
        self._et_cum = np.concatenate([[0.0], np.cumsum(np.where(known, self.et0, 0.0))])
        self._et_n = np.concatenate([[0], np.cumsum(known)])
        tknown = ~np.isnan(self.temp)
        self._t_cum = np.concatenate([[0.0], np.cumsum(np.where(tknown, self.temp, 0.0))])
        self._t_n = np.concatenate([[0], np.cumsum(tknown)])
        self._r_cum = np.concatenate([[0.0], np.cumsum(self.rain)])

    def available(self, t: int) -> bool:
        return not any(a <= t < b for a, b in self.outages)

    def window(self, t0: int, t1: int) -> Optional[ForecastWindow]:
        if not self.available(t0):
            return None
        t0 = max(0, min(t0, self.length - 1))
        t1 = max(t0 + 1, min(t1, self.length))
        seg = np.searchsorted(self._minutes, [t0, t1 - 1], side="right")
        if seg[0] == seg[1]:
            # one step-hold segment: report its values exactly
            e, t = self.et0[t0], self.temp[t0]
            return ForecastWindow(
                None if np.isnan(e) else float(e), float(self.rain[t0]), None if np.isnan(t) else float(t)
            )
        n = self._et_n[t1] - self._et_n[t0]
        et = float((self._et_cum[t1] - self._et_cum[t0]) / n) if n else None
        nt = self._t_n[t1] - self._t_n[t0]
        temp = float((self._t_cum[t1] - self._t_cum[t0]) / nt) if nt else None
        rain = float((self._r_cum[t1] - self._r_cum[t0]) / (t1 - t0))
        return ForecastWindow(et, rain, temp)


def load_series(path: Path) -> ForecastSeries:
    return ForecastSeries.load_csv(path)
