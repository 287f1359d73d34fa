"""Stock-and-flow soil moisture model.

Five stocks (surface water, soil water and three cumulative outflow
totals) are advanced by explicit Euler steps.  All depths are in mm and
all rates in mm/min, so the canonical step is one minute.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

__all__ = [
    "SoilParams",
    "CropParams",
    "SoilState",
    "Forcing",
    "FlowSet",
    "threshold_moisture",
    "stress_coefficient",
    "compute_flows",
    "step",
    "mass_balance",
]


@dataclass(frozen=True)
class SoilParams:
    """Soil constants.

    Moisture levels are volumetric fractions; ``root_zone`` is a depth in mm
    so that ``theta * root_zone`` is the soil water content in mm.
    """

    wilting_point: float
    field_capacity: float
    saturation: float
    percolation_rate: float
    max_infiltration_rate: float
    runoff_coeff: float
    root_zone: float
    p_fraction: float

    def __post_init__(self):
        if not 0.0 <= self.wilting_point < self.field_capacity < self.saturation <= 1.0:
            raise ValueError(
                "soil moisture levels must satisfy 0 <= wilting_point < field_capacity "
                f"< saturation <= 1, got wp={self.wilting_point}, "
                f"fc={self.field_capacity}, st={self.saturation}"
            )
        if not 0.0 <= self.p_fraction <= 1.0:
            raise ValueError(f"p_fraction must lie in [0, 1], got {self.p_fraction}")
        if not 0.0 <= self.runoff_coeff <= 1.0:
            raise ValueError(f"runoff_coeff must lie in [0, 1], got {self.runoff_coeff}")
        if self.percolation_rate < 0:
            raise ValueError("percolation_rate must be >= 0")
        if not self.max_infiltration_rate > 0:
            raise ValueError("max_infiltration_rate must be > 0")
        if not self.root_zone > 0:
            raise ValueError("root_zone must be > 0")

    @property
    def threshold(self) -> float:
        return threshold_moisture(self)


@dataclass(frozen=True)
class CropParams:
    """Dual crop coefficient: transpiration (``kcb``) and evaporation (``ke``)."""

    kcb: float
    ke: float

    def __post_init__(self):
        if self.kcb < 0 or self.ke < 0:
            raise ValueError(f"crop coefficients must be >= 0, got kcb={self.kcb}, ke={self.ke}")


@dataclass(frozen=True)
class SoilState:
    surface_water: float = 0.0
    soil_water: float = 0.0
    total_evt: float = 0.0
    total_percolation: float = 0.0
    total_runoff: float = 0.0

    def theta(self, params: SoilParams) -> float:
        return self.soil_water / params.root_zone

    @classmethod
    def at_moisture(cls, theta: float, params: SoilParams) -> "SoilState":
        return cls(soil_water=theta * params.root_zone)


@dataclass(frozen=True)
class Forcing:
    irrigation_rate: float = 0.0
    rain_rate: float = 0.0
    ref_evt_rate: float = 0.0

    def __post_init__(self):
        if min(self.irrigation_rate, self.rain_rate, self.ref_evt_rate) < 0:
            raise ValueError(f"forcing rates must be >= 0: {self}")


@dataclass(frozen=True)
class FlowSet:
    infiltration: float
    percolation: float
    evapotranspiration: float
    runoff: float
    irrigation_and_rain: float


def threshold_moisture(params: SoilParams) -> float:
    """Moisture below which the crop is water stressed.

    The readily available water is ``p * TAW`` measured down from field
    capacity, so the threshold is ``fc - p * (fc - wp)``.
    """
    fc, wp = params.field_capacity, params.wilting_point
    return fc - params.p_fraction * (fc - wp)


def stress_coefficient(theta: float, params: SoilParams) -> float:
    """Transpiration reduction factor Ks in [0, 1].

    Linear between the wilting point (0) and the threshold (1).  When the
    threshold collapses onto the wilting point (``p_fraction == 1``) Ks is a
    step at the wilting point.
    """
    th = threshold_moisture(params)
    wp = params.wilting_point
    if theta >= th:
        return 1.0
    if th <= wp:
        return 1.0 if theta >= wp else 0.0
    return min(1.0, max(0.0, (theta - wp) / (th - wp)))


def _flows(sw, surface, params, kcb, ke, irrigation, rain, et0, dt):
    # Hot path shared by compute_flows and the simulation engine; works on
    # plain floats.  Returns (infiltration, percolation, et, runoff, supply).
    rz = params.root_zone
    theta = sw / rz
    supply = irrigation + rain
    sat_water = params.saturation * rz

    if theta >= params.saturation:
        infil = 0.0
    else:
        infil = min(params.max_infiltration_rate, supply + surface / dt)

    # percolation drains only the excess above field capacity
    fc_water = params.field_capacity * rz
    if sw > fc_water:
        perc = min(params.percolation_rate, (sw - fc_water) / dt)
    else:
        perc = 0.0

    wp_water = params.wilting_point * rz
    if sw > wp_water:
        et = et0 * (stress_coefficient(theta, params) * kcb + ke)
        # what remains above the wilting point after percolation
        avail = (sw - wp_water) / dt + infil - perc
        if et > avail:
            et = max(0.0, avail)
    else:
        et = 0.0

    # stock cannot exceed saturation within a step
    room = (sat_water - sw) / dt + perc + et
    if infil > room:
        infil = max(0.0, room)

    if surface > 0.0:
        runoff = params.runoff_coeff * surface
        cap = surface / dt + supply - infil
        if runoff > cap:
            runoff = max(0.0, cap)
    else:
        runoff = 0.0
    return infil, perc, et, runoff, supply


def compute_flows(
    state: SoilState,
    params: SoilParams,
    crop: CropParams,
    forcing: Forcing,
    dt: float = 1.0,
) -> FlowSet:
    """Evaluate every flow for one step of length ``dt`` minutes.

    Flows are already clipped so that applying them for ``dt`` keeps all
    stocks inside their admissible ranges.
    """
    infil, perc, et, runoff, supply = _flows(
        state.soil_water,
        state.surface_water,
        params,
        crop.kcb,
        crop.ke,
        forcing.irrigation_rate,
        forcing.rain_rate,
        forcing.ref_evt_rate,
        dt,
    )
    return FlowSet(
        infiltration=infil,
        percolation=perc,
        evapotranspiration=et,
        runoff=runoff,
        irrigation_and_rain=supply,
    )


def step(
    state: SoilState,
    params: SoilParams,
    crop: CropParams,
    forcing: Forcing,
    dt: float = 1.0,
) -> SoilState:
    """Advance the stocks by one explicit Euler step."""
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    f = compute_flows(state, params, crop, forcing, dt)
    return apply_flows(state, f, dt)


def apply_flows(state: SoilState, f: FlowSet, dt: float) -> SoilState:
    surface = state.surface_water + (f.irrigation_and_rain - f.infiltration - f.runoff) * dt
    soil = state.soil_water + (f.infiltration - f.percolation - f.evapotranspiration) * dt
    # round-off only; the flows were clipped against these bounds
    return SoilState(
        surface_water=max(surface, 0.0),
        soil_water=max(soil, 0.0),
        total_evt=state.total_evt + f.evapotranspiration * dt,
        total_percolation=state.total_percolation + f.percolation * dt,
        total_runoff=state.total_runoff + f.runoff * dt,
    )


def mass_balance(before: SoilState, after: SoilState, flows: FlowSet, dt: float = 1.0) -> float:
    """Water created (positive) or destroyed by one step, in mm."""
    inflow = flows.irrigation_and_rain * dt
    stored = (after.surface_water - before.surface_water) + (after.soil_water - before.soil_water)
    lost = (
        (after.total_evt - before.total_evt)
        + (after.total_percolation - before.total_percolation)
        + (after.total_runoff - before.total_runoff)
    )
    return inflow - (stored + lost)


def is_finite_state(state: SoilState) -> bool:
    return all(
        math.isfinite(v)
        for v in (
            state.surface_water,
            state.soil_water,
            state.total_evt,
            state.total_percolation,
            state.total_runoff,
        )
    )
