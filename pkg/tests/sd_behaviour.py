"""The twelve scripted behaviour checks for the soil model.

Each check returns ``(passed, detail)`` so the same scripts serve the unit
tests and the acceptance report.
"""
from dataclasses import replace

import numpy as np

from irrigsim.soil_dynamics import (
    CropParams,
    Forcing,
    SoilParams,
    SoilState,
    compute_flows,
    step,
    stress_coefficient,
    threshold_moisture,
)

SOIL = SoilParams(
    wilting_point=0.1,
    field_capacity=0.3,
    saturation=0.45,
    percolation_rate=0.01,
    max_infiltration_rate=0.5,
    runoff_coeff=0.2,
    root_zone=1000.0,
    p_fraction=0.5,
)
CROP = CropParams(kcb=0.9, ke=0.2)
ET0 = 0.005


def at(theta, surface=0.0):
    return SoilState(surface_water=surface, soil_water=theta * SOIL.root_zone)


def simulate(state, forcing, n, soil=SOIL):
    states, flows = [state], []
    for _ in range(n):
        flows.append(compute_flows(state, soil, CROP, forcing))
        state = step(state, soil, CROP, forcing)
        states.append(state)
    return states, flows


def t01_no_supply_no_infiltration():
    f = compute_flows(at(0.2), SOIL, CROP, Forcing(ref_evt_rate=ET0))
    return f.infiltration == 0.0, f"infiltration={f.infiltration}"


def t02_slow_irrigation_fully_infiltrates():
    f = compute_flows(at(0.2), SOIL, CROP, Forcing(irrigation_rate=0.2, ref_evt_rate=ET0))
    return f.infiltration == 0.2, f"infiltration={f.infiltration}"


def t03_fast_irrigation_capped():
    f = compute_flows(at(0.2), SOIL, CROP, Forcing(irrigation_rate=2.0, ref_evt_rate=ET0))
    return f.infiltration == SOIL.max_infiltration_rate, f"infiltration={f.infiltration}"


def t04_saturated_soil_ponds():
    s0 = at(SOIL.saturation)
    fo = Forcing(irrigation_rate=0.3)
    f = compute_flows(s0, SOIL, CROP, fo)
    s1 = step(s0, SOIL, CROP, fo)
    ok = f.infiltration == 0.0 and s1.surface_water > 0.0
    return ok, f"infiltration={f.infiltration}, ponded={s1.surface_water}"


def t05_percolation_above_field_capacity():
    f = compute_flows(at(SOIL.field_capacity + 0.05), SOIL, CROP, Forcing())
    return f.percolation == SOIL.percolation_rate, f"percolation={f.percolation}"


def t06_no_percolation_below_field_capacity():
    f = compute_flows(at(SOIL.field_capacity - 0.01), SOIL, CROP, Forcing())
    return f.percolation == 0.0, f"percolation={f.percolation}"


def t07_unstressed_et():
    theta = 0.5 * (threshold_moisture(SOIL) + SOIL.field_capacity)
    s0 = at(theta)
    f = compute_flows(s0, SOIL, CROP, Forcing(ref_evt_rate=ET0))
    s1 = step(s0, SOIL, CROP, Forcing(ref_evt_rate=ET0))
    want = ET0 * (CROP.kcb + CROP.ke)
    drop = s0.soil_water - s1.soil_water
    ok = np.isclose(f.evapotranspiration, want, rtol=1e-12) and np.isclose(drop, want, rtol=1e-9)
    return ok, f"et={f.evapotranspiration}, expected={want}, drop={drop}"


def _flood(soil, n=800):
    return simulate(at(0.42), Forcing(irrigation_rate=5.0, ref_evt_rate=ET0), n, soil)


def _saturation_index(states, soil):
    sat = soil.saturation * soil.root_zone
    for i, s in enumerate(states):
        if s.soil_water >= sat * (1 - 1e-12):
            return i
    return None


def t08_flood_ponds_linearly():
    # ponded water without runoff grows at the supply minus the small
    # infiltration needed to hold the column at saturation
    soil = replace(SOIL, runoff_coeff=0.0)
    states, _ = _flood(soil)
    k = _saturation_index(states, soil)
    if k is None:
        return False, "never saturated"
    w = np.array([s.soil_water for s in states[: k + 1]])
    rising = bool(np.all(np.diff(w) >= 0))
    pond = np.array([s.surface_water for s in states[k:]])
    t = np.arange(pond.size)
    slope, icpt = np.polyfit(t, pond, 1)
    dev = float(np.max(np.abs(pond - (slope * t + icpt))))
    ok = rising and slope > 0 and dev <= 1e-3 * (pond[-1] - pond[0])
    return ok, f"saturated at step {k}, slope={slope:.6g} mm/min, max deviation from line={dev:.3g} mm"


def t09_flood_holds_saturation():
    states, _ = _flood(SOIL)
    k = _saturation_index(states, SOIL)
    if k is None:
        return False, "never saturated"
    theta = np.array([s.soil_water for s in states[k:]]) / SOIL.root_zone
    # one minute of percolation plus ET is the widest admissible dip
    band = (SOIL.percolation_rate + ET0 * (CROP.kcb + CROP.ke)) / SOIL.root_zone
    ok = theta.max() <= SOIL.saturation * (1 + 1e-12) and theta.min() >= SOIL.saturation - band - 1e-12
    return ok, f"saturated at step {k}, theta in [{theta.min():.8f}, {theta.max():.8f}]"


def t10_drydown_to_wilting_point():
    et0 = 0.05
    states, _ = simulate(at(0.25), Forcing(ref_evt_rate=et0), 20000)
    theta = np.array([s.soil_water for s in states]) / SOIL.root_zone
    monotone = bool(np.all(np.diff(theta) <= 0))
    ok = monotone and theta.min() >= SOIL.wilting_point - 1e-12 and abs(theta[-1] - SOIL.wilting_point) < 1e-9
    return ok, f"final theta={theta[-1]:.10f}, wilting point={SOIL.wilting_point}"


def t11_runoff_proportional():
    states, flows = simulate(at(0.2), Forcing(irrigation_rate=2.0, ref_evt_rate=ET0), 200)
    checks = [
        np.isclose(f.runoff, SOIL.runoff_coeff * s.surface_water, rtol=1e-12)
        for s, f in zip(states, flows)
        if s.surface_water > 0
    ]
    total = states[-1].total_runoff
    ok = len(checks) > 100 and all(checks) and total > 0
    return ok, f"{len(checks)} ponded steps, total runoff={total:.4f} mm"


def t12_stressed_et_linear():
    et0 = 0.05
    th = threshold_moisture(SOIL)
    states, flows = simulate(at(th - 0.001), Forcing(ref_evt_rate=et0), 3000)
    theta = np.array([s.soil_water for s in states[:-1]]) / SOIL.root_zone
    et = np.array([f.evapotranspiration for f in flows])
    keep = theta > SOIL.wilting_point + 1e-6
    expected = et0 * (np.array([stress_coefficient(x, SOIL) for x in theta[keep]]) * CROP.kcb + CROP.ke)
    slope, icpt = np.polyfit(theta[keep], et[keep], 1)
    resid = float(np.max(np.abs(et[keep] - (slope * theta[keep] + icpt))))
    decreasing = bool(np.all(np.diff(et[keep]) <= 1e-15))
    ok = decreasing and np.allclose(et[keep], expected, rtol=1e-12) and resid < 1e-12 and slope > 0
    return ok, f"ET vs theta slope={slope:.6g}, max nonlinearity={resid:.2g}"


CHECKS = [
    t01_no_supply_no_infiltration,
    t02_slow_irrigation_fully_infiltrates,
    t03_fast_irrigation_capped,
    t04_saturated_soil_ponds,
    t05_percolation_above_field_capacity,
    t06_no_percolation_below_field_capacity,
    t07_unstressed_et,
    t08_flood_ponds_linearly,
    t09_flood_holds_saturation,
    t10_drydown_to_wilting_point,
    t11_runoff_proportional,
    t12_stressed_et_linear,
]
