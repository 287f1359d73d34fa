"""
Soil water balance in a single root zone
========================================

Walks through the stock-and-flow soil model: stress coefficient, a flood
that saturates the column, and a dry-down to the wilting point.
"""

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

soil = SoilParams(
    wilting_point=0.10,
    field_capacity=0.30,
    saturation=0.45,
    percolation_rate=0.01,
    max_infiltration_rate=0.5,
    runoff_coeff=0.2,
    root_zone=1000.0,
    p_fraction=0.5,
)
crop = CropParams(kcb=0.9, ke=0.2)

# Plants start to feel stress below the threshold moisture.
th = threshold_moisture(soil)
print(f"threshold moisture: {th:.3f}")
for theta in np.linspace(soil.wilting_point, soil.field_capacity, 5):
    print(f"  theta={theta:.3f}  Ks={stress_coefficient(theta, soil):.2f}")

# Flood the column: infiltration is capped, water ponds and runs off.
state = SoilState(soil_water=0.25 * soil.root_zone)
flood = Forcing(irrigation_rate=2.0, ref_evt_rate=0.005)
for minute in range(600):
    state = step(state, soil, crop, flood)
print(f"\nafter 10 h of flooding: theta={state.soil_water / soil.root_zone:.4f}, "
      f"ponded={state.surface_water:.1f} mm, runoff so far={state.total_runoff:.1f} mm")

# Stop the supply and let the crop dry the soil out.
dry = Forcing(ref_evt_rate=0.02)
for day in range(1, 31):
    for _ in range(1440):
        state = step(state, soil, crop, dry)
    if day % 5 == 0:
        f = compute_flows(state, soil, crop, dry)
        print(f"day {day:2d}: theta={state.soil_water / soil.root_zone:.4f}  ET={f.evapotranspiration * 1440:.2f} mm/day")
