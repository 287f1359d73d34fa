"""
Reference evapotranspiration
============================

Penman-Monteith from a full weather sample, the temperature-only
Blaney-Criddle fallback, and the per-minute rates the simulator uses.
"""

from irrigsim.et_models import (
    RhoTable,
    WeatherSample,
    blaney_criddle,
    crop_et,
    daily_to_per_minute,
    penman_monteith,
)
from irrigsim.soil_dynamics import CropParams

# A mild spring day.
w = WeatherSample(
    delta_svp=0.122,
    net_irradiance=13.28,
    ground_heat_flux=0.0,
    psychrometric_const=0.0666,
    wind_2m=2.078,
    temp_2m=16.9,
    sat_vapor_pressure=1.997,
    ambient_vapor_pressure=1.409,
)
et0_pm = penman_monteith(w)
print(f"Penman-Monteith ET0: {et0_pm:.3f} mm/day")

# Without radiation and humidity data only temperature and day length remain.
rho = RhoTable.default()
for lat in (0, 20, 40):
    july = blaney_criddle(w.temp_2m, rho.lookup(lat, 7))
    print(f"Blaney-Criddle ET0 at {lat:2d} N in July: {july:.3f} mm/day")

# The simulator works per minute; the crop scales the reference rate.
rate = daily_to_per_minute(et0_pm)
crop = CropParams(kcb=1.15, ke=0.3)
print(f"\nper minute: {rate:.6f} mm/min, crop ET: {crop_et(rate, crop):.6f} mm/min")
print(f"at half stress: {crop_et(rate, crop, 0.5):.6f} mm/min")
