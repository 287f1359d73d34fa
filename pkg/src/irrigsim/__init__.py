"""Agent-based smart irrigation simulator on a stock-and-flow soil model.

Subpackages by concern: :mod:`soil_dynamics`, :mod:`et_models`,
:mod:`agent_net`, :mod:`sim_engine`, :mod:`doe`, :mod:`stats` and
:mod:`cli_io`.
"""

__version__ = "0.1.0"

from .soil_dynamics import (  # noqa: E402
    CropParams,
    Forcing,
    FlowSet,
    SoilParams,
    SoilState,
    compute_flows,
    mass_balance,
    step,
    stress_coefficient,
    threshold_moisture,
)
from .et_models import (  # noqa: E402
    BlaneyCriddleInput,
    RhoTable,
    WeatherSample,
    blaney_criddle,
    crop_et,
    daily_to_per_minute,
    penman_monteith,
)
from .forecast import ForecastSeries, SeriesForecastProvider  # noqa: E402
from .agent_net import IrrigationPlan, ScheduleWindow, SensorModel  # noqa: E402
from .sim_engine import RunResult, Scenario, responses, run  # noqa: E402

__all__ = [
    "BlaneyCriddleInput",
    "CropParams",
    "FlowSet",
    "Forcing",
    "ForecastSeries",
    "IrrigationPlan",
    "RhoTable",
    "RunResult",
    "Scenario",
    "ScheduleWindow",
    "SensorModel",
    "SeriesForecastProvider",
    "SoilParams",
    "SoilState",
    "WeatherSample",
    "blaney_criddle",
    "compute_flows",
    "crop_et",
    "daily_to_per_minute",
    "mass_balance",
    "penman_monteith",
    "responses",
    "run",
    "step",
    "stress_coefficient",
    "threshold_moisture",
]
