"""Minute-tick simulation coupling the device agents to the soil model.

Each tick runs, in order: agent lifecycles, message exchange among the
agents that are awake, valve commands, the soil update, and response
bookkeeping.  Responses are collected only after the warm-up.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import agent_net as ag
from .agent_net import (
    AgentMessage,
    CentralAgent,
    ControllerAgent,
    IrrigationPlan,
    MessageKind,
    Phase,
    SensorAgent,
    SensorModel,
    WaterBudget,
)
from .et_models import blaney_criddle, daily_to_per_minute
from .forecast import ForecastSeries, SeriesForecastProvider
from .soil_dynamics import CropParams, SoilParams, _flows, threshold_moisture

SOIL_SENSOR = "soil_sensor"
RAIN_SENSOR = "rain_sensor"
CENTRAL = "central"
CONTROLLER = "controller"
AGENT_IDS = (SOIL_SENSOR, RAIN_SENSOR, CENTRAL, CONTROLLER)

DEFAULT_RAIN_SENSOR = SensorModel(floor=-1.0, ceiling=1000.0)


class ScenarioError(ValueError):
    """A scenario violates one of its invariants; ``field`` names the culprit."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class SimulationInvariantError(RuntimeError):
    pass


@dataclass(frozen=True)
class Scenario:
    soil: SoilParams
    crop: CropParams
    forcing: ForecastSeries
    plan: IrrigationPlan = IrrigationPlan()
    wake_period: int = 20
    irrigation_rate: float = 0.1
    warm_up: int = 2880
    run_length: int = 17280
    seed: int = 0
    initial_theta: Optional[float] = None
    failure_prob: float = 0.0
    soil_sensor: SensorModel = SensorModel()
    rain_sensor: SensorModel = DEFAULT_RAIN_SENSOR
    initial_water: Optional[float] = None
    lookahead: int = 1440
    forecast_outages: tuple = ()
    rho: Optional[float] = None
    dt: float = 1.0

    def __post_init__(self):
        object.__setattr__(
            self, "forecast_outages", tuple((int(a), int(b)) for a, b in self.forecast_outages)
        )
        self.validate()

    @property
    def theta0(self) -> float:
        if self.initial_theta is not None:
            return self.initial_theta
        th = threshold_moisture(self.soil)
        return 0.5 * (th + self.soil.field_capacity)

    @property
    def period(self) -> int:
        """Minutes between consecutive tasks phases."""
        return self.wake_period + ag.WAKE_OVERHEAD_MINUTES

    def validate(self) -> None:
        if int(self.wake_period) != self.wake_period or self.wake_period <= 0:
            raise ScenarioError("wake_period", "must be a positive whole number of minutes")
        if not self.irrigation_rate > 0:
            raise ScenarioError("irrigation_rate", "must be > 0")
        if not 0 <= self.warm_up < self.run_length:
            raise ScenarioError("warm_up", f"must satisfy 0 <= warm_up < run_length ({self.run_length})")
        th = threshold_moisture(self.soil)
        if self.initial_theta is not None and not th <= self.initial_theta <= self.soil.field_capacity:
            raise ScenarioError(
                "initial_theta",
                f"must lie in [threshold {th:.6g}, field capacity {self.soil.field_capacity}]",
            )
        try:
            self.plan.validate_against(self.soil)
        except ValueError as exc:
            raise ScenarioError("plan.morning_target", str(exc)) from None
        if not 0.0 <= self.failure_prob <= 1.0:
            raise ScenarioError("failure_prob", "must lie in [0, 1]")
        if not 0 < self.dt <= 1 or abs(round(1 / self.dt) - 1 / self.dt) > 1e-9:
            raise ScenarioError("dt", "must divide one minute evenly")
        if self.lookahead <= 0:
            raise ScenarioError("lookahead", "must be > 0")
        if self.initial_water is not None and self.initial_water < 0:
            raise ScenarioError("initial_water", "must be >= 0")
        if any(v is None for v in self.forcing.ref_evt_rate):
            if self.rho is None or any(
                e is None and t is None for e, t in zip(self.forcing.ref_evt_rate, self.forcing.temp)
            ):
                raise ScenarioError(
                    "forcing", "rows without ref_evt_rate need a temperature and a scenario rho"
                )


@dataclass(frozen=True)
class EventRecord:
    t: int
    agent: str
    kind: str
    payload: dict = field(default_factory=dict)


@dataclass
class RunResult:
    below_threshold_count: int
    percolated: float
    irrigated: float
    evapotranspired: float
    operating_time: int
    wake_cycles: int
    irrigation_minutes: int
    final_state: tuple
    mass_residual: float
    max_theta: float
    min_theta: float
    event_log: list = field(default_factory=list)
    trace: Optional[dict] = None

    @property
    def error(self) -> float:
        return self.irrigated - self.evapotranspired

    @property
    def error_sq(self) -> float:
        return self.error ** 2

    @property
    def relative_error_sq(self) -> float:
        return relative_error_sq(self.irrigated, self.evapotranspired)

    def responses(self):
        return responses(self)

    def summary(self) -> dict:
        return {
            "below_threshold_count": self.below_threshold_count,
            "percolated": self.percolated,
            "irrigated": self.irrigated,
            "evapotranspired": self.evapotranspired,
            "operating_time": self.operating_time,
            "error_sq": self.error_sq,
            "relative_error_sq": self.relative_error_sq,
        }


def relative_error_sq(irrigated: float, required: float) -> float:
    if required == 0:
        return 0.0 if irrigated == 0 else math.inf
    return ((irrigated - required) / required) ** 2


def responses(result: RunResult):
    """The four campaign responses: (R1, R2, R3, R4).

    R3 is the irrigation error ``irrigated - evapotranspired``; its squared
    and relative squared forms are on the result object.
    """
    return (result.below_threshold_count, result.percolated, result.error, result.operating_time)


def agent_rng(seed: int, agent_id: str) -> np.random.Generator:
    """Independent PCG64 stream per (seed, agent id)."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(zlib.crc32(agent_id.encode()),))
    return np.random.Generator(np.random.PCG64(ss))


class _Clocked:
    """Lifecycle wrapper that skips deep sleep in one jump."""

    __slots__ = ("agent", "rng", "next_t")

    def __init__(self, agent, rng):
        self.agent = agent
        self.rng = rng
        self.next_t = 1  # initialize lasts one minute

    def advance(self, t: int) -> bool:
        """Bring the state up to tick ``t``; True if it is in tasks."""
        if t < self.next_t:
            return False
        st = self.agent.state
        if st.phase is Phase.FAILURE:
            self.next_t = math.inf
            return False
        if st.phase is Phase.DEEP_SLEEP:
            st = replace(st, phase_timer=1)
        draw = self.rng.random() if ag.wake_pending(st) and st.failure_prob > 0 else 1.0
        st = ag.lifecycle_advance(st, draw)
        self.agent.state = st
        if st.phase is Phase.FAILURE:
            self.next_t = math.inf
        else:
            self.next_t = t + st.phase_timer
        return st.phase is Phase.TASKS


def _forcing_arrays(scn: Scenario):
    et0, rain, temp = scn.forcing.expand(scn.run_length)
    missing = np.isnan(et0)
    if missing.any():
        bc = np.array([daily_to_per_minute(blaney_criddle(t, scn.rho)) for t in temp[missing]])
        et0 = et0.copy()
        et0[missing] = bc
    return et0.tolist(), rain.tolist()


def run(scenario: Scenario, record_events: bool = True, trace: bool = False) -> RunResult:
    """Simulate one scenario and return its responses.

    Deterministic for a given scenario (including its seed).  With
    ``trace=True`` the per-minute soil moisture, irrigation and ET series are
    returned in ``RunResult.trace``.
    """
    scn = scenario
    scn.validate()
    soil, crop, plan = scn.soil, scn.crop, scn.plan
    rz = soil.root_zone
    period = scn.period
    th_water = threshold_moisture(soil) * rz
    fc_water = soil.field_capacity * rz
    sat_water = soil.saturation * rz
    kcb, ke = crop.kcb, crop.ke
    rate = scn.irrigation_rate
    substeps = int(round(1 / scn.dt))
    dt = 1.0 / substeps
    warm_up, run_length = scn.warm_up, scn.run_length
    automatic = plan.mode == "automatic"

    et0_series, rain_series = _forcing_arrays(scn)
    # the central agent sees the raw series and applies its own fallback
    provider = SeriesForecastProvider(scn.forcing, run_length, scn.forecast_outages)

    def mk(_aid):
        return ag.make_state(scn.wake_period, scn.failure_prob)

    soil_sensor = SensorAgent(SOIL_SENSOR, "theta", scn.soil_sensor, mk(SOIL_SENSOR))
    rain_sensor = SensorAgent(RAIN_SENSOR, "rain_rate", scn.rain_sensor, mk(RAIN_SENSOR))
    central = CentralAgent(
        CENTRAL,
        crop,
        soil,
        mk(CENTRAL),
        WaterBudget(scn.initial_water),
        lookahead=scn.lookahead,
        rho=scn.rho,
    )
    controller = ControllerAgent(CONTROLLER, crop, soil, plan, rate, mk(CONTROLLER))
    clocked = {
        aid: _Clocked(a, agent_rng(scn.seed, aid))
        for aid, a in (
            (SOIL_SENSOR, soil_sensor),
            (RAIN_SENSOR, rain_sensor),
            (CENTRAL, central),
            (CONTROLLER, controller),
        )
    }
    c_soil, c_rain, c_central, c_ctrl = (clocked[a] for a in AGENT_IDS)

    log = []
    emit = log.append if record_events else None

    def record(t, agent, kind, payload):
        if emit is not None:
            emit(EventRecord(t, agent, kind, payload))

    def send(msg: AgentMessage):
        if emit is not None:
            emit(EventRecord(msg.timestamp, msg.sender, msg.kind.value, {"to": msg.recipient, **dict(msg.payload)}))

    # state
    surface = 0.0
    sw = scn.theta0 * rz
    sw0 = sw
    tot_evt = tot_perc = tot_runoff = tot_supply = 0.0
    central_inbox = []
    valve_left = 0.0  # mm still to deliver on the current automatic run
    valve_delivered = 0.0
    valve_open = False

    below = 0
    w_perc = w_irr = w_evt = 0.0
    wake_cycles = 0
    open_minutes = 0
    max_theta = -math.inf
    min_theta = math.inf
    tr_theta = [] if trace else None
    tr_irr = [] if trace else None
    tr_et = [] if trace else None

    for t in range(run_length):
        in_window = t >= warm_up
        raining = rain_series[t] > 0.0

        # 1-2. lifecycles and message exchange among awake agents
        if t > 0:
            soil_awake = c_soil.advance(t)
            rain_awake = c_rain.advance(t)
            central_awake = c_central.advance(t)
            ctrl_awake = c_ctrl.advance(t)
        else:
            soil_awake = rain_awake = central_awake = ctrl_awake = False

        if soil_awake:
            msg = soil_sensor.measure(sw / rz, c_soil.rng, t)
            send(msg)
            if msg.kind is MessageKind.MEASUREMENT:
                controller.receive(msg)
            central_inbox.append(msg)
        if rain_awake:
            msg = rain_sensor.measure(rain_series[t], c_rain.rng, t)
            send(msg)
            if msg.kind is MessageKind.MEASUREMENT:
                controller.receive(msg)
            central_inbox.append(msg)
        if central_awake:
            outgoing = central.tick(t, provider, central_inbox, period)
            central_inbox = []
            for msg in outgoing:
                send(msg)
                if msg.recipient != "user":
                    controller.receive(msg)
        if ctrl_awake:
            if in_window:
                wake_cycles += 1
            record(t, CONTROLLER, "Wake", {})
            if automatic:
                decision, warnings = controller.decide(t, period)
                for msg in warnings:
                    send(msg)
                    central_inbox.append(msg)
                if decision.action == "irrigate":
                    send(AgentMessage(MessageKind.IRRIGATE_COMMAND, CONTROLLER, t,
                                      {"amount": decision.amount, "rate": decision.rate}))
                    central.note_command(decision.amount)
                    valve_left = decision.amount
                elif decision.action == "stop" and valve_left > 0:
                    send(AgentMessage(MessageKind.STOP_COMMAND, CONTROLLER, t, {"reason": "rule"}))
                    valve_left = 0.0

        # timed rules: morning top-up and manual schedule
        minute_of_day = t % 1440
        if automatic and plan.morning_target is not None and minute_of_day == plan.morning_time and t > 0:
            morning = ag.morning_irrigation(sw / rz, plan, rz, rate)
            if morning is not None and not raining:
                send(AgentMessage(MessageKind.IRRIGATE_COMMAND, CONTROLLER, t,
                                  {"amount": morning.amount, "rate": rate, "rule": "morning"}))
                central.note_command(morning.amount)
                valve_left = morning.amount

        # 3. valve -> irrigation forcing
        irr = 0.0
        if automatic:
            if valve_left > 0.0:
                if raining or sw >= fc_water:
                    send(AgentMessage(MessageKind.STOP_COMMAND, CONTROLLER, t,
                                      {"reason": "rain" if raining else "field_capacity"}))
                    valve_left = 0.0
                else:
                    irr = rate if valve_left > rate else valve_left
                    valve_left -= irr
                    if valve_left <= 1e-12:
                        valve_left = 0.0
        else:
            action = ag.manual_schedule_step(minute_of_day, plan, raining)
            if action == "irrigate":
                irr = rate
            elif action == "stop" and valve_open:
                send(AgentMessage(MessageKind.STOP_COMMAND, CONTROLLER, t, {"reason": "rain"}))
        if irr > 0.0:
            if not valve_open:
                valve_open = True
                valve_delivered = 0.0
            valve_delivered += irr
            central.note_delivery(irr)
            if in_window:
                open_minutes += 1
                w_irr += irr
        if valve_open and (irr == 0.0 or (automatic and valve_left == 0.0)):
            record(t, CONTROLLER, "IrrigationRun", {"amount": valve_delivered, "rate": rate})
            valve_open = False

        # 4. soil update (irr is mm delivered this minute == mm/min)
        et0 = et0_series[t]
        rain = rain_series[t]
        m_perc = m_et = 0.0
        for _ in range(substeps):
            infil, perc, et, runoff, supply = _flows(sw, surface, soil, kcb, ke, irr, rain, et0, dt)
            surface += (supply - infil - runoff) * dt
            if surface < 0.0:
                surface = 0.0
            sw += (infil - perc - et) * dt
            tot_evt += et * dt
            tot_perc += perc * dt
            tot_runoff += runoff * dt
            tot_supply += supply * dt
            m_perc += perc * dt
            m_et += et * dt

        # 5. bookkeeping
        if in_window:
            w_perc += m_perc
            w_evt += m_et
            if sw < th_water:
                below += 1
            theta = sw / rz
            if theta > max_theta:
                max_theta = theta
            if theta < min_theta:
                min_theta = theta
        if trace:
            tr_theta.append(sw / rz)
            tr_irr.append(irr)
            tr_et.append(m_et)

    if valve_open:
        record(run_length - 1, CONTROLLER, "IrrigationRun", {"amount": valve_delivered, "rate": rate})

    residual = tot_supply - ((surface - 0.0) + (sw - sw0) + tot_evt + tot_perc + tot_runoff)
    if sw < -1e-9 or surface < -1e-9 or sw > sat_water * (1 + 1e-12) + 1e-9:
        raise SimulationInvariantError(f"stock out of range: soil_water={sw}, surface={surface}")
    if abs(residual) > 1e-6:
        raise SimulationInvariantError(f"mass balance residual {residual} mm exceeds 1e-6")

    result = RunResult(
        below_threshold_count=below,
        percolated=w_perc,
        irrigated=w_irr,
        evapotranspired=w_evt,
        operating_time=ag.WAKE_OVERHEAD_MINUTES * wake_cycles + open_minutes,
        wake_cycles=wake_cycles,
        irrigation_minutes=open_minutes,
        final_state=(surface, sw, tot_evt, tot_perc, tot_runoff),
        mass_residual=residual,
        max_theta=max_theta,
        min_theta=min_theta,
        event_log=log,
    )
    if trace:
        result.trace = {"theta": tr_theta, "irrigation": tr_irr, "et": tr_et}
    return result
