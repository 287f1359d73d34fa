"""Device agents: sensors, the central agent and irrigation controllers.

Every device runs the same lifecycle (initialize, tasks, deep sleep,
restart, and an absorbing failure state) and differs only in the rules it
applies while in the tasks phase.  Rule logic lives in small pure
functions so it can be tested without a running simulation; the agent
classes hold the little state each device remembers between wake-ups.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Optional, Sequence

from .et_models import blaney_criddle, crop_et, daily_to_per_minute
from .soil_dynamics import CropParams, SoilParams, threshold_moisture

# restart + initialize, one minute each
WAKE_OVERHEAD_MINUTES = 2
MISCALCULATION_TOLERANCE = 0.20


class Phase(enum.Enum):
    INITIALIZE = "Initialize"
    TASKS = "Tasks"
    DEEP_SLEEP = "DeepSleep"
    RESTART = "Restart"
    FAILURE = "Failure"


class MessageKind(enum.Enum):
    MEASUREMENT = "Measurement"
    ET_BROADCAST = "EtBroadcast"
    IRRIGATE_COMMAND = "IrrigateCommand"
    STOP_COMMAND = "StopCommand"
    WARNING = "Warning"
    SENSOR_ERROR = "SensorError"
    SENSOR_FAILURE = "SensorFailure"
    SHORTAGE_NOTICE = "ShortageNotice"
    MISCALCULATION_NOTICE = "MiscalculationNotice"


ERROR_KINDS = frozenset(
    {
        MessageKind.WARNING,
        MessageKind.SENSOR_ERROR,
        MessageKind.SENSOR_FAILURE,
        MessageKind.MISCALCULATION_NOTICE,
    }
)


@dataclass(frozen=True)
class AgentMessage:
    kind: MessageKind
    sender: str
    timestamp: int
    payload: Mapping[str, object] = field(default_factory=dict)
    recipient: str = "*"

    def __post_init__(self):
        if not self.sender:
            raise ValueError("message needs a sender")
        if self.timestamp < 0:
            raise ValueError("timestamp must be >= 0")


# ---------------------------------------------------------------- lifecycle


@dataclass(frozen=True)
class AgentState:
    """Lifecycle position of one device.

    ``phase_timer`` counts the minutes left in the current phase.
    ``cycles`` is the number of times the agent has entered the tasks phase.
    """

    phase: Phase = Phase.INITIALIZE
    wake_period: int = 20
    phase_timer: int = 1
    failure_prob: float = 0.0
    cycles: int = 0

    def __post_init__(self):
        if self.wake_period <= 0:
            raise ValueError("wake_period must be > 0")
        if not 0.0 <= self.failure_prob <= 1.0:
            raise ValueError("failure_prob must lie in [0, 1]")


def wake_pending(state: AgentState) -> bool:
    """True when the next advance leaves initialize/restart for tasks.

    Only these transitions consume a random draw.
    """
    return state.phase in (Phase.INITIALIZE, Phase.RESTART) and state.phase_timer <= 1


def lifecycle_advance(state: AgentState, rng_draw: float = 1.0) -> AgentState:
    """Advance the lifecycle by one minute.

    Initialize and restart last one minute each, tasks one minute, deep
    sleep ``wake_period`` minutes, so consecutive tasks phases are
    ``wake_period + 2`` minutes apart.  On each wake-up the agent fails
    instead with probability ``failure_prob`` (``rng_draw < failure_prob``).
    """
    phase = state.phase
    if phase is Phase.FAILURE:
        return state
    if phase is Phase.TASKS:
        return replace(state, phase=Phase.DEEP_SLEEP, phase_timer=state.wake_period)
    if state.phase_timer > 1:
        return replace(state, phase_timer=state.phase_timer - 1)
    if phase is Phase.DEEP_SLEEP:
        return replace(state, phase=Phase.RESTART, phase_timer=1)
    # initialize or restart finished
    if rng_draw < state.failure_prob:
        return replace(state, phase=Phase.FAILURE, phase_timer=0)
    return replace(state, phase=Phase.TASKS, phase_timer=1, cycles=state.cycles + 1)


def repair(state: AgentState) -> AgentState:
    """External repair: a failed device goes through restart again."""
    if state.phase is not Phase.FAILURE:
        return state
    return replace(state, phase=Phase.RESTART, phase_timer=1)


# ------------------------------------------------------------------ sensors


@dataclass(frozen=True)
class SensorModel:
    """Measurement model and fault injectors for one sensor.

    ``stuck_value`` makes every raw read return that value; ``null_rate`` is
    the probability that a read comes back empty; ``disconnected`` means no
    data arrives at all.  A sensor is considered stuck when ``stuck_cycles``
    consecutive averaged readings are identical; that check is only armed
    for noisy sensors (``noise_sd > 0``), since a noiseless sensor reading a
    constant quantity legitimately repeats itself.
    """

    noise_sd: float = 0.0
    n_samples: int = 1
    stuck_value: Optional[float] = None
    null_rate: float = 0.0
    disconnected: bool = False
    floor: float = 0.0
    ceiling: float = 1.0
    stuck_cycles: int = 3

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if not self.floor < self.ceiling:
            raise ValueError("floor must be below ceiling")
        if self.noise_sd < 0:
            raise ValueError("noise_sd must be >= 0")
        if not 0.0 <= self.null_rate <= 1.0:
            raise ValueError("null_rate must lie in [0, 1]")
        if self.stuck_cycles < 2:
            raise ValueError("stuck_cycles must be >= 2")


def sensor_measure(
    truth: float,
    model: SensorModel,
    rng,
    sender: str = "sensor",
    timestamp: int = 0,
    history: Sequence[float] = (),
    quantity: str = "value",
) -> AgentMessage:
    """Average ``n_samples`` noisy reads of ``truth`` into one message.

    Returns a Measurement, or a SensorFailure (no data) / SensorError (empty
    read, output pinned at floor or ceiling, or stuck) message.  ``history``
    holds this sensor's previous reported values, newest last.
    """
    if model.disconnected:
        return AgentMessage(MessageKind.SENSOR_FAILURE, sender, timestamp, {"quantity": quantity})

    reads = []
    for _ in range(model.n_samples):
        if model.null_rate > 0 and rng.random() < model.null_rate:
            return AgentMessage(
                MessageKind.SENSOR_ERROR, sender, timestamp, {"quantity": quantity, "reason": "null"}
            )
        if model.stuck_value is not None:
            raw = model.stuck_value
        elif model.noise_sd > 0:
            raw = truth + model.noise_sd * rng.standard_normal()
        else:
            raw = truth
        reads.append(min(model.ceiling, max(model.floor, raw)))

    value = math.fsum(reads) / len(reads)
    if value <= model.floor or value >= model.ceiling:
        return AgentMessage(
            MessageKind.SENSOR_ERROR, sender, timestamp, {"quantity": quantity, "reason": "range"}
        )
    if model.noise_sd > 0:
        recent = list(history)[-(model.stuck_cycles - 1):]
        if len(recent) == model.stuck_cycles - 1 and all(v == value for v in recent):
            return AgentMessage(
                MessageKind.SENSOR_ERROR, sender, timestamp, {"quantity": quantity, "reason": "stuck"}
            )
    return AgentMessage(MessageKind.MEASUREMENT, sender, timestamp, {quantity: value})


# -------------------------------------------------------------- irrigation


@dataclass(frozen=True)
class ScheduleWindow:
    start: int  # minute of day
    duration: int

    def __post_init__(self):
        if not 0 <= self.start < 1440:
            raise ValueError(f"window start must be a minute of day, got {self.start}")
        if self.duration <= 0:
            raise ValueError("window duration must be > 0")

    def contains(self, minute_of_day: int) -> bool:
        # windows may wrap past midnight
        return (minute_of_day - self.start) % 1440 < self.duration


@dataclass(frozen=True)
class IrrigationPlan:
    mode: str = "automatic"
    schedule: tuple = ()
    morning_target: Optional[float] = None
    morning_time: int = 360
    deficit_fraction: float = 0.5

    def __post_init__(self):
        if self.mode not in ("automatic", "manual"):
            raise ValueError(f"mode must be 'automatic' or 'manual', got {self.mode!r}")
        windows = tuple(w if isinstance(w, ScheduleWindow) else ScheduleWindow(*w) for w in self.schedule)
        object.__setattr__(self, "schedule", windows)
        for i, a in enumerate(windows):
            for b in windows[i + 1:]:
                if _windows_overlap(a, b):
                    raise ValueError(f"schedule windows overlap: {a} and {b}")
        if not 0.0 <= self.deficit_fraction <= 1.0:
            raise ValueError("deficit_fraction must lie in [0, 1]")
        if not 0 <= self.morning_time < 1440:
            raise ValueError("morning_time must be a minute of day")

    def validate_against(self, soil: SoilParams) -> None:
        if self.morning_target is not None and not self.morning_target < soil.field_capacity:
            raise ValueError(
                f"morning_target {self.morning_target} must be below field capacity "
                f"{soil.field_capacity} (morning irrigation may not fill the soil to capacity)"
            )


def _windows_overlap(a: ScheduleWindow, b: ScheduleWindow) -> bool:
    return (b.start - a.start) % 1440 < a.duration or (a.start - b.start) % 1440 < b.duration


@dataclass(frozen=True)
class Decision:
    action: str  # "irrigate", "hold" or "stop"
    amount: float = 0.0
    rate: float = 0.0

    @property
    def duration(self) -> int:
        if self.action != "irrigate" or self.amount <= 0:
            return 0
        return irrigation_minutes(self.amount, self.rate)


HOLD = Decision("hold")
STOP = Decision("stop")


def irrigation_minutes(amount: float, rate: float) -> int:
    """Whole minutes the valve stays open to deliver ``amount`` at ``rate``."""
    if amount <= 0:
        return 0
    # guard against 6.0/0.334 style round-off pushing an exact ratio up a minute
    return math.ceil(amount / rate - 1e-9)


def controller_decide(
    soil_water: float,
    et0_rate: float,
    crop: CropParams,
    params: SoilParams,
    periods: float,
    raining: bool,
    irrigation_rate: float = 1.0,
    shortage: bool = False,
    deficit_fraction: float = 0.5,
) -> Decision:
    """Automatic irrigation rule.

    Irrigate when the soil water left after ``periods`` minutes of
    unstressed crop ET would be at or below the threshold; the amount is
    that projected ET, capped at the room left below field capacity and
    reduced by ``deficit_fraction`` during a water shortage.  Rain always
    stops irrigation.
    """
    if raining:
        return STOP
    fc_water = params.root_zone * params.field_capacity
    demand = periods * et0_rate * (crop.kcb + crop.ke)
    if soil_water - demand > params.root_zone * threshold_moisture(params):
        return HOLD
    amount = min(demand, fc_water - soil_water)
    if shortage:
        amount *= 1.0 - deficit_fraction
    if amount <= 0:
        return HOLD
    return Decision("irrigate", amount, irrigation_rate)


def morning_irrigation(theta: float, plan: IrrigationPlan, root_zone: float, rate: float = 1.0) -> Optional[Decision]:
    """Top the soil up to the expert's morning target, or None."""
    if plan.morning_target is None:
        return None
    amount = max(0.0, plan.morning_target - theta) * root_zone
    if amount <= 0:
        return None
    return Decision("irrigate", amount, rate)


def manual_schedule_step(minute_of_day: int, plan: IrrigationPlan, raining: bool) -> str:
    """Manual mode: irrigate inside scheduled windows unless it rains."""
    inside = any(w.contains(minute_of_day) for w in plan.schedule)
    if not inside:
        return "hold"
    return "stop" if raining else "irrigate"


def detect_miscalculation(
    irrigated: float,
    predicted: float,
    theta: float,
    params: SoilParams,
    tolerance: float = MISCALCULATION_TOLERANCE,
) -> Optional[dict]:
    """Return a notice payload when moisture or irrigation totals look wrong.

    Flags moisture outside [wilting point, field capacity] and irrigated
    totals deviating from the prediction by strictly more than ``tolerance``.
    """
    if predicted < 0:
        raise ValueError("predicted must be >= 0")
    reasons = []
    if theta < params.wilting_point:
        reasons.append("below_wilting_point")
    if theta > params.field_capacity:
        reasons.append("above_field_capacity")
    if predicted > 0:
        if abs(irrigated - predicted) / predicted > tolerance:
            reasons.append("irrigation_deviation")
    elif irrigated > 0:
        reasons.append("irrigation_deviation")
    if not reasons:
        return None
    return {"reasons": ";".join(reasons), "irrigated": irrigated, "predicted": predicted, "theta": theta}


@dataclass
class WaterBudget:
    initial_water: Optional[float] = None
    irrigated_so_far: float = 0.0
    predicted_next_hours: float = 0.0

    @property
    def remaining(self) -> float:
        if self.initial_water is None:
            return math.inf
        return self.initial_water - self.irrigated_so_far

    def record(self, amount: float) -> None:
        if amount < 0:
            raise ValueError("irrigated amount must be >= 0")
        self.irrigated_so_far += amount

    @property
    def shortage(self) -> bool:
        return self.remaining < self.predicted_next_hours


def operating_time_accounting(events: Iterable) -> int:
    """Total device operating minutes from an event stream.

    Each ``Wake`` event costs the two one-minute restart/initialize delays;
    each ``IrrigationRun`` event (payload ``amount`` and ``rate``) costs its
    valve-open minutes.
    """
    total = 0
    for ev in events:
        if ev.kind == "Wake":
            total += WAKE_OVERHEAD_MINUTES
        elif ev.kind == "IrrigationRun":
            total += irrigation_minutes(float(ev.payload["amount"]), float(ev.payload["rate"]))
    return total


# ------------------------------------------------------------------ agents


@dataclass
class SensorAgent:
    agent_id: str
    quantity: str
    model: SensorModel
    state: AgentState
    history: list = field(default_factory=list)

    def measure(self, truth: float, rng, clock: int) -> AgentMessage:
        msg = sensor_measure(truth, self.model, rng, self.agent_id, clock, self.history, self.quantity)
        if msg.kind is MessageKind.MEASUREMENT:
            self.history.append(msg.payload[self.quantity])
            del self.history[: -self.model.stuck_cycles]
        return msg


@dataclass
class CentralAgent:
    """Fetches forecasts, broadcasts ET, watches budgets and anomalies."""

    agent_id: str
    crop: CropParams
    soil: SoilParams
    state: AgentState
    budget: WaterBudget = field(default_factory=WaterBudget)
    lookahead: int = 1440
    rho: Optional[float] = None
    last_et0: Optional[float] = None
    shortage_active: bool = False
    day: int = 0
    day_irrigated: float = 0.0
    day_predicted: float = 0.0
    last_theta: Optional[float] = None

    def tick(self, clock: int, forecast, inbox: Sequence[AgentMessage], period: int) -> list:
        """Run one tasks phase; returns the outgoing messages.

        ``forecast`` is a provider with ``window(t0, t1)`` returning an
        object with ``ref_evt_rate`` (mm/min, may be None), ``temp`` and
        ``rain_rate`` means, or None during an outage.
        """
        out = []
        for msg in inbox:
            if msg.kind in ERROR_KINDS:
                out.append(
                    AgentMessage(
                        MessageKind.WARNING,
                        self.agent_id,
                        clock,
                        {"forwarded": msg.kind.value, "origin": msg.sender, **dict(msg.payload)},
                        recipient="user",
                    )
                )
            elif msg.kind is MessageKind.MEASUREMENT and "theta" in msg.payload:
                self.last_theta = float(msg.payload["theta"])

        out.extend(self._end_of_day(clock))

        sample = forecast.window(clock, clock + period) if forecast is not None else None
        et0 = None
        if sample is not None:
            et0 = sample.ref_evt_rate
            if et0 is None and sample.temp is not None and self.rho is not None:
                et0 = daily_to_per_minute(blaney_criddle(sample.temp, self.rho))
        if et0 is None:
            out.append(
                AgentMessage(MessageKind.WARNING, self.agent_id, clock, {"reason": "forecast_unavailable"}, "user")
            )
            et0 = self.last_et0
        if et0 is None:
            return out
        self.last_et0 = et0
        crop_rate = crop_et(et0, self.crop)
        out.append(
            AgentMessage(
                MessageKind.ET_BROADCAST,
                self.agent_id,
                clock,
                {"et0_rate": et0, "crop_et_rate": crop_rate},
            )
        )

        if self.budget.initial_water is not None:
            self.budget.predicted_next_hours = crop_rate * self.lookahead
            short = self.budget.shortage
            if short != self.shortage_active:
                self.shortage_active = short
                out.append(
                    AgentMessage(
                        MessageKind.SHORTAGE_NOTICE,
                        self.agent_id,
                        clock,
                        {
                            "active": short,
                            "remaining": self.budget.remaining,
                            "predicted": self.budget.predicted_next_hours,
                        },
                    )
                )
        return out

    def note_command(self, amount: float) -> None:
        self.day_predicted += amount

    def note_delivery(self, amount: float) -> None:
        self.day_irrigated += amount
        self.budget.record(amount)

    def _end_of_day(self, clock: int) -> list:
        day = clock // 1440
        if day == self.day:
            return []
        self.day = day
        notice = None
        if self.last_theta is not None:
            notice = detect_miscalculation(self.day_irrigated, self.day_predicted, self.last_theta, self.soil)
        self.day_irrigated = 0.0
        self.day_predicted = 0.0
        if notice is None:
            return []
        return [AgentMessage(MessageKind.MISCALCULATION_NOTICE, self.agent_id, clock, notice, "user")]


@dataclass
class ControllerAgent:
    """Irrigation node: decides, and owns the valve it drives."""

    agent_id: str
    crop: CropParams
    soil: SoilParams
    plan: IrrigationPlan
    rate: float
    state: AgentState
    last_theta: Optional[float] = None
    last_theta_time: Optional[int] = None
    last_et0: Optional[float] = None
    last_et_time: Optional[int] = None
    raining: bool = False
    shortage: bool = False

    def receive(self, msg: AgentMessage) -> None:
        k = msg.kind
        if k is MessageKind.MEASUREMENT:
            if "theta" in msg.payload:
                self.last_theta = float(msg.payload["theta"])
                self.last_theta_time = msg.timestamp
            if "rain_rate" in msg.payload:
                self.raining = float(msg.payload["rain_rate"]) > 0
        elif k is MessageKind.ET_BROADCAST:
            self.last_et0 = float(msg.payload["et0_rate"])
            self.last_et_time = msg.timestamp
        elif k is MessageKind.SHORTAGE_NOTICE:
            self.shortage = bool(msg.payload["active"])

    def decide(self, clock: int, period: int):
        """Automatic rule for one tasks phase; returns (Decision, warnings)."""
        stale_after = 2 * period
        warnings = []
        for what, t in (("soil_moisture", self.last_theta_time), ("evapotranspiration", self.last_et_time)):
            if t is None or clock - t > stale_after:
                warnings.append(
                    AgentMessage(MessageKind.WARNING, self.agent_id, clock, {"reason": f"stale_{what}"}, "central")
                )
        if self.raining:
            return STOP, warnings
        if warnings:
            return HOLD, warnings
        d = controller_decide(
            self.last_theta * self.soil.root_zone,
            self.last_et0,
            self.crop,
            self.soil,
            period,
            self.raining,
            self.rate,
            self.shortage,
            self.plan.deficit_fraction,
        )
        return d, warnings


def central_tick(
    agent: CentralAgent,
    clock: int,
    forecast,
    measurements: Sequence[AgentMessage],
    budget: Optional[WaterBudget] = None,
    period: Optional[int] = None,
) -> list:
    """Functional entry point for one central-agent tasks phase.

    ``budget`` replaces the agent's water budget when given; ``period``
    defaults to the agent's cycle length.
    """
    if budget is not None:
        agent.budget = budget
    if period is None:
        period = agent.state.wake_period + WAKE_OVERHEAD_MINUTES
    return agent.tick(clock, forecast, measurements, period)


def make_state(wake_period: int, failure_prob: float = 0.0) -> AgentState:
    return AgentState(Phase.INITIALIZE, wake_period, 1, failure_prob, 0)
