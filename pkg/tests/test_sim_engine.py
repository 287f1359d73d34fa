from dataclasses import replace

import numpy as np
import pytest

from irrigsim.agent_net import (
    WAKE_OVERHEAD_MINUTES,
    IrrigationPlan,
    Phase,
    SensorModel,
    lifecycle_advance,
    make_state,
    operating_time_accounting,
)
from irrigsim.doe import FACTORS, decode_row
from irrigsim.forecast import ForecastSeries
from irrigsim.sim_engine import (
    RunResult,
    Scenario,
    ScenarioError,
    _Clocked,
    agent_rng,
    relative_error_sq,
    responses,
    run,
)
from irrigsim.soil_dynamics import threshold_moisture

from conftest import CROP, LOAM


def scenario(**kw):
    base = dict(
        soil=LOAM,
        crop=CROP,
        forcing=ForecastSeries.constant(0.004),
        wake_period=20,
        irrigation_rate=0.2,
        warm_up=1440,
        run_length=5760,
        seed=7,
    )
    base.update(kw)
    return Scenario(**base)


# ---------------------------------------------------------- validation


@pytest.mark.parametrize(
    "kw, field",
    [
        (dict(warm_up=5760), "warm_up"),
        (dict(initial_theta=0.35), "initial_theta"),
        (dict(initial_theta=0.15), "initial_theta"),
        (dict(wake_period=0), "wake_period"),
        (dict(irrigation_rate=0.0), "irrigation_rate"),
        (dict(plan=IrrigationPlan(morning_target=0.31)), "plan.morning_target"),
        (dict(dt=0.3), "dt"),
        (dict(forcing=ForecastSeries([0], [None], [0.0], [20.0])), "forcing"),
    ],
)
def test_invalid_scenario_names_field(kw, field):
    with pytest.raises(ScenarioError) as exc:
        scenario(**kw)
    assert exc.value.field == field


def test_default_initial_theta_is_midpoint():
    s = scenario()
    assert s.theta0 == pytest.approx(0.5 * (threshold_moisture(LOAM) + LOAM.field_capacity))


# --------------------------------------------------------- determinism


def test_same_seed_bit_identical():
    s = scenario(soil_sensor=SensorModel(noise_sd=0.01, n_samples=4), failure_prob=0.001)
    a, b = run(s), run(s)
    assert a.summary() == b.summary()
    assert a.final_state == b.final_state
    assert [repr(e) for e in a.event_log] == [repr(e) for e in b.event_log]


def test_seed_changes_noisy_run():
    noisy = dict(soil_sensor=SensorModel(noise_sd=0.02))
    a = run(scenario(seed=1, **noisy), record_events=False)
    b = run(scenario(seed=2, **noisy), record_events=False)
    assert a.final_state != b.final_state


def test_agent_streams_independent():
    a = agent_rng(3, "controller").random(5)
    b = agent_rng(3, "central").random(5)
    c = agent_rng(3, "controller").random(5)
    assert not np.allclose(a, b)
    assert np.array_equal(a, c)


def test_recording_does_not_change_results():
    s = scenario()
    assert run(s, record_events=False).summary() == run(s).summary()


# ------------------------------------------------------------ behaviour


def test_static_world():
    s = scenario(forcing=ForecastSeries.constant(0.0))
    r = run(s, trace=True)
    assert r.irrigated == 0.0 and r.irrigation_minutes == 0
    assert len(set(r.trace["theta"])) == 1
    assert r.operating_time == WAKE_OVERHEAD_MINUTES * r.wake_cycles
    # ticks 1, 23, 45, ...; count those inside the window
    ticks = range(1, s.run_length, s.period)
    assert r.wake_cycles == sum(t >= s.warm_up for t in ticks)


def test_operating_time_matches_event_accounting():
    s = scenario(warm_up=0, run_length=4000, forcing=ForecastSeries.constant(0.02))
    r = run(s)
    assert r.irrigated > 0
    assert r.operating_time == WAKE_OVERHEAD_MINUTES * r.wake_cycles + r.irrigation_minutes
    assert r.operating_time == operating_time_accounting(r.event_log)
    runs = [e for e in r.event_log if e.kind == "IrrigationRun"]
    assert sum(e.payload["amount"] for e in runs) == pytest.approx(r.irrigated)


def test_nominal_silty_midpoint_stays_ideal():
    s = decode_row([0.0] * len(FACTORS), soil="silty")
    r = run(s, record_events=False)
    r1, r2, err, r4 = responses(r)
    assert r1 == 0 and r2 == 0.0
    assert r4 > 0


def test_automatic_control_tracks_et():
    r = run(scenario(forcing=ForecastSeries.constant(0.006), initial_theta=0.202), record_events=False)
    assert r.irrigated > 0
    assert r.below_threshold_count == 0
    # one projection's worth of water is the largest possible lag
    one_period = 22 * 0.006 * (CROP.kcb + CROP.ke)
    assert abs(r.irrigated - r.evapotranspired) <= one_period + 1e-9


def test_responses_non_negative_and_mass_closes():
    r = run(scenario(forcing=ForecastSeries([0, 2000], [0.01, 0.002], [0.0, 0.3])))
    assert min(r.below_threshold_count, r.percolated, r.irrigated, r.evapotranspired, r.operating_time) >= 0
    assert abs(r.mass_residual) <= 1e-6


def test_rain_never_overlaps_irrigation():
    rain = ForecastSeries([0, 3000, 3300], [0.01, 0.01, 0.01], [0.0, 0.05, 0.0])
    r = run(scenario(forcing=rain, run_length=5000, initial_theta=0.201), trace=True)
    irr = np.array(r.trace["irrigation"])
    assert irr[3000:3300].sum() == 0.0
    assert irr.sum() > 0


def test_warm_up_exclusion():
    # a transient that ends well before warm-up leaves the window untouched
    calm = ForecastSeries.constant(0.0)
    burst = ForecastSeries([0, 10, 11], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0])
    a = run(scenario(forcing=calm), record_events=False)
    b = run(scenario(forcing=burst), record_events=False)
    assert a.summary() == b.summary()
    # a real disturbance before warm-up changes nothing measured if it
    # is drained before the window opens
    wet = ForecastSeries([0, 100, 105], [0.0, 0.0, 0.0], [0.0, 0.01, 0.0])
    c = run(scenario(forcing=wet, soil=replace(LOAM, percolation_rate=0.01)), record_events=False)
    assert c.percolated == 0.0 and c.below_threshold_count == 0


def test_warm_up_excluded_from_counts():
    s = scenario(initial_theta=threshold_moisture(LOAM), forcing=ForecastSeries.constant(0.0))
    full = run(replace(s, warm_up=0), record_events=False)
    late = run(s, record_events=False)
    assert late.wake_cycles < full.wake_cycles


def test_halving_dt_close():
    a = run(scenario(), record_events=False)
    b = run(scenario(dt=0.5), record_events=False)
    assert b.irrigated == pytest.approx(a.irrigated, rel=1e-2)
    assert b.final_state[1] == pytest.approx(a.final_state[1], rel=1e-3)


# ------------------------------------------------------------- manual


def test_manual_schedule_drives_valve():
    plan = IrrigationPlan(mode="manual", schedule=((360, 30),))
    r = run(scenario(plan=plan, warm_up=0, run_length=2880, forcing=ForecastSeries.constant(0.0)), trace=True)
    irr = np.array(r.trace["irrigation"])
    on = np.flatnonzero(irr)
    assert list(on) == list(range(360, 390)) + list(range(1800, 1830))
    assert r.irrigation_minutes == 60


def test_manual_schedule_stops_in_rain():
    plan = IrrigationPlan(mode="manual", schedule=((360, 30),))
    rain = ForecastSeries([0, 370, 380], [0.0, 0.0, 0.0], [0.0, 0.1, 0.0])
    r = run(scenario(plan=plan, warm_up=0, run_length=1440, forcing=rain), trace=True)
    irr = np.array(r.trace["irrigation"])
    assert irr[370:380].sum() == 0.0
    assert irr[360:370].all() and irr[380:390].all()


def test_morning_top_up():
    plan = IrrigationPlan(morning_target=0.28, morning_time=360)
    s = scenario(plan=plan, warm_up=0, run_length=1440, forcing=ForecastSeries.constant(0.0), initial_theta=0.25)
    r = run(s, trace=True)
    assert r.irrigated == pytest.approx(30.0)
    assert r.trace["theta"][-1] == pytest.approx(0.28)


# ---------------------------------------------------------- lifecycle


@pytest.mark.parametrize("tm", [1, 4, 20])
def test_fast_path_matches_stepwise_lifecycle(tm):
    class Holder:
        state = make_state(tm)

    fast = _Clocked(Holder(), np.random.default_rng(0))
    slow = make_state(tm)
    for t in range(1, 400):
        awake = fast.advance(t)
        slow = lifecycle_advance(slow, 1.0)
        assert awake == (slow.phase is Phase.TASKS), t


def test_failed_controller_stops_operating():
    r = run(scenario(failure_prob=1.0), record_events=False)
    assert r.wake_cycles == 0 and r.irrigated == 0.0


# ------------------------------------------------------------ metrics


def test_error_criteria():
    r = RunResult(0, 0.0, 10.1, 10.0, 0, 0, 0, (), 0.0, 0.0, 0.0)
    assert r.error_sq == pytest.approx(0.01)
    assert r.relative_error_sq == pytest.approx(1e-4)
    assert relative_error_sq(5.0, 5.0) == 0.0
    assert relative_error_sq(0.0, 0.0) == 0.0
