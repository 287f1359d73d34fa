"""Scenario files, result persistence and the command-line interface.

Scenario files are YAML (``.yaml``/``.yml``) or JSON.  Every key is checked
against the schema; unknown keys are errors.  Result files are CSV with
shortest round-trip float formatting plus a JSON metadata document.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .agent_net import IrrigationPlan, ScheduleWindow, SensorModel
from .doe import FACTORS, RESPONSES, SOILS, CampaignResult, generate_design, run_campaign
from .forecast import ForecastSeries
from .sim_engine import (
    DEFAULT_RAIN_SENSOR,
    RunResult,
    Scenario,
    ScenarioError,
    SimulationInvariantError,
    run,
)
from .soil_dynamics import CropParams, SoilParams
from .stats import (
    ResponseModel,
    anova,
    normal_quantiles,
    ols_fit,
    significant_terms,
    surface_grid,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4


class ScenarioLoadError(ValueError):
    """Base for scenario problems; ``field`` is a dotted path or ''."""

    kind = "validation"

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}" if field else message)
        self.field = field
        self.message = message


class ScenarioParseError(ScenarioLoadError):
    kind = "parse"


class ScenarioSchemaError(ScenarioLoadError):
    kind = "schema"


class ScenarioInvariantError(ScenarioLoadError):
    kind = "invariant"


# ------------------------------------------------------------------ schema

SOIL_KEYS = tuple(f.name for f in dataclasses.fields(SoilParams))
CROP_KEYS = ("kcb", "ke")
PLAN_KEYS = ("mode", "schedule", "morning_target", "morning_time", "deficit_fraction")
SENSOR_KEYS = tuple(f.name for f in dataclasses.fields(SensorModel))
FORCING_KEYS = ("path", "rows", "constant")
CONSTANT_KEYS = ("ref_evt_rate", "rain_rate", "temp")
SCALAR_KEYS = {
    "wake_period": int,
    "irrigation_rate": float,
    "warm_up": int,
    "run_length": int,
    "seed": int,
    "initial_theta": float,
    "failure_prob": float,
    "initial_water": float,
    "lookahead": int,
    "rho": float,
    "dt": float,
}
TOP_KEYS = ("soil", "crop", "plan", "forcing", "soil_sensor", "rain_sensor", "forecast_outages") + tuple(SCALAR_KEYS)
REQUIRED_TOP = ("soil", "crop", "forcing")


def _check_keys(block, allowed, path, required=()):
    if not isinstance(block, dict):
        raise ScenarioSchemaError(path, f"expected a mapping, got {type(block).__name__}")
    for k in block:
        if k not in allowed:
            where = f"{path}.{k}" if path else str(k)
            raise ScenarioSchemaError(where, f"unknown key (allowed: {', '.join(allowed)})")
    for k in required:
        if k not in block:
            where = f"{path}.{k}" if path else k
            raise ScenarioSchemaError(where, "required key missing")


def _num(value, path, kind=float, optional=False):
    if value is None:
        if optional:
            return None
        raise ScenarioSchemaError(path, "must not be null")
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioSchemaError(path, f"expected a number, got {value!r}")
    if kind is int:
        if float(value) != int(value):
            raise ScenarioSchemaError(path, f"expected a whole number, got {value!r}")
        return int(value)
    return float(value)


def _build(cls, path, **kw):
    try:
        return cls(**kw)
    except (ValueError, TypeError) as exc:
        raise ScenarioInvariantError(path, str(exc)) from None


def scenario_from_dict(doc: dict, base_dir: Path = Path(".")) -> Scenario:
    """Validate a parsed document and build the scenario."""
    _check_keys(doc, TOP_KEYS, "", REQUIRED_TOP)

    _check_keys(doc["soil"], SOIL_KEYS, "soil", SOIL_KEYS)
    soil = _build(SoilParams, "soil", **{k: _num(v, f"soil.{k}") for k, v in doc["soil"].items()})

    _check_keys(doc["crop"], CROP_KEYS, "crop", CROP_KEYS)
    crop = _build(CropParams, "crop", **{k: _num(v, f"crop.{k}") for k, v in doc["crop"].items()})

    plan = IrrigationPlan()
    if "plan" in doc and doc["plan"] is not None:
        p = doc["plan"]
        _check_keys(p, PLAN_KEYS, "plan")
        kw = {}
        if "mode" in p:
            kw["mode"] = str(p["mode"]).lower()
        if "schedule" in p and p["schedule"] is not None:
            windows = []
            for i, w in enumerate(p["schedule"]):
                wp = f"plan.schedule[{i}]"
                if isinstance(w, dict):
                    _check_keys(w, ("start", "duration"), wp, ("start", "duration"))
                    w = (w["start"], w["duration"])
                if not isinstance(w, (list, tuple)) or len(w) != 2:
                    raise ScenarioSchemaError(wp, "expected [start, duration]")
                windows.append(
                    _build(ScheduleWindow, wp, start=_num(w[0], wp + ".start", int),
                           duration=_num(w[1], wp + ".duration", int))
                )
            kw["schedule"] = tuple(windows)
        if "morning_target" in p:
            kw["morning_target"] = _num(p["morning_target"], "plan.morning_target", optional=True)
        if "morning_time" in p:
            kw["morning_time"] = _num(p["morning_time"], "plan.morning_time", int)
        if "deficit_fraction" in p:
            kw["deficit_fraction"] = _num(p["deficit_fraction"], "plan.deficit_fraction")
        plan = _build(IrrigationPlan, "plan", **kw)
        if plan.morning_target is not None and not plan.morning_target < soil.field_capacity:
            raise ScenarioInvariantError(
                "plan.morning_target",
                f"{plan.morning_target} must be below field capacity {soil.field_capacity}: "
                "the morning target may not fill the soil to capacity",
            )

    forcing = _forcing(doc["forcing"], base_dir)

    kw = {}
    for k, kind in SCALAR_KEYS.items():
        if k in doc:
            optional = k in ("initial_theta", "initial_water", "rho")
            kw[k] = _num(doc[k], k, kind, optional=optional)
    for k, default in (("soil_sensor", SensorModel()), ("rain_sensor", DEFAULT_RAIN_SENSOR)):
        if k in doc and doc[k] is not None:
            _check_keys(doc[k], SENSOR_KEYS, k)
            merged = {**dataclasses.asdict(default), **doc[k]}
            kw[k] = _build(SensorModel, k, **merged)
    if "forecast_outages" in doc and doc["forecast_outages"] is not None:
        outs = []
        for i, o in enumerate(doc["forecast_outages"]):
            op = f"forecast_outages[{i}]"
            if not isinstance(o, (list, tuple)) or len(o) != 2:
                raise ScenarioSchemaError(op, "expected [start, end]")
            a, b = _num(o[0], op, int), _num(o[1], op, int)
            if not 0 <= a < b:
                raise ScenarioInvariantError(op, "outage must satisfy 0 <= start < end")
            outs.append((a, b))
        kw["forecast_outages"] = tuple(outs)
    try:
        return Scenario(soil=soil, crop=crop, plan=plan, forcing=forcing, **kw)
    except ScenarioError as exc:
        raise ScenarioInvariantError(exc.field, str(exc).split(": ", 1)[-1]) from None


def _forcing(block, base_dir: Path) -> ForecastSeries:
    _check_keys(block, FORCING_KEYS, "forcing")
    given = [k for k in FORCING_KEYS if k in block]
    if len(given) != 1:
        raise ScenarioSchemaError("forcing", "give exactly one of path, rows or constant")
    key = given[0]
    try:
        if key == "path":
            path = Path(block["path"])
            if not path.is_absolute():
                path = base_dir / path
            if not path.exists():
                raise ScenarioSchemaError("forcing.path", f"file not found: {path}")
            return ForecastSeries.load_csv(path)
        if key == "constant":
            c = block["constant"]
            _check_keys(c, CONSTANT_KEYS, "forcing.constant", ("ref_evt_rate",))
            return ForecastSeries.constant(
                _num(c["ref_evt_rate"], "forcing.constant.ref_evt_rate", optional=True),
                _num(c.get("rain_rate", 0.0), "forcing.constant.rain_rate"),
                _num(c.get("temp"), "forcing.constant.temp", optional=True),
            )
        rows = block["rows"]
        if not isinstance(rows, list) or not rows:
            raise ScenarioSchemaError("forcing.rows", "expected a non-empty list of rows")
        cols = [[], [], [], []]
        for i, r in enumerate(rows):
            rp = f"forcing.rows[{i}]"
            if isinstance(r, dict):
                _check_keys(r, ("minute",) + CONSTANT_KEYS, rp, ("minute",))
                r = [r.get("minute"), r.get("ref_evt_rate"), r.get("rain_rate", 0.0), r.get("temp")]
            if not isinstance(r, (list, tuple)) or not 2 <= len(r) <= 4:
                raise ScenarioSchemaError(rp, "expected [minute, ref_evt_rate, rain_rate?, temp?]")
            r = list(r) + [0.0, None][len(r) - 2:]
            cols[0].append(_num(r[0], rp + ".minute", int))
            cols[1].append(_num(r[1], rp + ".ref_evt_rate", optional=True))
            cols[2].append(_num(r[2], rp + ".rain_rate", optional=True) or 0.0)
            cols[3].append(_num(r[3], rp + ".temp", optional=True))
        return ForecastSeries(*cols)
    except ScenarioLoadError:
        raise
    except ValueError as exc:
        raise ScenarioInvariantError(f"forcing.{key}", str(exc)) from None


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file.

    Raises
    ------
    ScenarioParseError
        The file cannot be read or is not valid YAML/JSON.
    ScenarioSchemaError
        Unknown, missing or mistyped keys.
    ScenarioInvariantError
        Values violate a model invariant; ``field`` names the culprit.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioParseError("", f"cannot read {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ScenarioParseError("", f"{path}: {exc}") from None
    if doc is None:
        raise ScenarioSchemaError("", "empty scenario file")
    return scenario_from_dict(doc, path.parent)


def scenario_to_dict(scn: Scenario) -> dict:
    """Plain document for a scenario; forcing is written inline."""
    doc = {
        "soil": dataclasses.asdict(scn.soil),
        "crop": dataclasses.asdict(scn.crop),
        "plan": {
            "mode": scn.plan.mode,
            "schedule": [[w.start, w.duration] for w in scn.plan.schedule],
            "morning_target": scn.plan.morning_target,
            "morning_time": scn.plan.morning_time,
            "deficit_fraction": scn.plan.deficit_fraction,
        },
        "forcing": {"rows": [list(r) for r in scn.forcing.rows()]},
        "soil_sensor": dataclasses.asdict(scn.soil_sensor),
        "rain_sensor": dataclasses.asdict(scn.rain_sensor),
        "forecast_outages": [list(o) for o in scn.forecast_outages],
    }
    for k in SCALAR_KEYS:
        doc[k] = getattr(scn, k)
    return doc


def save_scenario(scn: Scenario, path) -> None:
    path = Path(path)
    doc = scenario_to_dict(scn)
    if path.suffix.lower() == ".json":
        path.write_text(json.dumps(doc, indent=2) + "\n")
    else:
        path.write_text(yaml.safe_dump(doc, sort_keys=False))


# ----------------------------------------------------------------- outputs


def fmt(v) -> str:
    """Shortest round-trip text for numbers; ints stay ints."""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if v.is_integer() and abs(v) < 1e15:
            return str(int(v))
        return repr(v)
    return "" if v is None else str(v)


def write_csv(path, header, rows) -> None:
    """Rows may be dicts keyed by header or plain sequences."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            vals = [r[h] for h in header] if isinstance(r, dict) else list(r)
            w.writerow([fmt(v) for v in vals])


def write_event_log(path, events) -> None:
    write_csv(
        path,
        ["t", "agent", "kind", "payload"],
        [[e.t, e.agent, e.kind, json.dumps(e.payload, sort_keys=True, default=str)] for e in events],
    )


def read_event_log(path) -> list:
    with open(path, newline="") as fh:
        return [
            {"t": int(r["t"]), "agent": r["agent"], "kind": r["kind"], "payload": json.loads(r["payload"])}
            for r in csv.DictReader(fh)
        ]


def result_record(r: RunResult) -> dict:
    return {
        "R1": r.below_threshold_count,
        "R2": r.percolated,
        "R3": r.error,
        "R4": r.operating_time,
        **r.summary(),
    }


CAMPAIGN_COLUMNS = FACTORS + RESPONSES
RUN_DETAIL_COLUMNS = ("run", "irrigated", "evapotranspired", "error_sq", "relative_error_sq",
                      "wake_cycles", "irrigation_minutes")


def write_campaign(camp: CampaignResult, out_dir) -> dict:
    """Write campaign.csv, runs.csv and metadata.json; return the metadata."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    details = []
    for i, (coded, r) in enumerate(zip(camp.design.runs, camp.results)):
        rows.append([int(c) for c in coded] + list(r.responses()))
        details.append([i, r.irrigated, r.evapotranspired, r.error_sq, r.relative_error_sq,
                        r.wake_cycles, r.irrigation_minutes])
    write_csv(out / "campaign.csv", CAMPAIGN_COLUMNS, rows)
    write_csv(out / "runs.csv", RUN_DETAIL_COLUMNS, details)
    sq, rel = camp.error_sums()
    meta = {
        "soil": camp.soil,
        "seed": camp.seed,
        "dt": camp.dt,
        "runs": len(camp.results),
        "generators": camp.design.generator_words(),
        "resolution": camp.design.resolution,
        "sum_error_sq": sq,
        "sum_relative_error_sq": rel,
        "software_version": __version__,
    }
    (out / "metadata.json").write_text(json.dumps(meta, indent=2) + "\n")
    return meta


def read_campaign(path):
    """Coded design columns and responses from a campaign CSV."""
    path = Path(path)
    if path.is_dir():
        path = path / "campaign.csv"
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        rows = list(reader)
    factors = [f for f in header if f in FACTORS]
    if not factors:
        raise ValueError(f"{path}: no factor columns found")
    if not rows:
        raise ValueError(f"{path}: no rows")
    design = {f: np.array([float(r[f]) for r in rows]) for f in factors}
    responses = {
        k: np.array([float(r[k]) for r in rows]) for k in header if k not in FACTORS and k != "run"
    }
    return design, responses


# --------------------------------------------------------------------- CLI


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="parallel worker processes")
    common.add_argument("--dt", type=float, default=argparse.SUPPRESS, help="soil step in minutes")

    p = _Parser(prog="irrigsim", description="Smart-irrigation simulator and DOE toolkit.", parents=[common])
    p.add_argument("--version", action="version", version=f"irrigsim {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    r = sub.add_parser("run", parents=[common], help="simulate one scenario")
    r.add_argument("scenario")
    r.add_argument("--out", default="run_output", help="directory for result.json and events.csv")

    d = sub.add_parser("doe", parents=[common], help="run the 256-run campaign for one soil")
    d.add_argument("--soil", required=True, choices=SOILS)
    d.add_argument("--out", required=True)

    a = sub.add_parser("anova", parents=[common], help="ANOVA of a campaign response")
    a.add_argument("campaign")
    a.add_argument("--response", default="R4")
    a.add_argument("--out", help="CSV file for the table")

    f = sub.add_parser("fit", parents=[common], help="fit the significant-term response model")
    f.add_argument("campaign")
    f.add_argument("--alpha", type=float, default=0.05)
    f.add_argument("--response", default="R4")
    f.add_argument("--out", help="CSV file for model coefficients")
    f.add_argument("--residuals", help="CSV file for sorted residuals vs normal quantiles")

    s = sub.add_parser("surface", parents=[common], help="evaluate a fitted model on a grid")
    s.add_argument("model", help="model CSV written by 'fit --out'")
    s.add_argument("--x", required=True)
    s.add_argument("--y", required=True)
    s.add_argument("--slice", action="append", default=[], metavar="NAME=VALUE")
    s.add_argument("--resolution", type=int, default=21)
    s.add_argument("--out", help="grid CSV (default: stdout)")

    v = sub.add_parser("validate", parents=[common], help="load and check a scenario file")
    v.add_argument("scenario")
    return p


def _error_line(code: int, kind: str, message: str, field: str = "") -> str:
    msg = " ".join(str(message).split())
    return f"error code={code} kind={kind} field={field or '-'} message={json.dumps(msg)}"


def cli_dispatch(argv=None, stdout=None, stderr=None) -> int:
    """Run the CLI; returns the exit status instead of exiting."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = _parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage())
        return _COMMANDS[args.command](args, stdout)
    except UsageError as exc:
        stderr.write(str(exc).rstrip() + "\n")
        stderr.write(_error_line(EXIT_USAGE, "usage", str(exc).splitlines()[0]) + "\n")
        return EXIT_USAGE
    except ScenarioLoadError as exc:
        stderr.write(_error_line(EXIT_VALIDATION, exc.kind, exc.message, exc.field) + "\n")
        return EXIT_VALIDATION
    except SimulationInvariantError as exc:
        stderr.write(_error_line(EXIT_RUNTIME, "invariant", str(exc)) + "\n")
        return EXIT_RUNTIME
    except (ValueError, KeyError, OSError) as exc:
        stderr.write(_error_line(EXIT_VALIDATION, "input", str(exc)) + "\n")
        return EXIT_VALIDATION
    except RuntimeError as exc:
        stderr.write(_error_line(EXIT_RUNTIME, "runtime", str(exc)) + "\n")
        return EXIT_RUNTIME


def _cmd_run(args, out):
    scn = load_scenario(args.scenario)
    if "seed" in args:
        scn = dataclasses.replace(scn, seed=args.seed)
    if "dt" in args:
        try:
            scn = dataclasses.replace(scn, dt=args.dt)
        except ScenarioError as exc:
            raise ScenarioInvariantError("dt", str(exc)) from None
    res = run(scn, record_events=True)
    od = Path(args.out)
    od.mkdir(parents=True, exist_ok=True)
    write_event_log(od / "events.csv", res.event_log)
    rec = result_record(res)
    (od / "result.json").write_text(json.dumps(rec, indent=2) + "\n")
    for k, v in rec.items():
        out.write(f"{k}\t{fmt(v)}\n")
    return EXIT_OK


def _cmd_doe(args, out):
    seed = getattr(args, "seed", 0)
    camp = run_campaign(args.soil, generate_design(), seed=seed, jobs=getattr(args, "jobs", 1),
                        dt=getattr(args, "dt", 1.0))
    meta = write_campaign(camp, args.out)
    out.write(
        f"soil={meta['soil']} runs={meta['runs']} sum_error_sq={fmt(meta['sum_error_sq'])} "
        f"sum_relative_error_sq={fmt(meta['sum_relative_error_sq'])}\n"
    )
    return EXIT_OK


def _response(responses, name):
    if name not in responses:
        raise ValueError(f"response {name!r} not in campaign (have {sorted(responses)})")
    return responses[name]


def _cmd_anova(args, out):
    design, responses = read_campaign(args.campaign)
    table = anova(design, _response(responses, args.response))
    out.write(table.to_text() + "\n")
    if args.out:
        write_csv(args.out, ["term", "df", "sum_sq", "mean_sq", "f_value", "p_value"], table.records())
    return EXIT_OK


def _cmd_fit(args, out):
    if not 0 < args.alpha < 1:
        raise UsageError("--alpha must lie in (0, 1)")
    design, responses = read_campaign(args.campaign)
    y = _response(responses, args.response)
    table = anova(design, y)
    terms = significant_terms(table, args.alpha, list(design))
    model = ols_fit(design, y, terms)
    out.write(model.to_text() + "\n\nsigns:\n")
    for name, sign in model.signs().items():
        out.write(f"{name}\t{sign}\n")
    if args.out:
        write_csv(args.out, ["term", "estimate", "std_error", "t_value", "p_value"], model.records())
        meta = {"r_squared": model.r_squared, "adj_r_squared": model.adj_r_squared,
                "sigma": model.sigma, "df_resid": model.df_resid, "alpha": args.alpha,
                "response": args.response}
        Path(str(args.out) + ".json").write_text(json.dumps(meta, indent=2) + "\n")
    if args.residuals:
        q, r = normal_quantiles(model.residuals)
        write_csv(args.residuals, ["normal_quantile", "residual"], zip(q, r))
    return EXIT_OK


def _cmd_surface(args, out):
    with open(args.model, newline="") as fh:
        model = ResponseModel.from_records(list(csv.DictReader(fh)))
    sl = {}
    for item in args.slice:
        name, sep, val = item.partition("=")
        if not sep:
            raise UsageError(f"--slice expects NAME=VALUE, got {item!r}")
        try:
            sl[name.strip()] = float(val)
        except ValueError:
            raise UsageError(f"--slice value for {name!r} is not a number") from None
    grid = surface_grid(model, args.x, args.y, sl, args.resolution)
    header = [grid.x, grid.y, "prediction"]
    if args.out:
        write_csv(args.out, header, grid.records())
    else:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for rec in grid.records():
            w.writerow([fmt(rec[h]) for h in header])
        out.write(buf.getvalue())
    return EXIT_OK


def _cmd_validate(args, out):
    scn = load_scenario(args.scenario)
    out.write(
        f"ok: {scn.run_length} minutes, wake period {scn.wake_period}, mode {scn.plan.mode}\n"
    )
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "doe": _cmd_doe,
    "anova": _cmd_anova,
    "fit": _cmd_fit,
    "surface": _cmd_surface,
    "validate": _cmd_validate,
}


def main(argv=None) -> None:
    sys.exit(cli_dispatch(argv))
