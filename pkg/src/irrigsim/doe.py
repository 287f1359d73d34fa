"""Two-level fractional factorial designs and the 13-factor irrigation campaign.

Words are strings of factor letters joined by ``:`` (``"rt:tm:evt:wp"``); a
generator ``(target, word)`` defines the column of ``target`` as the
elementwise product of the columns in ``word``.
"""
from __future__ import annotations

import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .agent_net import IrrigationPlan, SensorModel
from .sim_engine import DEFAULT_RAIN_SENSOR, Scenario, run
from .forecast import ForecastSeries
from .soil_dynamics import CropParams, SoilParams, threshold_moisture

# display / CSV column order
FACTORS = ("rt", "tm", "evt", "wp", "fc", "st", "pr", "nf", "ke", "kcb", "rz", "p", "ro")
CONTROLLABLE = frozenset({"rt", "tm"})

BASE_FACTORS = ("rt", "tm", "evt", "kcb", "ke", "wp", "fc", "st")
# Every word in the defining relation has length >= 5 and at least two
# letters outside {rt, tm, evt, kcb, ke}, so no interaction among the
# influential factors is aliased with a main effect of the others.
DEFAULT_GENERATORS = (
    ("pr", "rt:tm:evt:wp"),
    ("nf", "rt:tm:kcb:fc"),
    ("rz", "rt:tm:ke:st"),
    ("p", "rt:evt:kcb:st"),
    ("ro", "rt:ke:wp:fc"),
)

WARM_UP = 2880
RUN_LENGTH = 17280


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class FactorSpec:
    name: str
    low: float
    high: float
    controllable: bool = False

    def __post_init__(self):
        if self.name not in FACTORS:
            raise ValueError(f"unknown factor {self.name!r}")
        if not self.low < self.high:
            raise ValueError(f"{self.name}: low must be < high")

    def decode(self, coded: float) -> float:
        """Affine map from the coded scale (-1 low, +1 high)."""
        if coded == -1:
            return self.low
        if coded == 1:
            return self.high
        return self.low + (coded + 1.0) * 0.5 * (self.high - self.low)

    def encode(self, value: float) -> float:
        return 2.0 * (value - self.low) / (self.high - self.low) - 1.0


def _specs(levels: dict) -> dict:
    return {n: FactorSpec(n, lo, hi, n in CONTROLLABLE) for n, (lo, hi) in levels.items()}


SOIL_LEVELS = {
    "sandy": _specs(
        dict(
            evt=(0.0021, 0.0063), rt=(0.167, 0.334), tm=(20, 60), wp=(0.05, 0.1),
            fc=(0.15, 0.20), st=(0.4, 0.45), pr=(0.0035, 0.014), nf=(0.334, 0.690),
            kcb=(0.2, 1.15), ke=(0.1, 0.3), p=(0.2, 0.65), ro=(0.05, 0.3), rz=(300, 3000),
        )
    ),
    "silty": _specs(
        dict(
            evt=(0.0021, 0.0063), rt=(0.063, 0.126), tm=(20, 60), wp=(0.07, 0.22),
            fc=(0.25, 0.37), st=(0.45, 0.5), pr=(0.00083, 0.0042), nf=(0.126, 0.19),
            kcb=(0.2, 1.15), ke=(0.1, 0.3), p=(0.2, 0.65), ro=(0.05, 0.3), rz=(300, 3000),
        )
    ),
    "clay": _specs(
        dict(
            evt=(0.0021, 0.0063), rt=(0.0125, 0.025), tm=(20, 60), wp=(0.17, 0.24),
            fc=(0.30, 0.42), st=(0.4, 0.51), pr=(0.0007, 0.0035), nf=(0.025, 0.085),
            kcb=(0.2, 1.15), ke=(0.1, 0.3), p=(0.2, 0.65), ro=(0.05, 0.3), rz=(300, 3000),
        )
    ),
}
SOILS = tuple(SOIL_LEVELS)


# ------------------------------------------------------------------ words


def parse_word(word, letters: Optional[Sequence[str]] = None) -> frozenset:
    parts = word.split(":") if isinstance(word, str) else list(word)
    if len(set(parts)) != len(parts):
        raise DesignError(f"duplicate letter in word {word!r}")
    if letters is not None:
        unknown = [p for p in parts if p not in letters]
        if unknown:
            raise DesignError(f"unknown factor letter(s) {unknown} in word {word!r}")
    if not parts or any(not p for p in parts):
        raise DesignError(f"malformed word {word!r}")
    return frozenset(parts)


def format_word(word: frozenset, order: Sequence[str] = FACTORS) -> str:
    rank = {n: i for i, n in enumerate(order)}
    return ":".join(sorted(word, key=lambda x: (rank.get(x, len(rank)), x)))


def defining_words(generators, letters: Optional[Sequence[str]] = None) -> list:
    """Defining words ``target * word`` of each generator."""
    out = []
    targets = set()
    for target, word in generators:
        w = parse_word(word, letters)
        if letters is not None and target not in letters:
            raise DesignError(f"unknown generated factor {target!r}")
        if target in w:
            raise DesignError(f"generator for {target!r} uses its own letter")
        if target in targets:
            raise DesignError(f"factor {target!r} generated twice")
        targets.add(target)
        out.append(w | {target})
    generated = targets
    for target, word in generators:
        clash = generated & parse_word(word)
        if clash:
            raise DesignError(f"generator for {target!r} uses generated letter(s) {sorted(clash)}")
    return out


def defining_relation(generators, letters: Optional[Sequence[str]] = None) -> list:
    """All 2^k - 1 words of the defining relation, sorted by length."""
    words = defining_words(generators, letters)
    rel = set()
    for r in range(1, len(words) + 1):
        for combo in itertools.combinations(words, r):
            w = frozenset()
            for x in combo:
                w = w ^ x
            rel.add(w)
    return sorted(rel, key=lambda w: (len(w), sorted(w)))


def resolution(generators, letters: Optional[Sequence[str]] = None) -> int:
    """Shortest word length in the defining relation."""
    return len(defining_relation(generators, letters)[0])


def alias_partners(effect, generators) -> list:
    """Effects aliased with ``effect`` (a word), shortest first."""
    e = parse_word(effect)
    return sorted((e ^ w for w in defining_relation(generators)), key=lambda w: (len(w), sorted(w)))


# ----------------------------------------------------------------- design


@dataclass(frozen=True)
class DesignMatrix:
    runs: np.ndarray  # (n_runs, n_factors) in {-1, +1}
    factors: tuple
    generators: tuple
    resolution: int

    def column(self, name: str) -> np.ndarray:
        return self.runs[:, self.factors.index(name)]

    def term_column(self, term: str) -> np.ndarray:
        col = np.ones(self.runs.shape[0])
        for f in term.split(":"):
            col = col * self.column(f)
        return col

    @property
    def n_runs(self) -> int:
        return self.runs.shape[0]

    def generator_words(self) -> list:
        return [f"{t}={w}" for t, w in self.generators]


def full_factorial(k: int) -> np.ndarray:
    """2^k rows, lexicographic with the first column varying slowest."""
    return np.array(list(itertools.product((-1, 1), repeat=k)), dtype=float)


def generate_design(
    generators=DEFAULT_GENERATORS,
    base: Sequence[str] = BASE_FACTORS,
    factors: Sequence[str] = FACTORS,
    min_resolution: int = 5,
) -> DesignMatrix:
    """Regular two-level fraction: full factorial on ``base`` plus generated columns."""
    factors = tuple(factors)
    generators = tuple((t, format_word(parse_word(w), factors)) for t, w in generators)
    if set(base) | {t for t, _ in generators} != set(factors) or len(base) + len(generators) != len(factors):
        raise DesignError("base and generated factors must partition the factor set exactly")
    rel = defining_relation(generators, factors)
    res = len(rel[0])
    if res < min_resolution:
        raise DesignError(
            f"generators give resolution {res} < {min_resolution}; "
            f"violating word {format_word(rel[0], factors)}"
        )
    full = full_factorial(len(base))
    cols = {n: full[:, i] for i, n in enumerate(base)}
    for target, word in generators:
        c = np.ones(full.shape[0])
        for f in word.split(":"):
            c = c * cols[f]
        cols[target] = c
    runs = np.column_stack([cols[n] for n in factors])
    return DesignMatrix(runs, factors, generators, res)


def search_generators(
    base: Sequence[str] = BASE_FACTORS,
    generated: Sequence[str] = ("pr", "nf", "rz", "p", "ro"),
    protect: Sequence[str] = ("rt", "tm", "evt", "kcb", "ke"),
    min_length: int = 5,
    min_unprotected: int = 2,
) -> Optional[tuple]:
    """Depth-first search for generator words.

    Returns the first set whose defining relation has every word of length
    at least ``min_length`` containing at least ``min_unprotected`` letters
    outside ``protect``; None if no such set exists.
    """
    nb = len(base)
    protect_mask = sum(1 << i for i, n in enumerate(base) if n in protect)
    cands = [
        sum(1 << i for i in c)
        for r in range(min_length - 1, nb + 1)
        for c in itertools.combinations(range(nb), r)
    ]

    def popcount(x):
        return bin(x).count("1")

    def ok(gens, g):
        j = len(gens)
        n = len(gens)
        for r in range(n + 1):
            for combo in itertools.combinations(range(n), r):
                w = g | (1 << (nb + j))
                for k in combo:
                    w ^= gens[k] | (1 << (nb + k))
                if popcount(w) < min_length or popcount(w & ~protect_mask) < min_unprotected:
                    return False
        return True

    def dfs(start, gens):
        if len(gens) == len(generated):
            return gens
        for i in range(start, len(cands)):
            if ok(gens, cands[i]):
                found = dfs(i + 1, gens + [cands[i]])
                if found:
                    return found
        return None

    found = dfs(0, [])
    if found is None:
        return None
    return tuple(
        (t, ":".join(base[i] for i in range(nb) if g >> i & 1)) for t, g in zip(generated, found)
    )


def model_terms(factors: Sequence[str] = FACTORS) -> list:
    """The 13 main effects followed by the 78 two-factor interactions."""
    return list(factors) + [f"{a}:{b}" for a, b in itertools.combinations(factors, 2)]


# ---------------------------------------------------------------- decoding


def doe_initial_theta(soil: SoilParams, crop: CropParams, evt: float, warm_up: int = WARM_UP) -> float:
    """Start close enough to the threshold that control engages during warm-up.

    The soil begins half a warm-up's worth of unstressed crop ET above the
    threshold, never higher than the midpoint of [threshold, field capacity].
    """
    th = threshold_moisture(soil)
    mid = 0.5 * (th + soil.field_capacity)
    drop = 0.5 * warm_up * evt * (crop.kcb + crop.ke) / soil.root_zone
    return min(mid, th + drop)


SATURATION_MARGIN = 0.01


def decode_row(
    row,
    soil: str = "sandy",
    seed: int = 0,
    specs: Optional[dict] = None,
    repair_saturation: bool = True,
) -> Scenario:
    """Physical scenario for one coded design row (ordered as ``FACTORS``).

    The clay levels let a high field capacity (0.42) meet a low saturation
    (0.40).  With ``repair_saturation`` the saturation is lifted to
    ``fc + SATURATION_MARGIN`` in those rows; otherwise they are rejected.
    Under automatic control moisture stays below field capacity, so the
    saturation level never binds either way.
    """
    specs = specs if specs is not None else SOIL_LEVELS[soil]
    missing = set(FACTORS) - set(specs)
    if missing:
        raise DesignError(f"factor specs missing: {sorted(missing)}")
    if len(row) != len(FACTORS):
        raise DesignError(f"row needs {len(FACTORS)} coded entries, got {len(row)}")
    v = {n: specs[n].decode(float(c)) for n, c in zip(FACTORS, row)}
    if v["st"] <= v["fc"]:
        if not repair_saturation:
            raise DesignError(
                f"decoded saturation {v['st']} is not above field capacity {v['fc']} "
                "(SoilParams ordering wilting_point < field_capacity < saturation)"
            )
        v["st"] = min(1.0, v["fc"] + SATURATION_MARGIN)
    soil_params = SoilParams(
        wilting_point=v["wp"],
        field_capacity=v["fc"],
        saturation=v["st"],
        percolation_rate=v["pr"],
        max_infiltration_rate=v["nf"],
        runoff_coeff=v["ro"],
        root_zone=v["rz"],
        p_fraction=v["p"],
    )
    crop = CropParams(kcb=v["kcb"], ke=v["ke"])
    tm = v["tm"]
    if tm != int(tm):
        raise DesignError(f"tm must decode to whole minutes, got {tm}")
    return Scenario(
        soil=soil_params,
        crop=crop,
        forcing=ForecastSeries.constant(v["evt"]),
        plan=IrrigationPlan(mode="automatic"),
        wake_period=int(tm),
        irrigation_rate=v["rt"],
        warm_up=WARM_UP,
        run_length=RUN_LENGTH,
        seed=seed,
        initial_theta=doe_initial_theta(soil_params, crop, v["evt"]),
        failure_prob=0.0,
        soil_sensor=SensorModel(),
        rain_sensor=DEFAULT_RAIN_SENSOR,
    )


def run_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence((seed, index)).generate_state(1)[0])


# ----------------------------------------------------------------- campaign


RESPONSES = ("R1", "R2", "R3", "R4")


@dataclass
class CampaignResult:
    soil: str
    design: DesignMatrix
    seed: int
    dt: float
    results: list  # RunResult per run index

    def response(self, name: str) -> np.ndarray:
        i = RESPONSES.index(name)
        return np.array([r.responses()[i] for r in self.results], dtype=float)

    @property
    def operating_time(self) -> np.ndarray:
        return self.response("R4")

    def error_sums(self) -> tuple:
        """Sum over runs of squared and relative squared irrigation errors."""
        sq = float(np.sum([r.error_sq for r in self.results]))
        rel = float(np.sum([r.relative_error_sq for r in self.results]))
        return sq, rel

    def table(self) -> list:
        rows = []
        for i, (coded, r) in enumerate(zip(self.design.runs, self.results)):
            rows.append({"run": i, **{f: int(c) for f, c in zip(self.design.factors, coded)},
                         **dict(zip(RESPONSES, r.responses()))})
        return rows


def _run_one(args):
    idx, row, soil, seed, dt = args
    scn = decode_row(row, soil, run_seed(seed, idx))
    if dt != 1.0:
        scn = replace(scn, dt=dt)
    try:
        return idx, run(scn, record_events=False)
    except Exception as exc:  # surfaced with the failing index
        raise RuntimeError(f"run {idx} failed: {exc}") from exc


def run_campaign(
    soil: str,
    design: Optional[DesignMatrix] = None,
    seed: int = 0,
    jobs: int = 1,
    dt: float = 1.0,
) -> CampaignResult:
    """Simulate every design row for one soil; ordering is by run index."""
    if soil not in SOIL_LEVELS:
        raise ValueError(f"unknown soil {soil!r}; choose from {SOILS}")
    design = design if design is not None else generate_design()
    tasks = [(i, tuple(row), soil, seed, dt) for i, row in enumerate(design.runs)]
    jobs = jobs if jobs and jobs > 0 else (os.cpu_count() or 1)
    if jobs == 1:
        out = [_run_one(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(_run_one, tasks, chunksize=8))
    out.sort(key=lambda x: x[0])
    return CampaignResult(soil, design, seed, dt, [r for _, r in out])
