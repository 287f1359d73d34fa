import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from irrigsim.doe import (
    BASE_FACTORS,
    DEFAULT_GENERATORS,
    FACTORS,
    SATURATION_MARGIN,
    SOIL_LEVELS,
    DesignError,
    FactorSpec,
    alias_partners,
    decode_row,
    defining_relation,
    doe_initial_theta,
    full_factorial,
    generate_design,
    model_terms,
    parse_word,
    resolution,
    run_campaign,
    search_generators,
)
from irrigsim.soil_dynamics import threshold_moisture


def brute_resolution(runs):
    """Shortest set of columns whose elementwise product is constant."""
    k = runs.shape[1]
    for size in range(1, k + 1):
        for cols in itertools.combinations(range(k), size):
            prod = np.prod(runs[:, cols], axis=1)
            if np.all(prod == prod[0]):
                return size
    return None


# ----------------------------------------------------------- resolution


def test_resolution_three():
    assert resolution([("C", "A:B")], "ABC") == 3


def test_resolution_five():
    assert resolution([("E", "A:B:C:D")], "ABCDE") == 5


def test_length_four_generator_bounds_resolution():
    gens = list(DEFAULT_GENERATORS[:-1]) + [("ro", "rt:ke:wp")]
    assert resolution(gens) <= 4
    with pytest.raises(DesignError, match="ro"):
        generate_design(gens)


def test_default_relation_size_and_resolution():
    rel = defining_relation(DEFAULT_GENERATORS)
    assert len(rel) == 31
    assert resolution(DEFAULT_GENERATORS) == 5


def test_resolution_matches_brute_force_oracle(design):
    assert brute_resolution(design.runs) == design.resolution == 5


@pytest.mark.parametrize(
    "gens",
    [
        [("C", "A:B")],
        [("D", "A:B:C")],
        [("E", "A:B"), ("D", "A:C")],
        [("F", "A:B:C"), ("E", "B:C:D")],
    ],
)
def test_resolution_small_designs_vs_oracle(gens):
    letters = sorted({t for t, _ in gens} | {c for _, w in gens for c in w.split(":")})
    base = [c for c in letters if c not in {t for t, _ in gens}]
    runs = full_factorial(len(base))
    cols = {b: runs[:, i] for i, b in enumerate(base)}
    for t, w in gens:
        cols[t] = np.prod([cols[c] for c in w.split(":")], axis=0)
    full = np.column_stack([cols[c] for c in letters])
    assert resolution(gens, letters) == brute_resolution(full)


@pytest.mark.parametrize("word", ["rt:rt:tm", "rt::tm", "", "rt:zz"])
def test_malformed_words_rejected(word):
    with pytest.raises(DesignError):
        parse_word(word, FACTORS)


def test_generator_on_own_letter_rejected():
    with pytest.raises(DesignError):
        resolution([("pr", "pr:rt:tm:evt")], FACTORS)


def test_alias_partners_of_main_effect_are_long():
    partners = alias_partners("rt", DEFAULT_GENERATORS)
    assert len(partners) == 31
    assert min(len(w) for w in partners) >= 4


# --------------------------------------------------------------- design


def test_design_shape_and_balance(design):
    assert design.runs.shape == (256, 13)
    assert set(np.unique(design.runs)) == {-1.0, 1.0}
    assert np.all(design.runs.sum(axis=0) == 0)


def test_main_and_two_factor_columns_orthogonal(design):
    terms = model_terms()
    assert len(terms) == 91
    X = np.column_stack([design.term_column(t) for t in terms])
    assert np.all(X.sum(axis=0) == 0)
    gram = X.T @ X
    assert np.array_equal(gram, 256 * np.eye(91))


def test_residual_degrees_of_freedom(design):
    assert design.n_runs - 1 - len(model_terms()) == 164


def test_rows_satisfy_generators(design):
    for target, word in design.generators:
        prod = np.prod([design.column(f) for f in word.split(":")], axis=0)
        assert np.array_equal(prod, design.column(target))


def test_base_columns_lexicographic(design):
    base = np.column_stack([design.column(f) for f in BASE_FACTORS])
    assert np.array_equal(base, full_factorial(8))


def test_design_deterministic():
    assert np.array_equal(generate_design().runs, generate_design().runs)


def test_search_finds_valid_generators():
    gens = search_generators()
    assert gens is not None
    assert resolution(gens) >= 5
    generate_design(gens)


# -------------------------------------------------------------- decoding


def test_decode_sandy_high():
    s = decode_row([1] * 13, "sandy")
    assert (s.irrigation_rate, s.wake_period) == (0.334, 60)
    assert s.forcing.ref_evt_rate[0] == 0.0063
    sp = s.soil
    assert (sp.wilting_point, sp.field_capacity, sp.saturation) == (0.1, 0.20, 0.45)
    assert (sp.percolation_rate, sp.max_infiltration_rate) == (0.014, 0.690)
    assert (s.crop.kcb, s.crop.ke, sp.p_fraction, sp.runoff_coeff, sp.root_zone) == (1.15, 0.3, 0.65, 0.3, 3000)
    assert (s.warm_up, s.run_length) == (2880, 17280)
    assert s.soil_sensor.noise_sd == 0.0 and s.failure_prob == 0.0


def test_decode_clay_low():
    s = decode_row([-1] * 13, "clay")
    sp = s.soil
    assert (s.irrigation_rate, s.wake_period, s.forcing.ref_evt_rate[0]) == (0.0125, 20, 0.0021)
    assert (sp.wilting_point, sp.field_capacity, sp.saturation) == (0.17, 0.30, 0.4)
    assert (sp.percolation_rate, sp.max_infiltration_rate) == (0.0007, 0.025)
    assert (s.crop.kcb, s.crop.ke, sp.p_fraction, sp.runoff_coeff, sp.root_zone) == (0.2, 0.1, 0.2, 0.05, 300)


def test_decode_is_componentwise():
    row = [-1] * 13
    row[FACTORS.index("rz")] = 1
    a, b = decode_row([-1] * 13, "silty"), decode_row(row, "silty")
    assert b.soil.root_zone == 3000 and a.soil.root_zone == 300
    assert a.soil.field_capacity == b.soil.field_capacity and a.irrigation_rate == b.irrigation_rate


def test_clay_saturation_conflict():
    row = [-1] * 13
    row[FACTORS.index("fc")] = 1  # fc 0.42 against st 0.40
    with pytest.raises(DesignError, match="saturation"):
        decode_row(row, "clay", repair_saturation=False)
    s = decode_row(row, "clay")
    assert s.soil.saturation == pytest.approx(0.42 + SATURATION_MARGIN)


def test_decode_row_length_checked():
    with pytest.raises(DesignError):
        decode_row([1] * 12)


@given(coded=st.lists(st.sampled_from([-1, 1]), min_size=13, max_size=13), soil=st.sampled_from(list(SOIL_LEVELS)))
def test_initial_theta_in_admissible_band(coded, soil):
    s = decode_row(coded, soil)
    th = threshold_moisture(s.soil)
    assert th <= s.theta0 <= s.soil.field_capacity
    assert s.theta0 == doe_initial_theta(s.soil, s.crop, s.forcing.ref_evt_rate[0])


def test_factor_spec():
    f = FactorSpec("rt", 0.1, 0.3)
    assert f.decode(-1) == 0.1 and f.decode(1) == 0.3 and f.decode(0) == pytest.approx(0.2)
    assert f.encode(0.3) == 1.0
    with pytest.raises(ValueError):
        FactorSpec("rt", 0.3, 0.1)
    with pytest.raises(ValueError):
        FactorSpec("xx", 0.0, 1.0)


# -------------------------------------------------------------- campaign


def test_campaign_rows_and_ideal_responses(campaigns):
    for soil, camp in campaigns.items():
        assert len(camp.results) == 256
        assert np.all(camp.response("R1") == 0), soil
        assert np.all(camp.response("R2") == 0), soil


def test_campaign_rerun_identical(design, campaigns):
    idx = [0, 77, 255]
    sub = type(design)(design.runs[idx], design.factors, design.generators, design.resolution)
    again = run_campaign("silty", sub, seed=0)
    twice = run_campaign("silty", sub, seed=0)
    assert [r.summary() for r in again.results] == [r.summary() for r in twice.results]
    # noiseless sensors and no failures: the row alone fixes the result
    full = campaigns["silty"]
    assert [full.results[i].summary()["operating_time"] for i in idx] == list(again.response("R4").astype(int))


def test_unknown_soil():
    with pytest.raises(ValueError):
        run_campaign("peat")
