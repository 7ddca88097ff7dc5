"""Stratified pooling, reversal detection, confounder bounds, MC
sensitivity."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from statsmodels.stats.contingency_tables import StratifiedTable

from causalcheck import (
    BiasDirection,
    ConfounderSpec,
    DegenerateError,
    Design,
    DomainError,
    MixedDesignError,
    SensitivityRange,
    ValidationError,
    bias_adjust,
    cornfield_requirements,
    detect_simpson,
    mantel_haenszel_pool,
    mc_sensitivity,
    meets_cornfield,
    odds_ratio,
    relative_risk,
)

from conftest import single_study, stratified_study, table


REVERSAL_CELLS = [(2, 8, 1, 9), (9, 1, 30, 10)]


def sm_tables(cells):
    return np.dstack(
        [np.array([[a, b], [c, d]]) for a, b, c, d in cells]
    )


# --- Mantel-Haenszel -----------------------------------------------------


def test_mh_rr_matches_statsmodels():
    study = stratified_study(REVERSAL_CELLS)
    est = mantel_haenszel_pool(study)
    oracle = StratifiedTable(sm_tables(REVERSAL_CELLS))
    assert est.point == pytest.approx(oracle.riskratio_pooled, rel=1e-12)


def test_mh_rr_greenland_robins_interval():
    # exact-fraction transcription of the pooled variance for this case
    est = mantel_haenszel_pool(stratified_study(REVERSAL_CELLS))
    r = Fraction(2 * 10, 20) + Fraction(9 * 40, 50)
    s = Fraction(1 * 10, 20) + Fraction(30 * 10, 50)
    v = (
        Fraction(10 * 10 * 3 - 2 * 1 * 20, 20 * 20)
        + Fraction(10 * 40 * 39 - 9 * 30 * 50, 50 * 50)
    ) / (r * s)
    assert est.point == pytest.approx(float(r / s), rel=1e-14)
    se = math.sqrt(float(v))
    z = 1.959963984540054
    assert est.lcl == pytest.approx(float(r / s) * math.exp(-z * se), rel=1e-9)
    assert est.ucl == pytest.approx(float(r / s) * math.exp(z * se), rel=1e-9)


def test_mh_or_matches_statsmodels():
    cells = [(4, 16, 5, 15), (12, 2, 10, 8)]
    study = stratified_study(cells, design=Design.CASE_CONTROL)
    est = mantel_haenszel_pool(study)
    oracle = StratifiedTable(sm_tables(cells))
    assert est.point == pytest.approx(oracle.oddsratio_pooled, rel=1e-12)
    lo, hi = oracle.oddsratio_pooled_confint(alpha=0.05)
    assert est.lcl == pytest.approx(lo, rel=1e-7)
    assert est.ucl == pytest.approx(hi, rel=1e-7)


def test_mh_single_stratum_is_crude():
    study = single_study(25, 975, 5, 995)
    est = mantel_haenszel_pool(study)
    assert est == relative_risk(table(25, 975, 5, 995))

    cc = single_study(25, 975, 5, 995, Design.CASE_CONTROL)
    assert mantel_haenszel_pool(cc) == odds_ratio(
        table(25, 975, 5, 995, Design.CASE_CONTROL)
    )


def test_mh_identical_strata_equal_crude():
    study = stratified_study([(6, 94, 3, 97)] * 3)
    est = mantel_haenszel_pool(study)
    assert est.point == pytest.approx(2.0, rel=1e-12)


def test_mh_mixed_design():
    from causalcheck import StratifiedStudy, Stratum

    bad = StratifiedStudy(
        study_id="s",
        strata=(
            Stratum((("g", "1"),), table(2, 8, 1, 9, Design.COHORT)),
            Stratum((("g", "2"),), table(3, 7, 2, 8, Design.CASE_CONTROL)),
        ),
    )
    with pytest.raises(MixedDesignError):
        mantel_haenszel_pool(bad)


def test_mh_degenerate_zero_numerator():
    study = stratified_study([(0, 10, 5, 5), (0, 10, 5, 5)])
    with pytest.raises(DegenerateError):
        mantel_haenszel_pool(study)


def test_mh_empty_arm_stratum():
    study = stratified_study([(2, 8, 1, 9), (0, 0, 5, 5)])
    with pytest.raises(DegenerateError):
        mantel_haenszel_pool(study)


@given(
    st.lists(
        st.tuples(
            st.integers(1, 40),
            st.integers(1, 40),
            st.integers(1, 40),
            st.integers(1, 40),
        ),
        min_size=2,
        max_size=4,
    )
)
@settings(deadline=None, max_examples=60)
def test_mh_matches_statsmodels_property(cells):
    study = stratified_study(cells)
    est = mantel_haenszel_pool(study)
    oracle = StratifiedTable(sm_tables(cells))
    assert est.point == pytest.approx(oracle.riskratio_pooled, rel=1e-10)

    cc = stratified_study(cells, design=Design.CASE_CONTROL)
    assert mantel_haenszel_pool(cc).point == pytest.approx(
        oracle.oddsratio_pooled, rel=1e-10
    )


# --- Simpson reversal ----------------------------------------------------


def test_simpson_reversal_detected():
    rep = detect_simpson(stratified_study(REVERSAL_CELLS))
    assert rep.reversal
    assert rep.crude.point == pytest.approx((11 / 20) / (31 / 50), rel=1e-12)
    assert all(est.point > 1 for est in rep.per_stratum)
    assert rep.crude.point < 1


def test_simpson_homogeneous_no_reversal():
    rep = detect_simpson(stratified_study([(6, 94, 3, 97), (12, 88, 6, 94)]))
    assert not rep.reversal


def test_simpson_crude_exactly_one():
    # strata straddle 1 and the crude sits exactly on it: no reversal
    rep = detect_simpson(stratified_study([(1, 4, 2, 3), (2, 3, 1, 4)]))
    assert rep.crude.point == 1.0
    assert not rep.reversal


def test_simpson_requires_strata():
    with pytest.raises(ValidationError):
        detect_simpson(single_study(2, 8, 1, 9))


def test_simpson_case_control_uses_or():
    study = stratified_study(REVERSAL_CELLS, design=Design.CASE_CONTROL)
    rep = detect_simpson(study)
    assert rep.per_stratum[0].point == pytest.approx(
        (2 * 9) / (8 * 1), rel=1e-12
    )


# --- Cornfield bounds ----------------------------------------------------


def test_cornfield_requirements():
    req = cornfield_requirements(5.0)
    assert req.min_rr_confounder == 5.0
    assert req.min_prevalence_ratio == 5.0


def test_cornfield_requires_positive_association():
    with pytest.raises(DomainError):
        cornfield_requirements(1.0)
    with pytest.raises(DomainError):
        cornfield_requirements(0.5)


def test_meets_cornfield_cases():
    rr_obs = 5.0
    strong = ConfounderSpec(10.0, 0.9, 0.1)
    assert meets_cornfield(strong, rr_obs)
    weak_rr = ConfounderSpec(4.0, 0.9, 0.1)
    assert not meets_cornfield(weak_rr, rr_obs)
    weak_prev = ConfounderSpec(10.0, 0.4, 0.1)
    assert not meets_cornfield(weak_prev, rr_obs)
    absent = ConfounderSpec(10.0, 0.0, 0.1)
    assert not meets_cornfield(absent, rr_obs)
    infinite_ratio = ConfounderSpec(10.0, 0.5, 0.0)
    assert meets_cornfield(infinite_ratio, rr_obs)


# --- bias adjustment -----------------------------------------------------


def test_bias_factor_example():
    adj = bias_adjust(1.8, ConfounderSpec(2.0, 0.5, 0.25))
    assert adj.bias_factor == pytest.approx(1.2, rel=1e-15)
    assert adj.rr_adjusted == pytest.approx(1.5, rel=1e-12)
    assert adj.direction is BiasDirection.INFLATING


def test_bias_directions():
    masking = bias_adjust(2.0, ConfounderSpec(3.0, 0.1, 0.6))
    assert masking.direction is BiasDirection.MASKING
    assert masking.bias_factor < 1
    assert masking.rr_adjusted > 2.0

    neutral = bias_adjust(2.0, ConfounderSpec(3.0, 0.4, 0.4))
    assert neutral.direction is BiasDirection.NEUTRAL
    assert neutral.bias_factor == 1.0
    assert neutral.rr_adjusted == 2.0

    null_conf = bias_adjust(2.0, ConfounderSpec(1.0, 0.9, 0.1))
    assert null_conf.bias_factor == 1.0


def brute_force_bias(rr_c: Fraction, p1: Fraction, p0: Fraction) -> Fraction:
    """Crude RR of an exact stratified population with a null exposure.

    Arms are sized so confounder counts are whole numbers; the only
    risk-raising variable is the confounder, so the crude RR equals the
    confounding bias exactly.
    """
    n = 840  # divisible by every denominator used in the tests
    r0 = Fraction(1, 1000)
    exposed_conf = n * p1
    unexposed_conf = n * p0
    assert exposed_conf.denominator == 1 and unexposed_conf.denominator == 1
    cases_exposed = exposed_conf * r0 * rr_c + (n - exposed_conf) * r0
    cases_unexposed = unexposed_conf * r0 * rr_c + (n - unexposed_conf) * r0
    return cases_exposed / cases_unexposed


@given(
    st.integers(1, 80),
    st.integers(0, 840),
    st.integers(0, 840),
)
def test_bias_factor_matches_population_construction(rr10, k1, k0):
    rr_c = Fraction(rr10, 10) + 1  # 1.1 .. 9.0
    p1 = Fraction(k1, 840)
    p0 = Fraction(k0, 840)
    adj = bias_adjust(3.0, ConfounderSpec(float(rr_c), float(p1), float(p0)))
    oracle = brute_force_bias(rr_c, p1, p0)
    assert adj.bias_factor == pytest.approx(float(oracle), rel=1e-12)


@given(
    st.floats(min_value=1.0, max_value=10.0),
    st.floats(min_value=0.0, max_value=1.0),
    st.floats(min_value=0.0, max_value=1.0),
)
def test_bias_factor_bounded_by_rr_c(rr_c, p1, p0):
    adj = bias_adjust(4.0, ConfounderSpec(rr_c, p1, p0))
    assert adj.bias_factor <= rr_c
    assert adj.bias_factor >= 1.0 / rr_c
    assert adj.rr_adjusted >= 4.0 / rr_c


# --- MC sensitivity ------------------------------------------------------


RANGES = SensitivityRange(
    rr_range=(1.0, 4.0),
    p1_range=(0.1, 0.9),
    p0_range=(0.0, 0.5),
    draws=400,
    seed=11,
)


def test_mc_deterministic():
    a = mc_sensitivity(3.0, RANGES)
    b = mc_sensitivity(3.0, RANGES)
    assert a == b


def test_mc_worker_count_invariant():
    serial = mc_sensitivity(3.0, RANGES, workers=1)
    threaded = mc_sensitivity(3.0, RANGES, workers=4)
    assert serial == threaded


def test_mc_seed_changes_results():
    other = SensitivityRange(
        rr_range=(1.0, 4.0),
        p1_range=(0.1, 0.9),
        p0_range=(0.0, 0.5),
        draws=400,
        seed=12,
    )
    assert mc_sensitivity(3.0, RANGES) != mc_sensitivity(3.0, other)


def test_mc_quantiles_ordered():
    out = mc_sensitivity(3.0, RANGES)
    values = [v for _, v in out.quantiles]
    assert values == sorted(values)
    assert [q for q, _ in out.quantiles] == ["2.5", "25", "50", "75", "97.5"]


def test_mc_point_ranges_collapse():
    pinned = SensitivityRange(
        rr_range=(2.0, 2.0),
        p1_range=(0.5, 0.5),
        p0_range=(0.25, 0.25),
        draws=50,
        seed=0,
    )
    out = mc_sensitivity(1.8, pinned)
    for _, v in out.quantiles:
        assert v == pytest.approx(1.5, rel=1e-12)
    assert out.fraction_above_threshold == 0.0


def test_mc_neutral_confounder_keeps_rr():
    pinned = SensitivityRange(
        rr_range=(1.0, 1.0),
        p1_range=(0.0, 1.0),
        p0_range=(0.0, 1.0),
        draws=64,
        seed=3,
    )
    out = mc_sensitivity(2.5, pinned, threshold=2.0)
    for _, v in out.quantiles:
        assert v == pytest.approx(2.5, rel=1e-12)
    assert out.fraction_above_threshold == 1.0


def test_mc_strict_threshold():
    pinned = SensitivityRange(
        rr_range=(1.0, 1.0),
        p1_range=(0.3, 0.3),
        p0_range=(0.3, 0.3),
        draws=10,
        seed=0,
    )
    out = mc_sensitivity(2.0, pinned, threshold=2.0)
    assert out.fraction_above_threshold == 0.0  # equal is not above


def test_mc_validation():
    with pytest.raises(DomainError):
        mc_sensitivity(0.0, RANGES)
    with pytest.raises(ValidationError):
        mc_sensitivity(2.0, RANGES, workers=0)
    with pytest.raises(ValidationError):
        SensitivityRange(
            rr_range=(4.0, 1.0),
            p1_range=(0.0, 1.0),
            p0_range=(0.0, 1.0),
            draws=10,
            seed=0,
        )
    with pytest.raises(ValidationError):
        SensitivityRange(
            rr_range=(1.0, 4.0),
            p1_range=(0.0, 1.5),
            p0_range=(0.0, 1.0),
            draws=10,
            seed=0,
        )
    with pytest.raises(ValidationError):
        SensitivityRange(
            rr_range=(1.0, 4.0),
            p1_range=(0.0, 1.0),
            p0_range=(0.0, 1.0),
            draws=0,
            seed=0,
        )
