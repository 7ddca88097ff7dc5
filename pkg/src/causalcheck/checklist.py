"""The ten-test causality checklist and its aggregation rule.

Tests 1 (mechanism), 2 (analogy), 3 (temporality) and 10 (logic) are
human territory: their statuses are copied from supplied judgments and
never computed. Tests 4 through 9 are computed from the evidence bundle.

The aggregation rule is this engine's own construction and is therefore
spelled out rather than assumed: the overall verdict is
CausationSupported only when Test 8 passes (without significance the
remaining questions are moot), Test 5 is Pass or Discounted, and no test
anywhere is Fail. NotAssessable does not block by default; strict mode
additionally demands that Tests 6 and 7 pass outright. The vocabulary is
two-valued, supported or not established; the checklist never claims to
disprove causation.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .confounding import (
    ConfounderSpec,
    bias_adjust,
    mantel_haenszel_pool,
    meets_cornfield,
)
from .effects import (
    EffectEstimate,
    association_test,
    odds_ratio,
    relative_risk,
)
from .errors import ArityError, CausalCheckError, ConfigError
from .study import Design, EvidenceBundle, Status, StratifiedStudy, validate_table
from .synthesis import (
    MetaResult,
    StudyEstimate,
    consistency_verdict,
    dose_trend,
    fit_doll_peto,
    meta_analyze,
    study_estimate_from_effect,
)

TEST_NAMES = {
    1: "Existence of mechanism",
    2: "Analogous relationships",
    3: "Temporality",
    4: "Validity of data",
    5: "Strength of association",
    6: "Lack of confounders",
    7: "Consistency of association",
    8: "Statistical significance",
    9: "Dose-response relationship",
    10: "Validity of logic",
}

JUDGMENT_TESTS = (1, 2, 3, 10)

WARN_SINGLE_STUDY = (
    "only one study is available: an association observed once cannot "
    "demonstrate consistency and deserves caution until replicated"
)


class Overall(enum.Enum):
    CAUSATION_SUPPORTED = "CausationSupported"
    CAUSATION_NOT_ESTABLISHED = "CausationNotEstablished"


@dataclass(frozen=True)
class ChecklistConfig:
    strength_threshold: float = 2.0
    strict_lcl: bool = False
    alpha: float = 0.05
    heterogeneity_alpha: float = 0.10
    confidence_level: float = 0.95
    strict: bool = False  # make Tests 6 and 7 mandatory

    def __post_init__(self):
        for name in ("alpha", "heterogeneity_alpha", "confidence_level"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if not self.strength_threshold > 0:
            raise ConfigError(
                f"strength_threshold must be positive, "
                f"got {self.strength_threshold}"
            )


@dataclass(frozen=True)
class TestOutcome:
    __test__ = False  # keep pytest from collecting this as a test class

    test_id: int
    name: str
    status: Status
    metrics: dict = field(default_factory=dict)
    rationale: str = ""

    def __post_init__(self):
        if self.test_id not in TEST_NAMES:
            raise ArityError(f"test_id must be 1..10, got {self.test_id}")
        if self.status is Status.DISCOUNTED and not self.rationale:
            raise ArityError(
                f"test {self.test_id}: Discounted requires a rationale"
            )


@dataclass(frozen=True)
class ChecklistReport:
    outcomes: tuple[TestOutcome, ...]
    overall: Overall
    narrative: str


@dataclass(frozen=True)
class PrimaryAnalysis:
    """The estimate and significance test the checklist scores against.

    Selection rule, in order: several studies pool by fixed-effect
    meta-analysis of study-level estimates (each study reduced by
    Mantel-Haenszel across its strata); a lone multi-stratum study uses
    its Mantel-Haenszel estimate with a Wald p; a lone single-table
    study uses the table's estimate and the chi-square or exact test.
    """

    estimate: EffectEstimate
    p_value: float
    method: str
    source: str
    meta: MetaResult | None = None
    study_estimates: tuple[StudyEstimate, ...] = ()


def study_level_estimate(
    study: StratifiedStudy, confidence_level: float
) -> EffectEstimate:
    if len(study.strata) == 1:
        t = study.strata[0].table
        if study.design is Design.COHORT:
            return relative_risk(t, confidence_level)
        return odds_ratio(t, confidence_level)
    return mantel_haenszel_pool(study, confidence_level)


def primary_analysis(
    bundle: EvidenceBundle, config: ChecklistConfig
) -> PrimaryAnalysis:
    level = config.confidence_level
    if len(bundle.studies) == 1:
        study = bundle.studies[0]
        est = study_level_estimate(study, level)
        if len(study.strata) == 1:
            assoc = association_test(study.strata[0].table)
            return PrimaryAnalysis(
                estimate=est,
                p_value=assoc.p_value,
                method=assoc.method.value,
                source=f"study {study.study_id!r} (single table)",
            )
        return PrimaryAnalysis(
            estimate=est,
            p_value=est.p_value,
            method="MantelHaenszelWald",
            source=(
                f"study {study.study_id!r} pooled over "
                f"{len(study.strata)} strata"
            ),
        )
    per_study = tuple(
        study_estimate_from_effect(s.study_id, study_level_estimate(s, level))
        for s in bundle.studies
    )
    meta = meta_analyze(per_study, level)
    return PrimaryAnalysis(
        estimate=meta.pooled_fixed,
        p_value=meta.pooled_fixed.p_value,
        method="MetaFixedWald",
        source=f"fixed-effect pool of {len(bundle.studies)} studies",
        meta=meta,
        study_estimates=per_study,
    )


def _judged_outcome(test_id: int, bundle: EvidenceBundle) -> TestOutcome:
    for j in bundle.judgments:
        if j.test_id == test_id:
            return TestOutcome(
                test_id, TEST_NAMES[test_id], j.verdict, {}, j.rationale
            )
    return TestOutcome(
        test_id,
        TEST_NAMES[test_id],
        Status.NOT_ASSESSABLE,
        {},
        "no judgment supplied",
    )


def _test_4(bundle: EvidenceBundle) -> TestOutcome:
    tables = [st.table for s in bundle.studies for st in s.strata]
    tables += [p.table for d in bundle.dose_series for p in d.points]
    violations: list[str] = []
    warnings: list[str] = []
    for t in tables:
        report = validate_table(t)
        violations.extend(report.violations)
        warnings.extend(report.warnings)
    metrics = {
        "tables_checked": len(tables),
        "violations": len(violations),
        "warnings": len(warnings),
        # no misclassification audit is encoded in the bundle; the
        # what-if correction is available through the effects API
        "misclassification_what_if": "not supplied",
    }
    if violations:
        return TestOutcome(
            4, TEST_NAMES[4], Status.FAIL, metrics,
            "; ".join(sorted(set(violations))),
        )
    if warnings:
        return TestOutcome(
            4, TEST_NAMES[4], Status.DISCOUNTED, metrics,
            "; ".join(sorted(set(warnings))),
        )
    return TestOutcome(
        4, TEST_NAMES[4], Status.PASS, metrics, "no structural problems found"
    )


def _test_5(primary: PrimaryAnalysis, config: ChecklistConfig) -> TestOutcome:
    est = primary.estimate
    basis = "lcl" if config.strict_lcl else "point"
    value = est.lcl if config.strict_lcl else est.point
    metrics = {
        "rr": est.point,
        "lcl": est.lcl,
        "threshold": config.strength_threshold,
        "basis": basis,
        "measure": est.kind.value,
    }
    if value >= config.strength_threshold:
        status, why = Status.PASS, (
            f"{basis} {value} meets the strength threshold "
            f"{config.strength_threshold}"
        )
    else:
        status, why = Status.FAIL, (
            f"{basis} {value} is below the strength threshold "
            f"{config.strength_threshold}"
        )
    return TestOutcome(5, TEST_NAMES[5], status, metrics, why)


def _test_6(
    bundle: EvidenceBundle, primary: PrimaryAnalysis
) -> TestOutcome:
    if not bundle.confounders:
        return TestOutcome(
            6, TEST_NAMES[6], Status.NOT_ASSESSABLE,
            {"candidates": 0},
            "no candidate confounders declared",
        )
    rr_obs = primary.estimate.point
    if rr_obs <= 1.0:
        return TestOutcome(
            6, TEST_NAMES[6], Status.NOT_ASSESSABLE,
            {"candidates": len(bundle.confounders), "rr_observed": rr_obs},
            "the observed association is not positive, so there is "
            "nothing for a confounder to explain away",
        )
    explainers = []
    max_bias = 1.0
    for c in bundle.confounders:
        spec = ConfounderSpec(c.rr, c.p1, c.p0)
        if meets_cornfield(spec, rr_obs):
            explainers.append(c.label)
        max_bias = max(max_bias, bias_adjust(rr_obs, spec).bias_factor)
    metrics = {
        "candidates": len(bundle.confounders),
        "rr_observed": rr_obs,
        "max_bias_factor": max_bias,
    }
    if explainers:
        return TestOutcome(
            6, TEST_NAMES[6], Status.FAIL, metrics,
            "declared confounder(s) could fully account for the "
            "association: " + ", ".join(sorted(explainers)),
        )
    return TestOutcome(
        6, TEST_NAMES[6], Status.PASS, metrics,
        "no declared candidate clears both minimum requirements "
        "(outcome RR and prevalence ratio above the observed RR)",
    )


def _test_7(
    primary: PrimaryAnalysis, config: ChecklistConfig
) -> TestOutcome:
    if len(primary.study_estimates) < 2:
        return TestOutcome(
            7, TEST_NAMES[7], Status.NOT_ASSESSABLE,
            {"studies": max(1, len(primary.study_estimates))},
            WARN_SINGLE_STUDY,
        )
    ev = consistency_verdict(
        primary.study_estimates,
        heterogeneity_alpha=config.heterogeneity_alpha,
        confidence_level=config.confidence_level,
    )
    metrics = {
        "q_p": ev.q_p,
        "overlap_fraction": ev.overlap_fraction,
        "i_squared": ev.meta.i_squared,
        "heterogeneity_alpha": config.heterogeneity_alpha,
    }
    if ev.status is Status.PASS:
        why = "no detected heterogeneity and a pooled interval above 1"
    elif ev.status is Status.FAIL:
        why = "studies disagree in direction with detected heterogeneity"
    else:
        why = (
            "consistency is indeterminate: heterogeneity and direction "
            "do not line up cleanly"
        )
    return TestOutcome(7, TEST_NAMES[7], ev.status, metrics, why)


def _test_8(primary: PrimaryAnalysis, config: ChecklistConfig) -> TestOutcome:
    metrics = {
        "p_value": primary.p_value,
        "alpha": config.alpha,
        "method": primary.method,
        "source": primary.source,
    }
    if primary.p_value < config.alpha:
        return TestOutcome(
            8, TEST_NAMES[8], Status.PASS, metrics,
            f"p {primary.p_value} is below alpha {config.alpha}",
        )
    return TestOutcome(
        8, TEST_NAMES[8], Status.FAIL, metrics,
        f"p {primary.p_value} does not reach alpha {config.alpha}; the "
        f"association could be a chance finding",
    )


def _test_9(bundle: EvidenceBundle, config: ChecklistConfig) -> TestOutcome:
    if not bundle.dose_series:
        return TestOutcome(
            9, TEST_NAMES[9], Status.NOT_ASSESSABLE, {},
            "no dose series supplied",
        )
    series = bundle.dose_series[0]  # first series is the scored one
    metrics: dict = {"series": series.series_id}
    try:
        trend = dose_trend(series)
    except CausalCheckError as exc:
        return TestOutcome(
            9, TEST_NAMES[9], Status.DISCOUNTED, metrics,
            f"trend not assessable: {exc}",
        )
    metrics["trend_p"] = trend.trend_p
    metrics["monotone_nondecreasing"] = trend.monotone_nondecreasing
    metrics["alpha"] = config.alpha
    try:
        metrics["doll_peto_z"] = fit_doll_peto(series).z
    except CausalCheckError:
        pass
    if trend.trend_p < config.alpha and trend.monotone_nondecreasing:
        return TestOutcome(
            9, TEST_NAMES[9], Status.PASS, metrics,
            "risk rises with dose and the trend is significant",
        )
    reasons = []
    if trend.trend_p >= config.alpha:
        reasons.append(
            f"trend p {trend.trend_p} does not reach alpha {config.alpha}"
        )
    if not trend.monotone_nondecreasing:
        reasons.append("point RRs are not non-decreasing in dose")
    reasons.append(
        "a threshold effect or an unmodeled exposure axis may be present"
    )
    return TestOutcome(
        9, TEST_NAMES[9], Status.DISCOUNTED, metrics, "; ".join(reasons)
    )


def run_checklist(
    bundle: EvidenceBundle, config: ChecklistConfig | None = None
) -> ChecklistReport:
    """Score all ten tests and aggregate them into an overall verdict."""
    config = config or ChecklistConfig()
    try:
        primary = primary_analysis(bundle, config)
        primary_error = None
    except CausalCheckError as exc:
        primary = None
        primary_error = str(exc)

    def blocked(test_id: int) -> TestOutcome:
        return TestOutcome(
            test_id, TEST_NAMES[test_id], Status.NOT_ASSESSABLE, {},
            f"primary analysis unavailable: {primary_error}",
        )

    outcomes = [
        _judged_outcome(1, bundle),
        _judged_outcome(2, bundle),
        _judged_outcome(3, bundle),
        _test_4(bundle),
        _test_5(primary, config) if primary else blocked(5),
        _test_6(bundle, primary) if primary else blocked(6),
        _test_7(primary, config) if primary else blocked(7),
        _test_8(primary, config) if primary else blocked(8),
        _test_9(bundle, config),
        _judged_outcome(10, bundle),
    ]
    overall, narrative = overall_verdict(outcomes, config)
    return ChecklistReport(tuple(outcomes), overall, narrative)


def overall_verdict(
    outcomes: list[TestOutcome] | tuple[TestOutcome, ...],
    config: ChecklistConfig | None = None,
) -> tuple[Overall, str]:
    """Apply the aggregation rule to exactly ten ordered outcomes."""
    config = config or ChecklistConfig()
    if len(outcomes) != 10 or [o.test_id for o in outcomes] != list(
        range(1, 11)
    ):
        raise ArityError("exactly ten outcomes with test ids 1..10 required")
    supported = (
        outcomes[7].status is Status.PASS
        and outcomes[4].status in (Status.PASS, Status.DISCOUNTED)
        and all(o.status is not Status.FAIL for o in outcomes)
    )
    if config.strict:
        supported = (
            supported
            and outcomes[5].status is Status.PASS
            and outcomes[6].status is Status.PASS
        )
    overall = (
        Overall.CAUSATION_SUPPORTED
        if supported
        else Overall.CAUSATION_NOT_ESTABLISHED
    )
    lines = []
    for o in outcomes:
        if o.status is not Status.PASS:
            line = f"Test {o.test_id} ({o.name}): {o.status.value}"
            if o.rationale:
                line += f" - {o.rationale}"
            lines.append(line)
    if not lines:
        lines = ["All ten tests pass."]
    return overall, "\n".join(lines)
