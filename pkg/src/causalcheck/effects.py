"""Effect measures on 2x2 tables: RR, OR, excess risk, PDE, significance
tests, and misclassification back-correction.

Conventions, stated once:

- RR is the outcome-rate ratio, exposed over unexposed.
- Point estimates on clean tables use integer products before the single
  float division, so textbook tables come out exact (25/1000 vs 5/1000
  gives RR 5.0, not 4.999...).
- When any cell is zero, 0.5 is added to all four cells (Haldane and
  Anscombe's correction) and the estimate is flagged corrected=True; the
  point, interval and p-value all come from the corrected cells so the
  interval always brackets the point.
- The two-sided Fisher p sums the probabilities of all tables whose
  point probability is <= the observed one (the "small p" convention;
  conventions differ across packages, so this one is documented).
  Enumeration is in exact integer arithmetic: ties are decided by
  integer comparison, never by float rounding.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

from .errors import (
    DegenerateError,
    DesignError,
    DomainError,
    InfeasibleCorrection,
    ValidationError,
)
from .stats import chi2_1_sf, wald_p, z_two_sided
from .study import Design, TwoByTwoTable, expected_counts

# PDE assumes every excess case was caused by the exposure. If exposure
# also hastens outcomes that would have occurred anyway, the excess-case
# count understates the exposure's contribution, so PDE errs low. No
# quantitative correction is attempted; the flag is attached to every
# PDE-bearing report.
PDE_ACCELERATION_WARNING = (
    "PDE counts only excess cases; if the exposure also accelerates "
    "outcomes that would have occurred later anyway, the true probability "
    "of causation is higher than PDE suggests. No correction is applied."
)

DEFAULT_CONFIDENCE_LEVEL = 0.95


class MeasureKind(enum.Enum):
    RR = "RR"
    OR = "OR"
    EXCESS_RISK = "ExcessRisk"


class AssociationMethod(enum.Enum):
    CHI_SQUARE = "ChiSquare"
    FISHER_EXACT = "FisherExact"


@dataclass(frozen=True)
class EffectEstimate:
    kind: MeasureKind
    point: float
    lcl: float
    ucl: float
    confidence_level: float
    p_value: float
    corrected: bool = False


@dataclass(frozen=True)
class AssociationResult:
    method: AssociationMethod
    p_value: float
    statistic: float | None = None  # chi-square value; None on the exact path


@dataclass(frozen=True)
class CorrectedCounts:
    """Real-valued cells produced by misclassification back-correction."""

    a: float
    b: float
    c: float
    d: float
    design: Design

    def cells(self) -> tuple[float, float, float, float]:
        return (self.a, self.b, self.c, self.d)


@dataclass(frozen=True)
class MisclassificationSpec:
    """Exposure-classification accuracy. Nondifferential by default;
    differential=True supplies a separate pair for the noncase row."""

    sensitivity: float
    specificity: float
    differential: bool = False
    sensitivity_noncases: float | None = None
    specificity_noncases: float | None = None

    def __post_init__(self):
        self._check_pair(self.sensitivity, self.specificity, "case")
        if self.differential:
            if self.sensitivity_noncases is None or self.specificity_noncases is None:
                raise ValidationError(
                    "differential spec requires sensitivity_noncases and "
                    "specificity_noncases"
                )
            self._check_pair(
                self.sensitivity_noncases, self.specificity_noncases, "noncase"
            )
        elif self.sensitivity_noncases is not None or self.specificity_noncases is not None:
            raise ValidationError(
                "noncase accuracy pair given but differential=False"
            )

    @staticmethod
    def _check_pair(se: float, sp: float, row: str):
        for name, v in (("sensitivity", se), ("specificity", sp)):
            if not 0.0 < v <= 1.0:
                raise ValidationError(
                    f"{row} {name} must lie in (0, 1], got {v}"
                )
        if not se + sp > 1.0:
            raise ValidationError(
                f"{row} sensitivity + specificity must exceed 1 for the "
                f"correction matrix to be invertible, got {se} + {sp}"
            )

    def case_pair(self) -> tuple[float, float]:
        return (self.sensitivity, self.specificity)

    def noncase_pair(self) -> tuple[float, float]:
        if self.differential:
            return (self.sensitivity_noncases, self.specificity_noncases)
        return (self.sensitivity, self.specificity)


@dataclass(frozen=True)
class MisclassificationResult:
    corrected: CorrectedCounts
    rr: EffectEstimate | None  # None for case-control input
    odds: EffectEstimate


def _guard_counts(t: TwoByTwoTable):
    for name in ("a", "b", "c", "d"):
        v = getattr(t, name)
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise ValidationError(f"invalid count in cell {name}: {v!r}")


def _corrected_cells(t: TwoByTwoTable) -> tuple[float, float, float, float]:
    return (t.a + 0.5, t.b + 0.5, t.c + 0.5, t.d + 0.5)


def estimate_from_log_scale(
    kind: MeasureKind,
    point: float,
    se: float,
    level: float,
    corrected: bool = False,
) -> EffectEstimate:
    """Wrap a ratio estimate whose uncertainty lives on the log scale."""
    z = z_two_sided(level)
    log_point = math.log(point)
    return EffectEstimate(
        kind=kind,
        point=point,
        lcl=math.exp(log_point - z * se),
        ucl=math.exp(log_point + z * se),
        confidence_level=level,
        p_value=wald_p(log_point / se),
        corrected=corrected,
    )


def relative_risk(
    t: TwoByTwoTable, confidence_level: float = DEFAULT_CONFIDENCE_LEVEL
) -> EffectEstimate:
    """Risk ratio with a log-scale Wald interval.

    Cohort designs only: a case-control sample fixes the case/noncase
    margin, so outcome rates are not estimable and odds_ratio is the
    right measure.
    """
    if t.design is not Design.COHORT:
        raise DesignError(
            "relative risk requires a cohort design; use odds_ratio for "
            "case-control data"
        )
    _guard_counts(t)
    if t.a + t.b == 0:
        raise DegenerateError("empty exposed margin: a + b = 0")
    if t.c + t.d == 0:
        raise DegenerateError("empty unexposed margin: c + d = 0")
    if 0 in t.cells():
        a, b, c, d = _corrected_cells(t)
        point = (a * (c + d)) / (c * (a + b))
        corrected = True
    else:
        a, b, c, d = t.cells()
        # integer products, one float division: exact on textbook tables
        point = (t.a * (t.c + t.d)) / (t.c * (t.a + t.b))
        corrected = False
    se = math.sqrt(1.0 / a - 1.0 / (a + b) + 1.0 / c - 1.0 / (c + d))
    return estimate_from_log_scale(MeasureKind.RR, point, se, confidence_level, corrected)


def odds_ratio(
    t: TwoByTwoTable, confidence_level: float = DEFAULT_CONFIDENCE_LEVEL
) -> EffectEstimate:
    """Cross-product ratio with the Woolf log-scale interval."""
    _guard_counts(t)
    if t.a + t.b == 0:
        raise DegenerateError("empty exposed margin: a + b = 0")
    if t.c + t.d == 0:
        raise DegenerateError("empty unexposed margin: c + d = 0")
    if 0 in t.cells():
        a, b, c, d = _corrected_cells(t)
        point = (a * d) / (b * c)
        corrected = True
    else:
        a, b, c, d = t.cells()
        point = (t.a * t.d) / (t.b * t.c)
        corrected = False
    se = math.sqrt(1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d)
    return estimate_from_log_scale(MeasureKind.OR, point, se, confidence_level, corrected)


def pde(rr: float) -> float:
    """Probability a case is due to the exposure: (RR - 1) / RR.

    Strictly increasing in RR; crosses 0.5 exactly at RR = 2. Negative
    for protective exposures (RR < 1).
    """
    if not rr > 0:
        raise DomainError(f"pde requires rr > 0, got {rr}")
    return (rr - 1.0) / rr


def excess_risk(
    t: TwoByTwoTable, confidence_level: float = DEFAULT_CONFIDENCE_LEVEL
) -> EffectEstimate:
    """Risk difference (exposed minus unexposed) with a Wald interval."""
    if t.design is not Design.COHORT:
        raise DesignError(
            "excess risk requires a cohort design; case-control sampling "
            "does not identify outcome rates"
        )
    _guard_counts(t)
    if t.a + t.b == 0:
        raise DegenerateError("empty exposed margin: a + b = 0")
    if t.c + t.d == 0:
        raise DegenerateError("empty unexposed margin: c + d = 0")
    if 0 in t.cells():
        a, b, c, d = _corrected_cells(t)
        corrected = True
    else:
        a, b, c, d = t.cells()
        corrected = False
    n1, n0 = a + b, c + d
    p1, p0 = a / n1, c / n0
    point = p1 - p0
    se = math.sqrt(p1 * (1.0 - p1) / n1 + p0 * (1.0 - p0) / n0)
    z = z_two_sided(confidence_level)
    return EffectEstimate(
        kind=MeasureKind.EXCESS_RISK,
        point=point,
        lcl=point - z * se,
        ucl=point + z * se,
        confidence_level=confidence_level,
        p_value=wald_p(point / se),
        corrected=corrected,
    )


def fisher_exact_p(t: TwoByTwoTable) -> float:
    """Two-sided Fisher exact p under the small-p convention.

    Hypergeometric weights are carried as exact integers via a
    multiplicative recurrence, so the <= tie comparison against the
    observed table is exact; the final probability is one correctly
    rounded float.
    """
    _guard_counts(t)
    r1, r0 = t.a + t.b, t.c + t.d
    c1 = t.a + t.c
    lo = max(0, c1 - r0)
    hi = min(r1, c1)
    w = math.comb(r1, lo) * math.comb(r0, c1 - lo)
    weights = [w]
    for x in range(lo, hi):
        w = w * (r1 - x) * (c1 - x) // ((x + 1) * (r0 - c1 + x + 1))
        weights.append(w)
    w_obs = weights[t.a - lo]
    total = sum(wt for wt in weights if wt <= w_obs)
    return float(Fraction(total, math.comb(t.n, c1)))


def association_test(t: TwoByTwoTable) -> AssociationResult:
    """Chi-square (1 df, no continuity correction) when every expected
    cell is at least 5; otherwise the exact test."""
    _guard_counts(t)
    exp = expected_counts(t)
    if exp is not None and min(exp) >= 5.0:
        r1, r0 = t.a + t.b, t.c + t.d
        c1, c0 = t.a + t.c, t.b + t.d
        diff = t.a * t.d - t.b * t.c
        stat = t.n * diff * diff / (r1 * r0 * c1 * c0)
        return AssociationResult(
            AssociationMethod.CHI_SQUARE, chi2_1_sf(stat), stat
        )
    return AssociationResult(AssociationMethod.FISHER_EXACT, fisher_exact_p(t))


def _estimates_from_cells(
    cells: tuple[float, float, float, float],
    design: Design,
    confidence_level: float,
) -> tuple[EffectEstimate | None, EffectEstimate]:
    a, b, c, d = cells
    if 0.0 in cells:
        a, b, c, d = a + 0.5, b + 0.5, c + 0.5, d + 0.5
        corrected = True
    else:
        corrected = False
    rr = None
    if design is Design.COHORT:
        se = math.sqrt(1.0 / a - 1.0 / (a + b) + 1.0 / c - 1.0 / (c + d))
        rr = estimate_from_log_scale(
            MeasureKind.RR, (a * (c + d)) / (c * (a + b)), se,
            confidence_level, corrected,
        )
    se = math.sqrt(1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d)
    odds = estimate_from_log_scale(
        MeasureKind.OR, (a * d) / (b * c), se, confidence_level, corrected
    )
    return rr, odds


def misclassification_adjust(
    t: TwoByTwoTable,
    spec: MisclassificationSpec,
    confidence_level: float = DEFAULT_CONFIDENCE_LEVEL,
) -> MisclassificationResult:
    """Back-correct exposure misclassification row by row.

    Within each outcome row the observed exposed count mixes true
    exposed (at rate sensitivity) with false positives from the true
    unexposed (at rate 1 - specificity); the 2x2 mixing matrix is
    inverted per row. Corrected counts are real-valued. A spec that
    drives any corrected count negative is inconsistent with the data
    and raises InfeasibleCorrection naming the cell.
    """
    _guard_counts(t)
    if t.a + t.b == 0 or t.c + t.d == 0:
        raise DegenerateError("misclassification correction needs both margins")
    se_case, sp_case = spec.case_pair()
    se_non, sp_non = spec.noncase_pair()

    def correct_row(exposed_obs: float, unexposed_obs: float, se: float, sp: float):
        det = se + sp - 1.0
        exposed_true = (sp * exposed_obs - (1.0 - sp) * unexposed_obs) / det
        return exposed_true, (exposed_obs + unexposed_obs) - exposed_true

    a_t, c_t = correct_row(t.a, t.c, se_case, sp_case)
    b_t, d_t = correct_row(t.b, t.d, se_non, sp_non)
    for cell, value in (("a", a_t), ("b", b_t), ("c", c_t), ("d", d_t)):
        if value < 0.0:
            raise InfeasibleCorrection(cell, value)
    corrected = CorrectedCounts(a_t, b_t, c_t, d_t, t.design)
    rr, odds = _estimates_from_cells(
        corrected.cells(), t.design, confidence_level
    )
    return MisclassificationResult(corrected=corrected, rr=rr, odds=odds)
