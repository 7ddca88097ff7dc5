"""Confounding machinery: stratified pooling, Simpson reversal detection,
Cornfield-style sensitivity bounds, and Monte Carlo sensitivity analysis.

The bounding factor used by bias_adjust is the standard single-binary-
confounder external adjustment,

    B = (p1 * (rr_c - 1) + 1) / (p0 * (rr_c - 1) + 1),

where rr_c is the confounder's outcome RR and p1, p0 its prevalence in
the exposed and unexposed groups. Its operative consequence is the
Cornfield-type bound: a confounder can never inflate an observed RR by
more than its own RR, so an omitted variable that is to fully explain an
observed RR of x needs both rr_c > x and prevalence ratio p1/p0 > x.

Monte Carlo draws use a counter-based generator keyed by (seed, draw
index), so draw i is the same number whether it is computed serially, in
chunks, or on several threads. Within each draw the parameter order is
fixed: rr_c, then p1, then p0.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .effects import (
    EffectEstimate,
    MeasureKind,
    estimate_from_log_scale,
    odds_ratio,
    relative_risk,
)
from .errors import DegenerateError, DomainError, ValidationError
from .study import Design, StratifiedStudy

_MASK64 = (1 << 64) - 1

QUANTILE_LABELS = ("2.5", "25", "50", "75", "97.5")
_QUANTILE_PROBS = (0.025, 0.25, 0.50, 0.75, 0.975)


class BiasDirection(enum.Enum):
    INFLATING = "Inflating"
    MASKING = "Masking"
    NEUTRAL = "Neutral"


@dataclass(frozen=True)
class ConfounderSpec:
    rr_confounder_outcome: float
    p1: float  # prevalence among the exposed
    p0: float  # prevalence among the unexposed

    def __post_init__(self):
        if not (self.rr_confounder_outcome > 0 and math.isfinite(self.rr_confounder_outcome)):
            raise ValidationError(
                f"confounder outcome RR must be positive and finite, "
                f"got {self.rr_confounder_outcome}"
            )
        for name in ("p1", "p0"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")


@dataclass(frozen=True)
class SensitivityRange:
    """Uniform, independent intervals for the three confounder parameters."""

    rr_range: tuple[float, float]
    p1_range: tuple[float, float]
    p0_range: tuple[float, float]
    draws: int
    seed: int

    def __post_init__(self):
        for name, (lo, hi) in (
            ("rr_range", self.rr_range),
            ("p1_range", self.p1_range),
            ("p0_range", self.p0_range),
        ):
            if not lo <= hi:
                raise ValidationError(f"{name}: low {lo} exceeds high {hi}")
        if self.rr_range[0] <= 0:
            raise ValidationError("rr_range must be strictly positive")
        for name in ("p1_range", "p0_range"):
            lo, hi = getattr(self, name)
            if lo < 0.0 or hi > 1.0:
                raise ValidationError(f"{name} must lie within [0, 1]")
        if self.draws < 1:
            raise ValidationError(f"draws must be >= 1, got {self.draws}")
        if isinstance(self.draws, bool) or not isinstance(self.draws, int):
            raise ValidationError("draws must be an integer")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ValidationError("seed must be an integer")


@dataclass(frozen=True)
class SimpsonReport:
    crude: EffectEstimate
    per_stratum: tuple[EffectEstimate, ...]
    reversal: bool


@dataclass(frozen=True)
class CornfieldRequirements:
    min_rr_confounder: float
    min_prevalence_ratio: float


@dataclass(frozen=True)
class BiasAdjustment:
    bias_factor: float
    rr_adjusted: float
    direction: BiasDirection


@dataclass(frozen=True)
class MCSummary:
    rr_observed: float
    threshold: float
    draws: int
    seed: int
    quantiles: tuple[tuple[str, float], ...]
    fraction_above_threshold: float


def _stratum_margins(table) -> tuple[int, int, int]:
    n1 = table.a + table.b
    n0 = table.c + table.d
    if n1 == 0 or n0 == 0:
        raise DegenerateError(
            "every stratum needs a non-empty exposed and unexposed margin"
        )
    return n1, n0, n1 + n0


def mantel_haenszel_pool(
    study: StratifiedStudy, confidence_level: float = 0.95
) -> EffectEstimate:
    """Mantel-Haenszel pooled RR (cohort) or OR (case-control).

    A single stratum degenerates to the crude estimate of its table.
    Variances are Greenland-Robins for the RR and Robins-Breslow-
    Greenland for the OR.
    """
    design = study.design  # raises MixedDesignError on disagreement
    if len(study.strata) == 1:
        t = study.strata[0].table
        if design is Design.COHORT:
            return relative_risk(t, confidence_level)
        return odds_ratio(t, confidence_level)

    if design is Design.COHORT:
        r_terms, s_terms, v_terms = [], [], []
        for s in study.strata:
            t = s.table
            n1, n0, n = _stratum_margins(t)
            r_terms.append(t.a * n0 / n)
            s_terms.append(t.c * n1 / n)
            v_terms.append((n1 * n0 * (t.a + t.c) - t.a * t.c * n) / (n * n))
        r_sum = math.fsum(r_terms)
        s_sum = math.fsum(s_terms)
        if r_sum == 0.0 or s_sum == 0.0:
            raise DegenerateError(
                "no cases in one arm across all strata; pooled RR undefined"
            )
        point = r_sum / s_sum
        se = math.sqrt(math.fsum(v_terms) / (r_sum * s_sum))
        return estimate_from_log_scale(
            MeasureKind.RR, point, se, confidence_level
        )

    # case-control: MH odds ratio
    r_terms, s_terms = [], []
    prr, psrq, qss = [], [], []
    for s in study.strata:
        t = s.table
        _stratum_margins(t)
        n = t.n
        r_i = t.a * t.d / n
        s_i = t.b * t.c / n
        p_i = (t.a + t.d) / n
        q_i = (t.b + t.c) / n
        r_terms.append(r_i)
        s_terms.append(s_i)
        prr.append(p_i * r_i)
        psrq.append(p_i * s_i + q_i * r_i)
        qss.append(q_i * s_i)
    r_sum = math.fsum(r_terms)
    s_sum = math.fsum(s_terms)
    if r_sum == 0.0 or s_sum == 0.0:
        raise DegenerateError(
            "a cross-product sum is zero across all strata; pooled OR undefined"
        )
    var = (
        math.fsum(prr) / (2.0 * r_sum * r_sum)
        + math.fsum(psrq) / (2.0 * r_sum * s_sum)
        + math.fsum(qss) / (2.0 * s_sum * s_sum)
    )
    return estimate_from_log_scale(
        MeasureKind.OR, r_sum / s_sum, math.sqrt(var), confidence_level
    )


def detect_simpson(
    study: StratifiedStudy, confidence_level: float = 0.95
) -> SimpsonReport:
    """Flag a full aggregation reversal.

    Reversal means the crude estimate sits strictly on one side of 1
    while every stratum estimate sits strictly on the other. Mixed
    stratum directions, or a crude of exactly 1, are not a reversal.
    """
    if len(study.strata) < 2:
        raise ValidationError("reversal detection requires at least 2 strata")
    design = study.design
    measure = relative_risk if design is Design.COHORT else odds_ratio
    crude = measure(study.crude_table(), confidence_level)
    per_stratum = tuple(
        measure(s.table, confidence_level) for s in study.strata
    )
    if crude.point > 1.0:
        reversal = all(e.point < 1.0 for e in per_stratum)
    elif crude.point < 1.0:
        reversal = all(e.point > 1.0 for e in per_stratum)
    else:
        reversal = False
    return SimpsonReport(crude, per_stratum, reversal)


def cornfield_requirements(rr_observed: float) -> CornfieldRequirements:
    """Minimum confounder properties needed to fully explain an observed
    association: its outcome RR and its exposed:unexposed prevalence
    ratio must both exceed the observed RR."""
    if not rr_observed > 1.0:
        raise DomainError(
            f"an observed RR of {rr_observed} leaves nothing to explain away"
        )
    return CornfieldRequirements(
        min_rr_confounder=rr_observed, min_prevalence_ratio=rr_observed
    )


def meets_cornfield(candidate: ConfounderSpec, rr_observed: float) -> bool:
    """True when the candidate clears both minima and so could fully
    account for the observed association."""
    req = cornfield_requirements(rr_observed)
    if candidate.p1 == 0.0:
        return False  # absent from the exposed: cannot inflate
    ratio = math.inf if candidate.p0 == 0.0 else candidate.p1 / candidate.p0
    return (
        candidate.rr_confounder_outcome > req.min_rr_confounder
        and ratio > req.min_prevalence_ratio
    )


def bias_adjust(rr_observed: float, c: ConfounderSpec) -> BiasAdjustment:
    """Externally adjust an observed RR for one binary confounder."""
    if not rr_observed > 0:
        raise DomainError(f"rr_observed must be positive, got {rr_observed}")
    excess = c.rr_confounder_outcome - 1.0
    bias = (c.p1 * excess + 1.0) / (c.p0 * excess + 1.0)
    if bias > 1.0:
        direction = BiasDirection.INFLATING
    elif bias < 1.0:
        direction = BiasDirection.MASKING
    else:
        direction = BiasDirection.NEUTRAL
    return BiasAdjustment(
        bias_factor=bias, rr_adjusted=rr_observed / bias, direction=direction
    )


def _draw_adjusted(rr_observed: float, rng: SensitivityRange, index: int) -> float:
    key = np.array([rng.seed & _MASK64, index], dtype=np.uint64)
    g = np.random.Generator(np.random.Philox(key=key))
    rr_c = g.uniform(*rng.rr_range)
    p1 = g.uniform(*rng.p1_range)
    p0 = g.uniform(*rng.p0_range)
    return bias_adjust(rr_observed, ConfounderSpec(rr_c, p1, p0)).rr_adjusted


def mc_sensitivity(
    rr_observed: float,
    rng: SensitivityRange,
    threshold: float = 2.0,
    workers: int = 1,
) -> MCSummary:
    """Propagate confounder uncertainty through bias_adjust.

    Deterministic for a fixed seed, and identical for any worker count:
    draw i depends only on (seed, i), never on evaluation order.
    fraction_above_threshold uses a strict > comparison.
    """
    if not rr_observed > 0:
        raise DomainError(f"rr_observed must be positive, got {rr_observed}")
    if workers < 1:
        raise ValidationError(f"workers must be >= 1, got {workers}")
    values = np.empty(rng.draws, dtype=np.float64)
    if workers == 1:
        for i in range(rng.draws):
            values[i] = _draw_adjusted(rr_observed, rng, i)
    else:
        def fill(chunk: range):
            for i in chunk:
                values[i] = _draw_adjusted(rr_observed, rng, i)

        step = -(-rng.draws // workers)
        chunks = [
            range(start, min(start + step, rng.draws))
            for start in range(0, rng.draws, step)
        ]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, chunks))
    qs = np.quantile(values, _QUANTILE_PROBS)
    return MCSummary(
        rr_observed=rr_observed,
        threshold=threshold,
        draws=rng.draws,
        seed=rng.seed,
        quantiles=tuple(zip(QUANTILE_LABELS, (float(q) for q in qs))),
        fraction_above_threshold=float(
            np.count_nonzero(values > threshold) / rng.draws
        ),
    )
