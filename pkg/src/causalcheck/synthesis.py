"""Multi-study synthesis and dose-response assessment.

Pooling is inverse-variance on the log scale: fixed effect first, then
DerSimonian-Laird random effects with tau^2 clipped at zero. All sums go
through math.fsum, which is exact, so pooled results do not depend on
the order studies are listed in.

The trend test is Cochran-Armitage with the raw numeric doses as scores
(not ranks); scoring is a convention and is stated here because results
depend on it. The dose-response model RR(x) = (1 + x)^z is linear in
log(RR) against log(1 + x), so the fit is closed-form weighted least
squares through the origin; no iterative optimizer is involved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from scipy.stats import chi2 as _chi2

from .effects import (
    EffectEstimate,
    MeasureKind,
    estimate_from_log_scale,
    relative_risk,
)
from .errors import DegenerateError, InsufficientStudies, ValidationError
from .stats import norm_sf, z_two_sided
from .study import DoseSeries, Status


@dataclass(frozen=True)
class StudyEstimate:
    study_id: str
    log_rr: float
    se: float

    def __post_init__(self):
        if not (math.isfinite(self.se) and self.se > 0):
            raise ValidationError(
                f"study {self.study_id!r}: se must be positive and finite, "
                f"got {self.se}"
            )
        if not math.isfinite(self.log_rr):
            raise ValidationError(
                f"study {self.study_id!r}: log_rr must be finite"
            )


def study_estimate_from_effect(
    study_id: str, est: EffectEstimate
) -> StudyEstimate:
    """Recover (log point, se) from a ratio estimate's interval width."""
    if est.kind is MeasureKind.EXCESS_RISK:
        raise ValidationError(
            "only ratio measures (RR, OR) can enter log-scale pooling"
        )
    z = z_two_sided(est.confidence_level)
    se = (math.log(est.ucl) - math.log(est.lcl)) / (2.0 * z)
    return StudyEstimate(study_id, math.log(est.point), se)


@dataclass(frozen=True)
class MetaResult:
    pooled_fixed: EffectEstimate
    pooled_random: EffectEstimate
    q: float
    q_df: int
    q_p: float
    i_squared: float
    tau_squared: float


@dataclass(frozen=True)
class ConsistencyEvidence:
    status: Status
    q_p: float
    overlap_fraction: float
    meta: MetaResult


@dataclass(frozen=True)
class TrendResult:
    statistic: float
    trend_p: float  # one-sided, increasing alternative
    monotone_nondecreasing: bool


@dataclass(frozen=True)
class DoseFit:
    z: float
    residual_sse: float  # inverse-variance weighted
    doses: tuple[float, ...]
    fitted_rr: tuple[float, ...]

    def rr_at(self, x: float) -> float:
        return (1.0 + x) ** self.z


def _pool(estimates, weights, confidence_level) -> tuple[float, EffectEstimate]:
    sw = math.fsum(weights)
    mu = math.fsum(w * e.log_rr for w, e in zip(weights, estimates)) / sw
    se = math.sqrt(1.0 / sw)
    return mu, estimate_from_log_scale(
        MeasureKind.RR, math.exp(mu), se, confidence_level
    )


def meta_analyze(
    estimates: list[StudyEstimate] | tuple[StudyEstimate, ...],
    confidence_level: float = 0.95,
) -> MetaResult:
    """Fixed and DerSimonian-Laird random-effects pooling with Cochran's
    Q, I^2 and tau^2."""
    k = len(estimates)
    if k < 2:
        raise InsufficientStudies(
            f"meta-analysis requires at least 2 studies, got {k}"
        )
    weights = [1.0 / (e.se * e.se) for e in estimates]
    mu_fixed, pooled_fixed = _pool(estimates, weights, confidence_level)

    df = k - 1
    q = math.fsum(
        w * (e.log_rr - mu_fixed) ** 2 for w, e in zip(weights, estimates)
    )
    q_p = float(_chi2.sf(q, df))
    i_squared = max(0.0, (q - df) / q) if q > 0.0 else 0.0
    sw = math.fsum(weights)
    denom = sw - math.fsum(w * w for w in weights) / sw
    tau_squared = max(0.0, (q - df) / denom)

    re_weights = [1.0 / (e.se * e.se + tau_squared) for e in estimates]
    _, pooled_random = _pool(estimates, re_weights, confidence_level)
    return MetaResult(
        pooled_fixed=pooled_fixed,
        pooled_random=pooled_random,
        q=q,
        q_df=df,
        q_p=q_p,
        i_squared=i_squared,
        tau_squared=tau_squared,
    )


def consistency_verdict(
    estimates: list[StudyEstimate] | tuple[StudyEstimate, ...],
    heterogeneity_alpha: float = 0.10,
    confidence_level: float = 0.95,
) -> ConsistencyEvidence:
    """Across-study consistency call.

    Pass: no detected heterogeneity (Q-test p >= alpha) and the pooled
    fixed-effect interval excludes 1 on the harmful side. Fail: detected
    heterogeneity with point estimates on opposite sides of 1. Anything
    else is Indeterminate, reported here as Discounted-grade evidence.
    """
    meta = meta_analyze(estimates, confidence_level)
    homogeneous = meta.q_p >= heterogeneity_alpha
    if homogeneous and meta.pooled_fixed.lcl > 1.0:
        status = Status.PASS
    elif (
        not homogeneous
        and any(e.log_rr > 0.0 for e in estimates)
        and any(e.log_rr < 0.0 for e in estimates)
    ):
        status = Status.FAIL
    else:
        status = Status.DISCOUNTED

    z = z_two_sided(confidence_level)
    intervals = [
        (e.log_rr - z * e.se, e.log_rr + z * e.se) for e in estimates
    ]
    k = len(intervals)
    pairs = k * (k - 1) // 2
    overlapping = sum(
        1
        for i in range(k)
        for j in range(i + 1, k)
        if max(intervals[i][0], intervals[j][0])
        <= min(intervals[i][1], intervals[j][1])
    )
    return ConsistencyEvidence(
        status=status,
        q_p=meta.q_p,
        overlap_fraction=overlapping / pairs,
        meta=meta,
    )


def trend_statistic(
    scores: list[float], cases: list[int], totals: list[int]
) -> float:
    """Standardized Cochran-Armitage trend statistic.

    Invariant under positive affine rescaling of the scores; negating
    the scores negates the statistic.
    """
    n = sum(totals)
    r = sum(cases)
    if n == 0:
        raise DegenerateError("no subjects in any group")
    pbar = r / n
    if pbar == 0.0 or pbar == 1.0:
        raise DegenerateError("no outcome variation across groups")
    score_var = math.fsum(
        t * s * s for s, t in zip(scores, totals)
    ) - math.fsum(t * s for s, t in zip(scores, totals)) ** 2 / n
    if score_var <= 0.0:
        raise DegenerateError("zero-variance score configuration")
    u = math.fsum(
        s * (c - t * pbar) for s, c, t in zip(scores, cases, totals)
    )
    return u / math.sqrt(pbar * (1.0 - pbar) * score_var)


def dose_trend(series: DoseSeries) -> TrendResult:
    """Cochran-Armitage trend across the referent plus all dose groups,
    one-sided against an increasing alternative."""
    if len(series.points) < 2:
        raise ValidationError(
            f"dose series {series.series_id!r}: trend needs at least 2 points"
        )
    ref_c, ref_d = series.referent
    scores = [0.0] + [p.dose for p in series.points]
    cases = [ref_c] + [p.table.a for p in series.points]
    totals = [ref_c + ref_d] + [p.table.a + p.table.b for p in series.points]
    if any(t == 0 for t in totals):
        raise DegenerateError(
            f"dose series {series.series_id!r}: every group needs subjects"
        )
    z = trend_statistic(scores, cases, totals)
    risks = [p.table.a / (p.table.a + p.table.b) for p in series.points]
    monotone = all(risks[i + 1] >= risks[i] for i in range(len(risks) - 1))
    return TrendResult(
        statistic=z, trend_p=norm_sf(z), monotone_nondecreasing=monotone
    )


def fit_doll_peto_points(
    doses: list[float],
    rrs: list[float],
    weights: list[float] | None = None,
) -> DoseFit:
    """Fit RR(x) = (1 + x)^z to (dose, RR) pairs.

    Closed form: with u = log(1 + x) and y = log RR, the exponent is the
    weighted least-squares slope through the origin, sum(w u y) divided
    by sum(w u^2). The fitted curve satisfies RR(0) = 1 identically.
    """
    if len(doses) != len(rrs):
        raise ValidationError("doses and rrs must have the same length")
    if len(doses) < 2:
        raise ValidationError("the fit needs at least 2 dose points")
    if weights is None:
        weights = [1.0] * len(doses)
    elif len(weights) != len(doses):
        raise ValidationError("weights must match the number of points")
    for x in doses:
        if x < 0:
            raise ValidationError(f"negative dose {x}")
    for rr in rrs:
        if not rr > 0:
            raise ValidationError(f"RR must be positive to fit, got {rr}")
    for w in weights:
        if not w > 0:
            raise ValidationError(f"weights must be positive, got {w}")
    us = [math.log1p(x) for x in doses]
    ys = [math.log(rr) for rr in rrs]
    den = math.fsum(w * u * u for w, u in zip(weights, us))
    if den == 0.0:
        raise DegenerateError("all doses are 0; the exponent is unidentified")
    z = math.fsum(w * u * y for w, u, y in zip(weights, us, ys)) / den
    residual = math.fsum(
        w * (y - z * u) ** 2 for w, u, y in zip(weights, us, ys)
    )
    return DoseFit(
        z=z,
        residual_sse=residual,
        doses=tuple(doses),
        fitted_rr=tuple((1.0 + x) ** z for x in doses),
    )


def fit_doll_peto(series: DoseSeries) -> DoseFit:
    """Fit the dose-response model to a series, weighting each point by
    the inverse variance of its log RR."""
    doses, rrs, weights = [], [], []
    for p in series.points:
        est = relative_risk(p.table)
        se = study_estimate_from_effect("point", est).se
        doses.append(p.dose)
        rrs.append(est.point)
        weights.append(1.0 / (se * se))
    return fit_doll_peto_points(doses, rrs, weights)
