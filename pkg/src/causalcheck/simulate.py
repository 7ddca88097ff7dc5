"""Synthetic cohort generator with known ground truth, plus a
brute-force exact test used to cross-check the analytic Fisher path.

Determinism contract: every random draw comes from a counter-based
generator keyed by (seed, replicate), so replicate r of a truth spec is
the same table no matter how many replicates ran before it or on how
many threads. Expected-count mode bypasses the generator entirely and
rounds expectations half-to-even, giving closed-form tables for tests.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import (
    EnumerationBound,
    RiskOverflow,
    SchemaError,
    ValidationError,
)
from .study import (
    Design,
    StratifiedStudy,
    Stratum,
    TwoByTwoTable,
    _freeze_profile,
)

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class MisclassificationTruth:
    sensitivity: float
    specificity: float

    def __post_init__(self):
        for name in ("sensitivity", "specificity"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ValidationError(f"{name} must lie in (0, 1], got {v}")
        if not self.sensitivity + self.specificity > 1.0:
            raise ValidationError(
                "sensitivity + specificity must exceed 1 (better than "
                "label-flipping)"
            )


@dataclass(frozen=True)
class CohortTruth:
    n_exposed: int
    n_unexposed: int
    baseline_risk: float
    rr: float
    seed: int = 0
    misclassification: MisclassificationTruth | None = None

    def __post_init__(self):
        for name in ("n_exposed", "n_unexposed"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
                raise ValidationError(f"{name} must be a positive integer")
        if not 0.0 < self.baseline_risk < 1.0:
            raise ValidationError(
                f"baseline_risk must lie in (0, 1), got {self.baseline_risk}"
            )
        if not self.rr > 0.0:
            raise ValidationError(f"rr must be positive, got {self.rr}")
        risk1 = self.baseline_risk * self.rr
        if risk1 >= 1.0:
            raise RiskOverflow(
                f"exposed risk {risk1} reaches 1; lower baseline_risk or rr"
            )
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ValidationError("seed must be an integer")

    @property
    def exposed_risk(self) -> float:
        return self.baseline_risk * self.rr


@dataclass(frozen=True)
class ConfoundedTruth:
    n_exposed: int
    n_unexposed: int
    baseline_risk: float
    rr: float
    rr_confounder: float
    p1: float  # confounder prevalence among the exposed
    p0: float  # confounder prevalence among the unexposed
    seed: int = 0
    interaction_rr: float | None = None  # None -> additive risk model
    misclassification: MisclassificationTruth | None = None

    def __post_init__(self):
        for name in ("n_exposed", "n_unexposed"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
                raise ValidationError(f"{name} must be a positive integer")
        if not 0.0 < self.baseline_risk < 1.0:
            raise ValidationError(
                f"baseline_risk must lie in (0, 1), got {self.baseline_risk}"
            )
        for name in ("rr", "rr_confounder"):
            if not getattr(self, name) > 0.0:
                raise ValidationError(f"{name} must be positive")
        if self.interaction_rr is not None and not self.interaction_rr > 0.0:
            raise ValidationError("interaction_rr must be positive")
        for name in ("p1", "p0"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ValidationError("seed must be an integer")
        for e in (0, 1):
            for c in (0, 1):
                r = self.composite_risk(e, c)
                if r >= 1.0:
                    raise RiskOverflow(
                        f"risk {r} for exposure={e}, confounder={c} "
                        f"reaches 1"
                    )

    def composite_risk(self, exposed: int, confounded: int) -> float:
        """Outcome risk in one exposure-by-confounder cell."""
        if self.interaction_rr is None:
            # additive on the RR scale: excesses of the two causes add
            return self.baseline_risk * (
                1.0
                + (self.rr - 1.0) * exposed
                + (self.rr_confounder - 1.0) * confounded
            )
        r = self.baseline_risk
        r *= self.rr**exposed
        r *= self.rr_confounder**confounded
        if exposed and confounded:
            r *= self.interaction_rr
        return r


@dataclass(frozen=True)
class ConfoundedCohort:
    study: StratifiedStudy
    crude: TwoByTwoTable


def _generator(seed: int, replicate: int) -> np.random.Generator:
    key = np.array([seed & _MASK64, replicate & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _binom(rng: np.random.Generator | None, n: int, p: float) -> int:
    if n == 0:
        return 0
    if rng is None:
        return round(n * p)
    return int(rng.binomial(n, p))


def apply_misclassification(
    cells: tuple[int, int, int, int],
    truth: MisclassificationTruth,
    rng: np.random.Generator | None,
) -> tuple[int, int, int, int]:
    """Push true counts (a, b, c, d) through an imperfect exposure
    measurement and return observed counts in the same layout.

    Each truly exposed subject is recorded exposed with probability
    sensitivity; each truly unexposed subject is recorded exposed with
    probability 1 - specificity. Mixing happens within outcome rows
    (cases a with c, noncases b with d), so row totals are conserved and
    the error is nondifferential by construction. Draw order is fixed:
    a, c, b, d. rng None means expected counts, rounded half-to-even.
    """
    a, b, c, d = cells
    se, sp = truth.sensitivity, truth.specificity
    obs_a = _binom(rng, a, se) + _binom(rng, c, 1.0 - sp)
    obs_b = _binom(rng, b, se) + _binom(rng, d, 1.0 - sp)
    return (obs_a, obs_b, (a + c) - obs_a, (b + d) - obs_b)


def _misclassify_table(
    t: TwoByTwoTable, truth: MisclassificationTruth, rng
) -> TwoByTwoTable:
    a, b, c, d = apply_misclassification((t.a, t.b, t.c, t.d), truth, rng)
    return TwoByTwoTable(a=a, b=b, c=c, d=d, design=t.design)


def simulate_cohort(
    truth: CohortTruth, replicate: int = 0, expected: bool = False
) -> TwoByTwoTable:
    """Draw one cohort table from a simple two-arm truth.

    Draw order is fixed (exposed outcomes, then unexposed outcomes, then
    any misclassification flips), so a given (seed, replicate) pair
    always yields the same table.
    """
    rng = None if expected else _generator(truth.seed, replicate)
    a = _binom(rng, truth.n_exposed, truth.exposed_risk)
    c = _binom(rng, truth.n_unexposed, truth.baseline_risk)
    t = TwoByTwoTable(
        a=a,
        b=truth.n_exposed - a,
        c=c,
        d=truth.n_unexposed - c,
        design=Design.COHORT,
    )
    if truth.misclassification is not None:
        t = _misclassify_table(t, truth.misclassification, rng)
    return t


def simulate_confounded_cohort(
    truth: ConfoundedTruth, replicate: int = 0, expected: bool = False
) -> ConfoundedCohort:
    """Draw a cohort with a binary confounder and return it both ways:
    stratified on the confounder (profiles name it present or absent)
    and collapsed to the crude table the analyst would see without it.

    Arm sizes within strata are the rounded prevalence splits, so the
    split itself is deterministic; only outcome counts are random.
    Strata empty in both arms are dropped (prevalence 0 or 1).
    """
    rng = None if expected else _generator(truth.seed, replicate)
    n1c = round(truth.n_exposed * truth.p1)
    n0c = round(truth.n_unexposed * truth.p0)
    sizes = {
        1: (n1c, n0c),
        0: (truth.n_exposed - n1c, truth.n_unexposed - n0c),
    }
    strata = []
    for conf in (1, 0):
        n_exp, n_unexp = sizes[conf]
        if n_exp == 0 and n_unexp == 0:
            continue
        a = _binom(rng, n_exp, truth.composite_risk(1, conf))
        c = _binom(rng, n_unexp, truth.composite_risk(0, conf))
        t = TwoByTwoTable(
            a=a, b=n_exp - a, c=c, d=n_unexp - c, design=Design.COHORT
        )
        if truth.misclassification is not None:
            t = _misclassify_table(t, truth.misclassification, rng)
        strata.append(
            Stratum(
                profile=_freeze_profile(
                    {"confounder": "present" if conf else "absent"}
                ),
                table=t,
            )
        )
    study = StratifiedStudy(study_id="simulated", strata=tuple(strata))
    crude = study.crude_table()
    return ConfoundedCohort(study=study, crude=crude)


def exact_fisher_oracle(t: TwoByTwoTable) -> float:
    """Independent two-sided Fisher probability for cross-checking.

    Enumerates the hypergeometric support term by term with math.comb
    and sums the tied-or-smaller probabilities as an exact Fraction
    before the single final float rounding. Deliberately shares no code
    with the analytic path. Refuses tables with more than 10^4 subjects;
    use the analytic path there.
    """
    n = t.n
    if n > 10_000:
        raise EnumerationBound(
            f"oracle enumeration is capped at 10000 subjects, table has {n}"
        )
    r1, r0 = t.a + t.b, t.c + t.d
    c1 = t.a + t.c
    denom = math.comb(n, c1)
    lo = max(0, c1 - r0)
    hi = min(r1, c1)
    obs = math.comb(r1, t.a) * math.comb(r0, c1 - t.a)
    total = Fraction(0)
    for x in range(lo, hi + 1):
        term = math.comb(r1, x) * math.comb(r0, c1 - x)
        if term <= obs:
            total += Fraction(term, denom)
    return float(total)


_TRUTH_KEYS = {
    "n_exposed",
    "n_unexposed",
    "baseline_risk",
    "rr",
    "seed",
    "confounder",
    "misclassification",
}
_CONF_KEYS = {"rr_confounder", "p1", "p0", "interaction_rr"}


def _number(doc: dict, key: str, path: str) -> float:
    v = doc.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise SchemaError(f"{key} must be a number", path)
    return float(v)


def _integer(doc: dict, key: str, path: str) -> int:
    v = doc.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(f"{key} must be an integer", path)
    return v


def parse_truth_file(raw: bytes) -> CohortTruth | ConfoundedTruth:
    """Parse a truth spec. The confounder block, when present, switches
    the result to a confounded truth."""
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"truth file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("expected a JSON object", "$")
    unknown = sorted(set(doc) - _TRUTH_KEYS)
    if unknown:
        raise SchemaError(f"unknown key {unknown[0]!r}", "$")
    for key in ("n_exposed", "n_unexposed", "baseline_risk", "rr"):
        if key not in doc:
            raise SchemaError(f"missing key {key!r}", "$")

    mis = None
    if "misclassification" in doc:
        m = doc["misclassification"]
        if not isinstance(m, dict):
            raise SchemaError("expected an object", "$.misclassification")
        unknown = sorted(set(m) - {"sensitivity", "specificity"})
        if unknown:
            raise SchemaError(
                f"unknown key {unknown[0]!r}", "$.misclassification"
            )
        mis = MisclassificationTruth(
            sensitivity=_number(m, "sensitivity", "$.misclassification"),
            specificity=_number(m, "specificity", "$.misclassification"),
        )

    base = dict(
        n_exposed=_integer(doc, "n_exposed", "$"),
        n_unexposed=_integer(doc, "n_unexposed", "$"),
        baseline_risk=_number(doc, "baseline_risk", "$"),
        rr=_number(doc, "rr", "$"),
        seed=_integer(doc, "seed", "$") if "seed" in doc else 0,
        misclassification=mis,
    )
    if "confounder" not in doc:
        return CohortTruth(**base)
    c = doc["confounder"]
    if not isinstance(c, dict):
        raise SchemaError("expected an object", "$.confounder")
    unknown = sorted(set(c) - _CONF_KEYS)
    if unknown:
        raise SchemaError(f"unknown key {unknown[0]!r}", "$.confounder")
    for key in ("rr_confounder", "p1", "p0"):
        if key not in c:
            raise SchemaError(f"missing key {key!r}", "$.confounder")
    return ConfoundedTruth(
        **base,
        rr_confounder=_number(c, "rr_confounder", "$.confounder"),
        p1=_number(c, "p1", "$.confounder"),
        p0=_number(c, "p0", "$.confounder"),
        interaction_rr=(
            _number(c, "interaction_rr", "$.confounder")
            if "interaction_rr" in c
            else None
        ),
    )
