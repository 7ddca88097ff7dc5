"""Legal decision layer: general causation, but-for and material
contribution rules, joint-exposure apportionment, assigned share,
liability allocation, and the fleet posterior.

Two conventions are load-bearing and deliberate:

- Thresholds are strict. An RR exactly equal to the threshold does NOT
  satisfy the but-for rule; the rule of thumb is stated as a strict
  inequality and equality fails.
- Two apportionment schemes ship side by side because they genuinely
  disagree. PaperExcessUnits counts one unit per excess-RR point of each
  input (main effects and the joint effect), which double-counts the
  main effects inside the joint term; SynergyPartition carves the joint
  excess rr_as - 1 into the two main effects plus a pure interaction
  remainder. Every result is labeled with the scheme that produced it;
  the engine computes, it does not pick the legal winner.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from fractions import Fraction

from .checklist import ChecklistReport, Overall
from .effects import EffectEstimate, MeasureKind, pde
from .errors import (
    AllZeroMass,
    ConfigError,
    DegenerateError,
    DegenerateWeights,
    DomainError,
    NegativeInteraction,
    SchemaError,
    ValidationError,
)

WARN_BARE_STATISTICS = (
    "all companies share the same negligence and exposure rates, so this "
    "posterior restates fleet proportions (bare statistics); population "
    "rate estimates would be needed for a stronger inference"
)

OUT_OF_SCOPE_NOTE = (
    "verdicts here address causation only; foreseeability, remoteness and "
    "duty-of-care questions are outside this engine's scope"
)


class CausationVerdict(enum.Enum):
    ESTABLISHED = "Established"
    NOT_ESTABLISHED = "NotEstablished"


class ButFor(enum.Enum):
    SATISFIED = "Satisfied"
    NOT_SATISFIED = "NotSatisfied"


class Contribution(enum.Enum):
    MATERIAL = "Material"
    NOT_MATERIAL = "NotMaterial"
    MATERIAL_RISK_INCREASE = "MaterialRiskIncrease"


class Scheme(enum.Enum):
    PAPER_EXCESS_UNITS = "PaperExcessUnits"
    SYNERGY_PARTITION = "SynergyPartition"


class AllocationMode(enum.Enum):
    MARKET_SHARE = "MarketShare"
    WEIGHTED_TORTFEASOR = "WeightedTortfeasor"
    EQUAL = "Equal"


@dataclass(frozen=True)
class LegalConfig:
    rr_threshold: float = 2.0
    use_lcl: bool = False
    # de minimis floor for "material": 1% is this engine's explicit,
    # configurable choice; no authority prescribes a number
    material_fraction_floor: float = 0.01
    evidentiary_gap: bool = False
    alpha: float = 0.05

    def __post_init__(self):
        if not self.rr_threshold > 0:
            raise ConfigError(
                f"rr_threshold must be positive, got {self.rr_threshold}"
            )
        if not 0.0 < self.material_fraction_floor < 1.0:
            raise ConfigError(
                f"material_fraction_floor must lie in (0, 1), "
                f"got {self.material_fraction_floor}"
            )
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")


@dataclass(frozen=True)
class GeneralCausation:
    verdict: CausationVerdict
    basis: str


@dataclass(frozen=True)
class ButForResult:
    verdict: ButFor
    rule: str
    pde: float


@dataclass(frozen=True)
class MaterialResult:
    verdict: Contribution
    rule: str


@dataclass(frozen=True)
class ApportionmentResult:
    scheme: Scheme
    units: dict  # exposure label -> non-negative units
    total_units: float
    involved_fraction: dict  # label -> fraction of outcomes involving it


@dataclass(frozen=True)
class TaxiCompany:
    label: str
    fleet_size: int
    negligence_rate: float = 1.0
    exposure_rate: float = 1.0

    def __post_init__(self):
        if isinstance(self.fleet_size, bool) or not isinstance(self.fleet_size, int):
            raise ValidationError(
                f"company {self.label!r}: fleet_size must be an integer"
            )
        if self.fleet_size <= 0:
            raise ValidationError(
                f"company {self.label!r}: fleet_size must be positive"
            )
        for name in ("negligence_rate", "exposure_rate"):
            v = getattr(self, name)
            if not (v >= 0.0 and math.isfinite(v)):
                raise ValidationError(
                    f"company {self.label!r}: {name} must be finite and >= 0"
                )


@dataclass(frozen=True)
class TaxiScenario:
    companies: tuple[TaxiCompany, ...]

    def __post_init__(self):
        if not self.companies:
            raise ValidationError("a scenario needs at least one company")
        labels = [c.label for c in self.companies]
        if len(set(labels)) != len(labels):
            raise ValidationError("company labels must be unique")


@dataclass(frozen=True)
class TaxiPosterior:
    posterior: dict  # label -> probability, sums to 1
    balance_verdict: str | None  # company exceeding 0.5, if any
    equal_negligence: bool
    equal_exposure: bool
    bare_statistics: bool


def _fmt(v: float) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def general_causation(
    report: ChecklistReport, pooled: EffectEstimate, cfg: LegalConfig
) -> GeneralCausation:
    """First limb: is the exposure capable of causing the outcome in the
    population? Resolved by the checklist's overall verdict; the basis
    text restates every test with its metrics and rationale."""
    established = report.overall is Overall.CAUSATION_SUPPORTED
    lines = [
        f"checklist overall: {report.overall.value}",
        (
            f"pooled estimate: {pooled.kind.value} {_fmt(pooled.point)} "
            f"({_fmt(pooled.confidence_level)} CI {_fmt(pooled.lcl)} "
            f"to {_fmt(pooled.ucl)})"
        ),
    ]
    for o in report.outcomes:
        line = f"Test {o.test_id} ({o.name}): {o.status.value}"
        if o.metrics:
            pairs = ", ".join(
                f"{k}={_fmt(v)}" for k, v in sorted(o.metrics.items())
            )
            line += f" [{pairs}]"
        if o.rationale:
            line += f" - {o.rationale}"
        lines.append(line)
    return GeneralCausation(
        verdict=(
            CausationVerdict.ESTABLISHED
            if established
            else CausationVerdict.NOT_ESTABLISHED
        ),
        basis="\n".join(lines),
    )


def but_for_verdict(estimate: EffectEstimate, cfg: LegalConfig) -> ButForResult:
    """Second limb, single-cause form: absent the exposure, would the
    outcome more likely than not have been avoided?

    Satisfied when the RR point (or the LCL under use_lcl) strictly
    exceeds the threshold; at the default threshold 2.0 this is the same
    as PDE > 0.5, and both forms are quoted in the rule text.
    """
    if estimate.kind is MeasureKind.EXCESS_RISK:
        raise ValidationError(
            "the but-for rule needs a ratio measure (RR, or OR for rare "
            "outcomes)"
        )
    basis = "lcl" if cfg.use_lcl else "point"
    value = estimate.lcl if cfg.use_lcl else estimate.point
    satisfied = value > cfg.rr_threshold
    p = pde(estimate.point)
    rule = (
        f"{estimate.kind.value} {basis} {_fmt(value)} "
        f"{'>' if satisfied else '<='} threshold {_fmt(cfg.rr_threshold)} "
        f"(strict inequality; equality fails); equivalently PDE "
        f"{_fmt(p)} {'>' if satisfied else '<='} "
        f"{_fmt(pde(cfg.rr_threshold))}"
    )
    if estimate.kind is MeasureKind.OR:
        rule += " [odds ratio read as RR under the rare-outcome approximation]"
    return ButForResult(
        verdict=ButFor.SATISFIED if satisfied else ButFor.NOT_SATISFIED,
        rule=rule,
        pde=p,
    )


def material_contribution_verdict(
    estimate: EffectEstimate, fraction: float, cfg: LegalConfig
) -> MaterialResult:
    """Second limb, multi-cause form.

    Ordinary route: the contribution is material when the association is
    statistically significant and the exposure's involved fraction
    exceeds the de minimis floor. Evidentiary-gap route: where etiology
    cannot attribute individual harm, a significant increase in risk
    (point above 1) suffices and is labeled MaterialRiskIncrease.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValidationError(
            f"fraction must lie in [0, 1], got {fraction}"
        )
    significant = estimate.p_value < cfg.alpha
    sig_text = (
        f"p {_fmt(estimate.p_value)} "
        f"{'<' if significant else '>='} alpha {_fmt(cfg.alpha)}"
    )
    if cfg.evidentiary_gap:
        ok = significant and estimate.point > 1.0
        rule = (
            f"evidentiary-gap route: requires significance ({sig_text}) and "
            f"a risk increase (point {_fmt(estimate.point)} > 1)"
        )
        return MaterialResult(
            Contribution.MATERIAL_RISK_INCREASE if ok else Contribution.NOT_MATERIAL,
            rule,
        )
    ok = significant and fraction > cfg.material_fraction_floor
    rule = (
        f"ordinary route: requires significance ({sig_text}) and involved "
        f"fraction {_fmt(fraction)} above the de minimis floor "
        f"{_fmt(cfg.material_fraction_floor)}"
    )
    return MaterialResult(
        Contribution.MATERIAL if ok else Contribution.NOT_MATERIAL, rule
    )


def apportion_joint_exposures(
    rr_a: float, rr_s: float, rr_as: float, scheme: Scheme
) -> ApportionmentResult:
    """Split joint-exposure outcomes between two exposures.

    Inputs are the RRs for exposure a alone, exposure s alone, and both
    together, each against the doubly unexposed baseline. Keys in the
    result are "a", "s" and "interaction". involved_fraction[x] is the
    fraction of excess units whose causation involves exposure x; under
    either scheme each main effect plus the whole interaction term
    counts toward its exposure, so the two fractions sum to more than 1
    whenever an interaction exists.
    """
    for name, v in (("rr_a", rr_a), ("rr_s", rr_s), ("rr_as", rr_as)):
        if not v >= 1.0:
            raise DomainError(
                f"{name} must be >= 1 to apportion excess risk, got {v}"
            )
    if scheme is Scheme.PAPER_EXCESS_UNITS:
        units = {
            "a": rr_a - 1.0,
            "s": rr_s - 1.0,
            "interaction": rr_as - 1.0,
        }
    else:
        interaction = rr_as - rr_a - rr_s + 1.0
        if interaction < 0.0:
            raise NegativeInteraction(
                f"joint RR {rr_as} is below the additive expectation "
                f"{rr_a + rr_s - 1.0}; the interaction is negative and this "
                f"partition does not apply"
            )
        units = {
            "a": rr_a - 1.0,
            "s": rr_s - 1.0,
            "interaction": interaction,
        }
    total = math.fsum(units.values())
    if total == 0.0:
        raise DegenerateError(
            "all RRs equal 1; there is no excess risk to apportion"
        )
    involved = {
        "a": (units["a"] + units["interaction"]) / total,
        "s": (units["s"] + units["interaction"]) / total,
    }
    return ApportionmentResult(
        scheme=scheme,
        units=units,
        total_units=total,
        involved_fraction=involved,
    )


def assigned_share(rr_subgroup: float) -> float:
    """Excess cases over total cases in an exposed subgroup, (rr - 1)/rr.

    Numerically the same function as pde, restricted to rr >= 1 and
    applied per subgroup for compensation purposes.
    """
    if not rr_subgroup >= 1.0:
        raise DomainError(
            f"assigned share needs rr >= 1, got {rr_subgroup}"
        )
    return (rr_subgroup - 1.0) / rr_subgroup


def allocate_liability(
    weights: dict,
    damages: float,
    mode: AllocationMode,
    unit: float | None = None,
) -> dict:
    """Split damages across parties in proportion to weights.

    Equal mode ignores the weight values (keys still name the parties).
    The float amounts sum to damages exactly: the largest-weight party
    receives the complement of everyone else's total. With unit set
    (for example 0.01 for cents), amounts are whole multiples of unit
    assigned by largest remainder, ties broken by label order.
    """
    if not weights:
        raise DegenerateWeights("no parties to allocate to")
    if not (damages >= 0.0 and math.isfinite(damages)):
        raise ValidationError(f"damages must be finite and >= 0, got {damages}")
    for label, w in weights.items():
        if not (w >= 0.0 and math.isfinite(w)):
            raise ValidationError(
                f"party {label!r}: weight must be finite and >= 0, got {w}"
            )
    if mode is AllocationMode.EQUAL:
        weights = {label: 1.0 for label in weights}
    total_w = math.fsum(weights.values())
    if total_w == 0.0:
        raise DegenerateWeights("all weights are zero")

    if unit is not None:
        if not unit > 0:
            raise ValidationError(f"unit must be positive, got {unit}")
        total_units = round(damages / unit)
        quotas = {k: total_units * w / total_w for k, w in weights.items()}
        base = {k: math.floor(q) for k, q in quotas.items()}
        leftover = total_units - sum(base.values())
        by_remainder = sorted(
            quotas, key=lambda k: (-(quotas[k] - base[k]), k)
        )
        for k in by_remainder[:leftover]:
            base[k] += 1
        return {k: base[k] * unit for k in weights}

    amounts = {k: damages * w / total_w for k, w in weights.items()}
    # pin the exact sum: the heaviest party absorbs the rounding slack.
    # The complement is taken against the exact rational sum of the
    # other shares; a float subtraction can leave the total an
    # unfixable ulp off when that sum carries sub-ulp bits.
    heaviest = max(sorted(weights), key=lambda k: weights[k])
    lighter = sorted(
        (k for k in weights if k != heaviest), key=lambda k: abs(amounts[k])
    )
    for _ in range(4):
        others = sum(Fraction(amounts[k]) for k in lighter)
        amounts[heaviest] = float(Fraction(damages) - others)
        if math.fsum(amounts.values()) == damages:
            break
        # exact half-ulp tie rounding the wrong way: nudge the lightest
        # other party by one of its (far finer) ulps and retry
        amounts[lighter[0]] = math.nextafter(amounts[lighter[0]], damages)
    return amounts


def taxi_posterior(s: TaxiScenario) -> TaxiPosterior:
    """Posterior probability that each company caused the harm.

    Each company's mass is fleet_size x negligence_rate x exposure_rate,
    normalized to sum to 1. Scale-invariant: multiplying all rates by a
    common positive constant changes nothing. When both rates are flat
    across companies the result is fleet proportions alone and the
    bare-statistics flag is set.
    """
    masses = {
        c.label: c.fleet_size * c.negligence_rate * c.exposure_rate
        for c in s.companies
    }
    total = math.fsum(masses.values())
    if total == 0.0:
        raise AllZeroMass(
            "every company has zero fleet x negligence x exposure mass"
        )
    posterior = {label: m / total for label, m in masses.items()}
    balance = None
    for label, p in posterior.items():
        if p > 0.5:
            balance = label
            break
    equal_neg = len({c.negligence_rate for c in s.companies}) == 1
    equal_exp = len({c.exposure_rate for c in s.companies}) == 1
    return TaxiPosterior(
        posterior=posterior,
        balance_verdict=balance,
        equal_negligence=equal_neg,
        equal_exposure=equal_exp,
        bare_statistics=equal_neg and equal_exp,
    )


def parse_taxi_file(raw: bytes) -> TaxiScenario:
    """Parse a scenario file: {"companies": [{"label", "fleet_size",
    "negligence_rate"?, "exposure_rate"?}]}. Omitted rates default to
    1.0, encoding the equal-rates assumptions."""
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"scenario file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise SchemaError("expected a JSON object", "$")
    unknown = sorted(set(doc) - {"companies"})
    if unknown:
        raise SchemaError(f"unknown key {unknown[0]!r}", "$")
    raw_companies = doc.get("companies")
    if not isinstance(raw_companies, list) or not raw_companies:
        raise SchemaError("companies must be a non-empty array", "$.companies")
    companies = []
    for i, c in enumerate(raw_companies):
        path = f"$.companies[{i}]"
        if not isinstance(c, dict):
            raise SchemaError("expected an object", path)
        unknown = sorted(
            set(c) - {"label", "fleet_size", "negligence_rate", "exposure_rate"}
        )
        if unknown:
            raise SchemaError(f"unknown key {unknown[0]!r}", path)
        if "label" not in c or not isinstance(c["label"], str):
            raise SchemaError("label must be a string", path)
        if "fleet_size" not in c or isinstance(c["fleet_size"], bool) \
                or not isinstance(c["fleet_size"], int):
            raise SchemaError("fleet_size must be an integer", path)
        rates = {}
        for key in ("negligence_rate", "exposure_rate"):
            v = c.get(key, 1.0)
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise SchemaError(f"{key} must be a number", f"{path}.{key}")
            rates[key] = float(v)
        companies.append(
            TaxiCompany(c["label"], c["fleet_size"], **rates)
        )
    return TaxiScenario(tuple(companies))
