"""Report assembly and rendering.

Every report is a plain JSON-native dict under schema "cl-report/1" with
a fixed envelope: command, inputs_digest (sha256 of the input bytes),
the full engine config (defaults included, so a report is
self-describing), a sorted deduplicated warnings list, and the
command-specific sections. JSON is the single machine format; the human
rendering is derived from the same dict and never computed separately.
Identical inputs therefore produce byte-identical output.
"""

from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field

from .checklist import (
    ChecklistConfig,
    ChecklistReport,
    PrimaryAnalysis,
    WARN_SINGLE_STUDY,
    primary_analysis,
    run_checklist,
    study_level_estimate,
)
from .confounding import (
    MCSummary,
    SensitivityRange,
    SimpsonReport,
    detect_simpson,
    mc_sensitivity,
)
from .effects import (
    AssociationResult,
    EffectEstimate,
    PDE_ACCELERATION_WARNING,
    association_test,
    excess_risk,
    odds_ratio,
    pde,
)
from .errors import CausalCheckError, ConfigError, ValidationError
from .legal import (
    ApportionmentResult,
    LegalConfig,
    OUT_OF_SCOPE_NOTE,
    Scheme,
    TaxiPosterior,
    TaxiScenario,
    WARN_BARE_STATISTICS,
    apportion_joint_exposures,
    but_for_verdict,
    general_causation,
    material_contribution_verdict,
    taxi_posterior,
)
from .simulate import (
    CohortTruth,
    ConfoundedTruth,
    simulate_cohort,
    simulate_confounded_cohort,
)
from .study import (
    CausalChainSpec,
    Design,
    EvidenceBundle,
    RelationClass,
    StratifiedStudy,
    Stratum,
    bundle_to_dict,
    validate_table,
)
from .synthesis import (
    ConsistencyEvidence,
    DoseFit,
    MetaResult,
    StudyEstimate,
    TrendResult,
    consistency_verdict,
    dose_trend,
    fit_doll_peto,
    meta_analyze,
    study_estimate_from_effect,
)

SCHEMA_VERSION = "cl-report/1"


@dataclass(frozen=True)
class EngineConfig:
    checklist: ChecklistConfig = field(default_factory=ChecklistConfig)
    legal: LegalConfig = field(default_factory=LegalConfig)
    mc_threshold: float = 2.0

    def __post_init__(self):
        if not self.mc_threshold > 0:
            raise ConfigError(
                f"mc_threshold must be positive, got {self.mc_threshold}"
            )


_FLOAT_KEYS = {
    "confidence_level",
    "alpha",
    "heterogeneity_alpha",
    "strength_threshold",
    "rr_threshold",
    "material_fraction_floor",
    "mc_threshold",
}
_BOOL_KEYS = {"strict_lcl", "strict", "use_lcl", "evidentiary_gap"}


def parse_config(raw: bytes | None) -> EngineConfig:
    """Parse a flat JSON config file; absent file means all defaults.

    alpha is a single shared key: the same significance level feeds both
    the checklist tests and the legal significance requirement.
    """
    if raw is None:
        return EngineConfig()
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    values: dict = {}
    for key, v in doc.items():
        if key in _FLOAT_KEYS:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{key} must be a number, got {v!r}")
            values[key] = float(v)
        elif key in _BOOL_KEYS:
            if not isinstance(v, bool):
                raise ConfigError(f"{key} must be true or false, got {v!r}")
            values[key] = v
        else:
            raise ConfigError(f"unknown config key {key!r}")

    def pick(cls, names):
        return cls(**{k: values[k] for k in names if k in values})

    checklist = pick(
        ChecklistConfig,
        (
            "strength_threshold",
            "strict_lcl",
            "alpha",
            "heterogeneity_alpha",
            "confidence_level",
            "strict",
        ),
    )
    legal = pick(
        LegalConfig,
        (
            "rr_threshold",
            "use_lcl",
            "material_fraction_floor",
            "evidentiary_gap",
            "alpha",
        ),
    )
    return EngineConfig(
        checklist=checklist,
        legal=legal,
        mc_threshold=values.get("mc_threshold", 2.0),
    )


def config_to_dict(cfg: EngineConfig) -> dict:
    return {
        "confidence_level": cfg.checklist.confidence_level,
        "alpha": cfg.checklist.alpha,
        "heterogeneity_alpha": cfg.checklist.heterogeneity_alpha,
        "strength_threshold": cfg.checklist.strength_threshold,
        "strict_lcl": cfg.checklist.strict_lcl,
        "strict": cfg.checklist.strict,
        "rr_threshold": cfg.legal.rr_threshold,
        "use_lcl": cfg.legal.use_lcl,
        "material_fraction_floor": cfg.legal.material_fraction_floor,
        "evidentiary_gap": cfg.legal.evidentiary_gap,
        "mc_threshold": cfg.mc_threshold,
    }


def inputs_digest(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()


def digest_args(obj) -> str:
    """Digest for subcommands whose input is flags rather than a file."""
    return inputs_digest(canonical_json(obj))


def canonical_json(doc) -> bytes:
    return (
        json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"
    ).encode("utf-8")


# --- serializers ---------------------------------------------------------


def estimate_dict(e: EffectEstimate) -> dict:
    return {
        "kind": e.kind.value,
        "point": e.point,
        "lcl": e.lcl,
        "ucl": e.ucl,
        "confidence_level": e.confidence_level,
        "p_value": e.p_value,
        "corrected": e.corrected,
    }


def association_dict(a: AssociationResult) -> dict:
    return {
        "method": a.method.value,
        "p_value": a.p_value,
        "statistic": a.statistic,
    }


def meta_dict(m: MetaResult) -> dict:
    return {
        "pooled_fixed": estimate_dict(m.pooled_fixed),
        "pooled_random": estimate_dict(m.pooled_random),
        "q": m.q,
        "q_df": m.q_df,
        "q_p": m.q_p,
        "i_squared": m.i_squared,
        "tau_squared": m.tau_squared,
    }


def consistency_dict(c: ConsistencyEvidence) -> dict:
    return {
        "status": c.status.value,
        "q_p": c.q_p,
        "overlap_fraction": c.overlap_fraction,
    }


def trend_dict(t: TrendResult) -> dict:
    return {
        "statistic": t.statistic,
        "trend_p": t.trend_p,
        "monotone_nondecreasing": t.monotone_nondecreasing,
    }


def fit_dict(f: DoseFit) -> dict:
    return {
        "z": f.z,
        "residual_sse": f.residual_sse,
        "doses": list(f.doses),
        "fitted_rr": list(f.fitted_rr),
    }


def simpson_dict(s: SimpsonReport) -> dict:
    return {
        "crude": estimate_dict(s.crude),
        "per_stratum": [estimate_dict(e) for e in s.per_stratum],
        "reversal": s.reversal,
    }


def mc_dict(m: MCSummary) -> dict:
    return {
        "rr_observed": m.rr_observed,
        "threshold": m.threshold,
        "draws": m.draws,
        "seed": m.seed,
        "quantiles": {label: value for label, value in m.quantiles},
        "fraction_above_threshold": m.fraction_above_threshold,
    }


def _scrub(value):
    """Force arbitrary metric values into JSON-native shape."""
    if isinstance(value, enum.Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): _scrub(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_scrub(v) for v in value]
    return value


def checklist_dict(rep: ChecklistReport) -> dict:
    return {
        "outcomes": [
            {
                "test": o.test_id,
                "name": o.name,
                "status": o.status.value,
                "metrics": _scrub(o.metrics),
                "rationale": o.rationale,
            }
            for o in rep.outcomes
        ],
        "overall": rep.overall.value,
        "narrative": rep.narrative,
    }


def primary_dict(p: PrimaryAnalysis) -> dict:
    return {
        "estimate": estimate_dict(p.estimate),
        "p_value": p.p_value,
        "method": p.method,
        "source": p.source,
    }


def apportion_dict(r: ApportionmentResult) -> dict:
    return {
        "scheme": r.scheme.value,
        "units": dict(r.units),
        "total_units": r.total_units,
        "involved_fraction": dict(r.involved_fraction),
    }


def taxi_dict(t: TaxiPosterior) -> dict:
    return {
        "posterior": dict(t.posterior),
        "balance_verdict": t.balance_verdict,
        "assumptions": {
            "equal_negligence_rates": t.equal_negligence,
            "equal_exposure_rates": t.equal_exposure,
        },
        "bare_statistics": t.bare_statistics,
    }


def chain_dict(c: CausalChainSpec) -> dict:
    return {
        "action": c.action,
        "compensable_exposure": c.compensable_exposure,
        "outcome": c.outcome,
        "relation_class": c.relation_class.value,
        "other_exposures": list(c.other_exposures),
        "interaction_model": c.interaction_model.value,
    }


# --- warning collection --------------------------------------------------


def _bundle_table_warnings(bundle: EvidenceBundle) -> set[str]:
    out: set[str] = set()
    for study in bundle.studies:
        for s in study.strata:
            out.update(validate_table(s.table).warnings)
    for series in bundle.dose_series:
        for p in series.points:
            out.update(validate_table(p.table).warnings)
    return out


def _envelope(
    command: str, digest: str, cfg: EngineConfig, warnings: set[str],
    sections: dict,
) -> dict:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "inputs_digest": digest,
        "config": config_to_dict(cfg),
        "warnings": sorted(warnings),
    }
    doc.update(sections)
    return doc


# --- per-command builders ------------------------------------------------


def build_measure_report(
    bundle: EvidenceBundle, cfg: EngineConfig, raw: bytes
) -> dict:
    level = cfg.checklist.confidence_level
    warnings = _bundle_table_warnings(bundle)
    studies = []
    for study in bundle.studies:
        est = study_level_estimate(study, level)
        entry: dict = {
            "id": study.study_id,
            "design": study.design.value,
            "strata": len(study.strata),
            "method": "Crude" if len(study.strata) == 1 else "MantelHaenszel",
            "estimate": estimate_dict(est),
        }
        if est.corrected:
            # pooled path can correct without a raw zero cell warning
            warnings.update(validate_table(study.crude_table()).warnings)
        if len(study.strata) == 1:
            t = study.strata[0].table
            entry["association"] = association_dict(association_test(t))
            if study.design is Design.COHORT:
                entry["odds_ratio"] = estimate_dict(odds_ratio(t, level))
                entry["excess_risk"] = estimate_dict(excess_risk(t, level))
        else:
            entry["simpson"] = simpson_dict(detect_simpson(study, level))
        if study.design is Design.COHORT:
            entry["pde"] = pde(est.point)
            warnings.add(PDE_ACCELERATION_WARNING)
        studies.append(entry)
    return _envelope(
        "measure", inputs_digest(raw), cfg, warnings, {"studies": studies}
    )


def _per_study_estimates(
    bundle: EvidenceBundle, level: float
) -> tuple[StudyEstimate, ...]:
    return tuple(
        study_estimate_from_effect(s.study_id, study_level_estimate(s, level))
        for s in bundle.studies
    )


def build_meta_report(
    bundle: EvidenceBundle, cfg: EngineConfig, raw: bytes
) -> dict:
    level = cfg.checklist.confidence_level
    per_study = _per_study_estimates(bundle, level)
    meta = meta_analyze(per_study, level)
    cons = consistency_verdict(
        per_study, cfg.checklist.heterogeneity_alpha, level
    )
    sections = {
        "meta": meta_dict(meta),
        "consistency": consistency_dict(cons),
        "studies": [
            {"id": e.study_id, "log_rr": e.log_rr, "se": e.se}
            for e in per_study
        ],
    }
    return _envelope(
        "meta", inputs_digest(raw), cfg, _bundle_table_warnings(bundle),
        sections,
    )


def build_dose_report(
    bundle: EvidenceBundle, cfg: EngineConfig, raw: bytes
) -> dict:
    if not bundle.dose_series:
        raise ValidationError("the study file declares no dose series")
    entries = []
    for ds in bundle.dose_series:
        entry = {
            "id": ds.series_id,
            "units": ds.units,
            "trend": trend_dict(dose_trend(ds)),
            "fit": fit_dict(fit_doll_peto(ds)),
        }
        entries.append(entry)
    return _envelope(
        "dose", inputs_digest(raw), cfg, _bundle_table_warnings(bundle),
        {"dose_series": entries},
    )


def _checklist_sections(
    bundle: EvidenceBundle, cfg: EngineConfig
) -> tuple[dict, set[str], ChecklistReport, PrimaryAnalysis | None]:
    rep = run_checklist(bundle, cfg.checklist)
    warnings = _bundle_table_warnings(bundle)
    if any(o.rationale == WARN_SINGLE_STUDY for o in rep.outcomes):
        warnings.add(WARN_SINGLE_STUDY)
    try:
        primary = primary_analysis(bundle, cfg.checklist)
        primary_section = primary_dict(primary)
    except CausalCheckError as exc:  # mirrored as NotAssessable outcomes
        primary = None
        primary_section = {"error": str(exc)}
    sections = {
        "checklist": checklist_dict(rep),
        "primary_analysis": primary_section,
    }
    return sections, warnings, rep, primary


def build_checklist_report(
    bundle: EvidenceBundle, cfg: EngineConfig, raw: bytes
) -> dict:
    sections, warnings, _, _ = _checklist_sections(bundle, cfg)
    return _envelope(
        "checklist", inputs_digest(raw), cfg, warnings, sections
    )


def build_legal_report(
    bundle: EvidenceBundle, cfg: EngineConfig, raw: bytes
) -> dict:
    if bundle.chain is None:
        raise ValidationError(
            "legal evaluation needs a chain block naming the action, "
            "exposure, outcome and relation class"
        )
    sections, warnings, rep, primary = _checklist_sections(bundle, cfg)
    if primary is None:
        raise ValidationError(
            "legal evaluation needs a usable primary estimate: "
            + sections["primary_analysis"]["error"]
        )
    gen = general_causation(rep, primary.estimate, cfg.legal)
    if bundle.chain.relation_class is RelationClass.R2_MULTIPLE_IDENTIFIED:
        # several identified causes: the multi-cause rule applies, with
        # the single-exposure PDE standing in for the involved fraction
        fraction = max(0.0, pde(primary.estimate.point))
        mat = material_contribution_verdict(
            primary.estimate, fraction, cfg.legal
        )
        specific = {
            "route": "MaterialContribution",
            "verdict": mat.verdict.value,
            "rule": mat.rule,
            "fraction": fraction,
        }
    else:
        bf = but_for_verdict(primary.estimate, cfg.legal)
        specific = {
            "route": "ButFor",
            "verdict": bf.verdict.value,
            "rule": bf.rule,
            "pde": bf.pde,
        }
    warnings.add(PDE_ACCELERATION_WARNING)
    sections["legal"] = {
        "chain": chain_dict(bundle.chain),
        "general": {"verdict": gen.verdict.value, "basis": gen.basis},
        "specific": specific,
        "scope_note": OUT_OF_SCOPE_NOTE,
    }
    return _envelope("legal", inputs_digest(raw), cfg, warnings, sections)


def build_apportion_report(
    rr_a: float, rr_s: float, rr_as: float, scheme: Scheme, cfg: EngineConfig
) -> dict:
    result = apportion_joint_exposures(rr_a, rr_s, rr_as, scheme)
    digest = digest_args(
        {"rr_a": rr_a, "rr_s": rr_s, "rr_as": rr_as, "scheme": scheme.value}
    )
    return _envelope(
        "apportion", digest, cfg, set(),
        {"apportionment": apportion_dict(result)},
    )


def build_taxi_report(
    scenario: TaxiScenario, cfg: EngineConfig, raw: bytes
) -> dict:
    post = taxi_posterior(scenario)
    warnings = {WARN_BARE_STATISTICS} if post.bare_statistics else set()
    return _envelope(
        "taxi", inputs_digest(raw), cfg, warnings, {"taxi": taxi_dict(post)}
    )


def build_sensitivity_report(
    bundle: EvidenceBundle,
    cfg: EngineConfig,
    raw: bytes,
    rng: SensitivityRange,
    threshold: float | None = None,
    workers: int = 1,
) -> dict:
    primary = primary_analysis(bundle, cfg.checklist)
    summary = mc_sensitivity(
        primary.estimate.point,
        rng,
        threshold=cfg.mc_threshold if threshold is None else threshold,
        workers=workers,
    )
    sections = {
        "sensitivity": mc_dict(summary),
        "ranges": {
            "rr_confounder": list(rng.rr_range),
            "p1": list(rng.p1_range),
            "p0": list(rng.p0_range),
        },
        "source": primary.source,
    }
    return _envelope(
        "sensitivity", inputs_digest(raw), cfg,
        _bundle_table_warnings(bundle), sections,
    )


def _truth_echo(truth: CohortTruth | ConfoundedTruth) -> dict:
    doc: dict = {
        "n_exposed": truth.n_exposed,
        "n_unexposed": truth.n_unexposed,
        "baseline_risk": truth.baseline_risk,
        "rr": truth.rr,
        "seed": truth.seed,
    }
    if truth.misclassification is not None:
        doc["misclassification"] = {
            "sensitivity": truth.misclassification.sensitivity,
            "specificity": truth.misclassification.specificity,
        }
    if isinstance(truth, ConfoundedTruth):
        conf = {
            "rr_confounder": truth.rr_confounder,
            "p1": truth.p1,
            "p0": truth.p0,
        }
        if truth.interaction_rr is not None:
            conf["interaction_rr"] = truth.interaction_rr
        doc["confounder"] = conf
    return doc


def build_simulate_report(
    truth: CohortTruth | ConfoundedTruth,
    cfg: EngineConfig,
    raw: bytes,
    replicate: int = 0,
    expected: bool = False,
) -> dict:
    if isinstance(truth, ConfoundedTruth):
        cohort = simulate_confounded_cohort(truth, replicate, expected)
        study = cohort.study
        crude = cohort.crude
    else:
        t = simulate_cohort(truth, replicate, expected)
        study = StratifiedStudy(study_id="simulated", strata=(Stratum((), t),))
        crude = t
    bundle = EvidenceBundle(studies=(study,))
    section = {
        "mode": "expected" if expected else "random",
        "replicate": replicate,
        "truth": _truth_echo(truth),
        "study_file": bundle_to_dict(bundle),
        "crude": {"a": crude.a, "b": crude.b, "c": crude.c, "d": crude.d},
    }
    return _envelope(
        "simulate", inputs_digest(raw), cfg,
        _bundle_table_warnings(bundle), {"simulated": section},
    )


# --- rendering -----------------------------------------------------------


def _human_scalar(v) -> str:
    if v is True:
        return "true"
    if v is False:
        return "false"
    if v is None:
        return "null"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _human_lines(value, indent: int, out: list):
    pad = " " * indent
    if isinstance(value, dict):
        for k in sorted(value):
            v = value[k]
            if isinstance(v, (dict, list)) and v:
                out.append(f"{pad}{k}:")
                _human_lines(v, indent + 2, out)
            elif isinstance(v, str) and "\n" in v:
                out.append(f"{pad}{k}: |")
                for line in v.split("\n"):
                    out.append(f"{pad}  {line}")
            elif isinstance(v, (dict, list)):
                out.append(f"{pad}{k}: (none)")
            else:
                out.append(f"{pad}{k}: {_human_scalar(v)}")
    elif isinstance(value, list):
        for item in value:
            if isinstance(item, (dict, list)) and item:
                out.append(f"{pad}-")
                _human_lines(item, indent + 2, out)
            elif isinstance(item, str) and "\n" in item:
                out.append(f"{pad}- |")
                for line in item.split("\n"):
                    out.append(f"{pad}  {line}")
            else:
                out.append(f"{pad}- {_human_scalar(item)}")
    else:
        out.append(f"{pad}{_human_scalar(value)}")


def render_report(report: dict, fmt: str = "json") -> bytes:
    """Render a report dict. JSON is canonical (sorted keys, compact,
    trailing newline); human is an indented text view of the same dict,
    so every number, rule text and rationale appears verbatim."""
    if fmt == "json":
        return canonical_json(report)
    if fmt != "human":
        raise ValidationError(f"unknown format {fmt!r}")
    body = {
        k: v
        for k, v in report.items()
        if k not in ("schema_version", "command")
    }
    lines = [f"{report['command']} report ({report['schema_version']})"]
    _human_lines(body, 0, lines)
    return ("\n".join(lines) + "\n").encode("utf-8")
