"""causalcheck: evaluate epidemiological evidence of causation and the
legal rules that consume it.

The public surface groups into layers: table-level effect measures
(effects), stratified pooling and confounder sensitivity (confounding),
multi-study synthesis and dose-response (synthesis), the ten-test
checklist (checklist), the legal decision rules (legal), a seeded
simulation oracle (simulate), and report assembly plus the CLI
(report, cli).
"""

from .checklist import (
    ChecklistConfig,
    ChecklistReport,
    Overall,
    PrimaryAnalysis,
    TEST_NAMES,
    TestOutcome,
    WARN_SINGLE_STUDY,
    overall_verdict,
    primary_analysis,
    run_checklist,
    study_level_estimate,
)
from .confounding import (
    BiasAdjustment,
    BiasDirection,
    ConfounderSpec,
    CornfieldRequirements,
    MCSummary,
    SensitivityRange,
    SimpsonReport,
    bias_adjust,
    cornfield_requirements,
    detect_simpson,
    mantel_haenszel_pool,
    mc_sensitivity,
    meets_cornfield,
)
from .effects import (
    AssociationResult,
    EffectEstimate,
    MeasureKind,
    MisclassificationResult,
    MisclassificationSpec,
    PDE_ACCELERATION_WARNING,
    AssociationMethod,
    association_test,
    excess_risk,
    fisher_exact_p,
    misclassification_adjust,
    odds_ratio,
    pde,
    relative_risk,
)
from .errors import (
    AllZeroMass,
    ArityError,
    CausalCheckError,
    ConfigError,
    CovariateMismatch,
    DegenerateError,
    DegenerateWeights,
    DesignError,
    DomainError,
    EnumerationBound,
    InfeasibleCorrection,
    InsufficientStudies,
    MixedDesignError,
    NegativeInteraction,
    RiskOverflow,
    SchemaError,
    ValidationError,
)
from .legal import (
    AllocationMode,
    ApportionmentResult,
    ButFor,
    CausationVerdict,
    Contribution,
    LegalConfig,
    Scheme,
    TaxiCompany,
    TaxiPosterior,
    TaxiScenario,
    WARN_BARE_STATISTICS,
    allocate_liability,
    apportion_joint_exposures,
    assigned_share,
    but_for_verdict,
    general_causation,
    material_contribution_verdict,
    parse_taxi_file,
    taxi_posterior,
)
from .report import (
    EngineConfig,
    SCHEMA_VERSION,
    config_to_dict,
    parse_config,
    render_report,
)
from .simulate import (
    CohortTruth,
    ConfoundedCohort,
    ConfoundedTruth,
    MisclassificationTruth,
    apply_misclassification,
    exact_fisher_oracle,
    parse_truth_file,
    simulate_cohort,
    simulate_confounded_cohort,
)
from .stats import (
    chi2_1_sf,
    norm_cdf,
    norm_ppf,
    norm_sf,
    wald_p,
    z_two_sided,
)
from .study import (
    CausalChainSpec,
    DeclaredConfounder,
    Design,
    DosePoint,
    DoseSeries,
    EvidenceBundle,
    InteractionModel,
    QualitativeJudgment,
    RelationClass,
    Status,
    StratifiedStudy,
    Stratum,
    TwoByTwoTable,
    WARN_SMALL_EXPECTED,
    WARN_ZERO_CELL,
    parse_study_file,
    select_relevant_stratum,
    serialize_bundle,
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
    fit_doll_peto_points,
    meta_analyze,
    study_estimate_from_effect,
    trend_statistic,
)

__version__ = "0.1.0"
