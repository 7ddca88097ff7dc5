"""Data model for causal evidence: 2x2 tables, stratified studies, dose
series, causal-chain descriptions, and the JSON study-file format.

Everything here is an immutable value type. File parsing is strict: the
schema rejects unknown keys so that typos fail loudly instead of being
silently ignored, and counts must be integers (rates like "25 per 1000"
are supplied as counts with denominators so exact tests stay available).

Stratum lookup is exact-profile only. Nearest-profile matching is refused
by design: fine subgroups cannot be estimated reliably, so guessing a
"close" stratum would manufacture precision the data does not have.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

from .errors import CovariateMismatch, MixedDesignError, SchemaError, ValidationError

_CELL_NAMES = {
    "a": "a (exposed cases)",
    "b": "b (exposed noncases)",
    "c": "c (unexposed cases)",
    "d": "d (unexposed noncases)",
}

# Fixed warning strings; golden-file tests match these verbatim.
WARN_ZERO_CELL = (
    "zero cell present: 0.5 will be added to all four cells for interval "
    "estimates"
)
WARN_SMALL_EXPECTED = (
    "expected cell count below 5: the exact test path applies"
)


class Design(enum.Enum):
    COHORT = "cohort"
    CASE_CONTROL = "case_control"


class Status(enum.Enum):
    """Verdict vocabulary shared by judgments and checklist outcomes."""

    PASS = "Pass"
    FAIL = "Fail"
    DISCOUNTED = "Discounted"
    NOT_ASSESSABLE = "NotAssessable"


class RelationClass(enum.Enum):
    R0_NECESSARY_SUFFICIENT = "R0"
    R1_SINGLE_IDENTIFIED = "R1"
    R2_MULTIPLE_IDENTIFIED = "R2"


class InteractionModel(enum.Enum):
    ADDITIVE = "additive"
    SYNERGISTIC = "synergistic"


@dataclass(frozen=True)
class TwoByTwoTable:
    """Exposure x outcome counts: a, b exposed; c, d unexposed."""

    a: int
    b: int
    c: int
    d: int
    design: Design = Design.COHORT

    @property
    def n(self) -> int:
        return self.a + self.b + self.c + self.d

    def cells(self) -> tuple[int, int, int, int]:
        return (self.a, self.b, self.c, self.d)


@dataclass(frozen=True)
class TableValidation:
    ok: bool
    violations: tuple[str, ...] = ()
    warnings: tuple[str, ...] = ()


def expected_counts(t: TwoByTwoTable) -> tuple[float, float, float, float] | None:
    """Expected cell counts under independence; None for an empty table."""
    n = t.n
    if n == 0:
        return None
    r1, r0 = t.a + t.b, t.c + t.d
    c1, c0 = t.a + t.c, t.b + t.d
    return (r1 * c1 / n, r1 * c0 / n, r0 * c1 / n, r0 * c0 / n)


def validate_table(t: TwoByTwoTable) -> TableValidation:
    """Structural validation; findings are returned, never raised.

    Violations make the table unusable (negative or non-integer counts).
    Warnings flag cells that change the computational route downstream:
    a zero cell (continuity correction) or a small expected count (exact
    test instead of chi-square).
    """
    violations = []
    for name in ("a", "b", "c", "d"):
        v = getattr(t, name)
        if isinstance(v, bool) or not isinstance(v, int):
            violations.append(f"non-integer count in cell {_CELL_NAMES[name]}")
        elif v < 0:
            violations.append(f"negative count in cell {_CELL_NAMES[name]}")
    if violations:
        return TableValidation(ok=False, violations=tuple(violations))

    warnings = []
    if 0 in t.cells():
        warnings.append(WARN_ZERO_CELL)
    exp = expected_counts(t)
    if exp is not None and min(exp) < 5.0:
        warnings.append(WARN_SMALL_EXPECTED)
    return TableValidation(ok=True, warnings=tuple(warnings))


@dataclass(frozen=True)
class Stratum:
    profile: tuple[tuple[str, str], ...]  # sorted (covariate, level) pairs
    table: TwoByTwoTable

    def profile_dict(self) -> dict[str, str]:
        return dict(self.profile)


def _freeze_profile(profile: dict[str, str]) -> tuple[tuple[str, str], ...]:
    return tuple(sorted(profile.items()))


@dataclass(frozen=True)
class NoMatch:
    """Returned when no stratum has the requested profile."""

    available: tuple[tuple[tuple[str, str], ...], ...]


@dataclass(frozen=True)
class StratifiedStudy:
    study_id: str
    strata: tuple[Stratum, ...]
    metadata: str = ""

    def __post_init__(self):
        if not self.strata:
            raise ValidationError(
                f"study {self.study_id!r}: at least one stratum is required"
            )
        names = frozenset(k for k, _ in self.strata[0].profile)
        seen = set()
        for s in self.strata:
            if frozenset(k for k, _ in s.profile) != names:
                raise ValidationError(
                    f"study {self.study_id!r}: strata disagree on covariate names"
                )
            if s.profile in seen:
                raise ValidationError(
                    f"study {self.study_id!r}: duplicate stratum profile "
                    f"{dict(s.profile)!r}"
                )
            seen.add(s.profile)

    @property
    def design(self) -> Design:
        # checked lazily so pooling operations can report the mismatch
        designs = {s.table.design for s in self.strata}
        if len(designs) > 1:
            raise MixedDesignError(
                f"study {self.study_id!r}: strata disagree on design"
            )
        return self.strata[0].table.design

    def covariate_names(self) -> frozenset[str]:
        return frozenset(k for k, _ in self.strata[0].profile)

    def crude_table(self) -> TwoByTwoTable:
        a = sum(s.table.a for s in self.strata)
        b = sum(s.table.b for s in self.strata)
        c = sum(s.table.c for s in self.strata)
        d = sum(s.table.d for s in self.strata)
        return TwoByTwoTable(a, b, c, d, self.design)


def select_relevant_stratum(
    study: StratifiedStudy, profile: dict[str, str]
) -> TwoByTwoTable | NoMatch:
    """Exact-profile stratum lookup.

    Raises CovariateMismatch when the profile's covariate names differ
    from the study's. A profile with known names but no matching stratum
    returns NoMatch listing the available profiles; approximate matching
    is deliberately not offered.
    """
    names = frozenset(profile)
    study_names = study.covariate_names()
    if names != study_names:
        raise CovariateMismatch(
            f"profile covariates {sorted(names)} do not match study "
            f"covariates {sorted(study_names)}"
        )
    want = _freeze_profile(profile)
    for s in study.strata:
        if s.profile == want:
            return s.table
    return NoMatch(available=tuple(s.profile for s in study.strata))


@dataclass(frozen=True)
class DosePoint:
    dose: float
    table: TwoByTwoTable


@dataclass(frozen=True)
class DoseSeries:
    """Dosed groups against one shared zero-dose referent.

    Each point's (a, b) cells are the group at that dose; (c, d) are the
    referent and must be identical across points.
    """

    series_id: str
    points: tuple[DosePoint, ...]
    units: str = ""

    def __post_init__(self):
        if not self.points:
            raise ValidationError(
                f"dose series {self.series_id!r}: at least one point required"
            )
        prev = None
        for p in self.points:
            if p.dose < 0:
                raise ValidationError(
                    f"dose series {self.series_id!r}: negative dose {p.dose}"
                )
            if prev is not None and p.dose <= prev:
                raise ValidationError(
                    f"dose series {self.series_id!r}: doses must be strictly "
                    f"increasing ({p.dose} after {prev})"
                )
            prev = p.dose
        ref = (self.points[0].table.c, self.points[0].table.d)
        for p in self.points[1:]:
            if (p.table.c, p.table.d) != ref:
                raise ValidationError(
                    f"dose series {self.series_id!r}: all points must share "
                    f"the same zero-dose referent counts (c, d)"
                )

    @property
    def referent(self) -> tuple[int, int]:
        return (self.points[0].table.c, self.points[0].table.d)


@dataclass(frozen=True)
class CausalChainSpec:
    """Action -> exposure -> outcome labels and the relationship class."""

    action: str
    compensable_exposure: str
    outcome: str
    relation_class: RelationClass
    other_exposures: tuple[str, ...] = ()
    interaction_model: InteractionModel = InteractionModel.ADDITIVE

    def __post_init__(self):
        multi = self.relation_class is RelationClass.R2_MULTIPLE_IDENTIFIED
        if multi and not self.other_exposures:
            raise ValidationError(
                "relation class R2 requires at least one other exposure"
            )
        if not multi and self.other_exposures:
            raise ValidationError(
                f"relation class {self.relation_class.value} does not admit "
                f"other exposures"
            )


@dataclass(frozen=True)
class QualitativeJudgment:
    """Human verdict for one of the non-computable tests (1, 2, 3, 10)."""

    test_id: int
    verdict: Status
    rationale: str = ""

    def __post_init__(self):
        if self.test_id not in (1, 2, 3, 10):
            raise ValidationError(
                f"judgments are accepted only for tests 1, 2, 3 and 10, "
                f"got test {self.test_id}"
            )
        if self.verdict in (Status.FAIL, Status.DISCOUNTED) and not self.rationale:
            raise ValidationError(
                f"test {self.test_id}: a {self.verdict.value} judgment "
                f"requires a rationale"
            )


@dataclass(frozen=True)
class DeclaredConfounder:
    """A named candidate confounder with its outcome RR and prevalences."""

    label: str
    rr: float
    p1: float  # prevalence among the exposed
    p0: float  # prevalence among the unexposed

    def __post_init__(self):
        if not self.rr > 0 or self.rr != self.rr or self.rr == float("inf"):
            raise ValidationError(
                f"confounder {self.label!r}: rr must be positive and finite"
            )
        for name in ("p1", "p0"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(
                    f"confounder {self.label!r}: {name} must lie in [0, 1]"
                )


@dataclass(frozen=True)
class EvidenceBundle:
    studies: tuple[StratifiedStudy, ...]
    dose_series: tuple[DoseSeries, ...] = ()
    judgments: tuple[QualitativeJudgment, ...] = ()
    confounders: tuple[DeclaredConfounder, ...] = ()
    chain: CausalChainSpec | None = None


# --- JSON schema walking -------------------------------------------------
#
# Every reader takes the path of the node it is reading so SchemaError
# messages point at the offending location ("$.studies[0].table.a").


def _expect(value, kind, kindname: str, path: str):
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise SchemaError(f"expected {kindname}, got {type(value).__name__}", path)
    if kind is not int and not isinstance(value, kind):
        raise SchemaError(f"expected {kindname}, got {type(value).__name__}", path)
    return value


def _get(obj: dict, key: str, kind, kindname: str, path: str):
    if key not in obj:
        raise SchemaError(f"missing required key {key!r}", path)
    return _expect(obj[key], kind, kindname, f"{path}.{key}")


def _opt(obj: dict, key: str, kind, kindname: str, path: str, default):
    if key not in obj:
        return default
    return _expect(obj[key], kind, kindname, f"{path}.{key}")


def _reject_unknown(obj: dict, allowed: frozenset, path: str):
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise SchemaError(f"unknown key {unknown[0]!r}", path)


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"expected number, got {type(value).__name__}", path)
    return float(value)


def _parse_table(obj, design: Design, path: str) -> TwoByTwoTable:
    _expect(obj, dict, "object", path)
    _reject_unknown(obj, frozenset({"a", "b", "c", "d"}), path)
    cells = {k: _get(obj, k, int, "integer", path) for k in ("a", "b", "c", "d")}
    t = TwoByTwoTable(cells["a"], cells["b"], cells["c"], cells["d"], design)
    report = validate_table(t)
    if not report.ok:
        raise ValidationError(f"{path}: {report.violations[0]}")
    return t


def _parse_design(obj: dict, path: str) -> Design:
    raw = _get(obj, "design", str, "string", path)
    try:
        return Design(raw)
    except ValueError:
        raise SchemaError(
            f"design must be 'cohort' or 'case_control', got {raw!r}",
            f"{path}.design",
        ) from None


def _parse_study(obj, path: str) -> StratifiedStudy:
    _expect(obj, dict, "object", path)
    _reject_unknown(
        obj, frozenset({"id", "design", "strata", "metadata"}), path
    )
    study_id = _get(obj, "id", str, "string", path)
    design = _parse_design(obj, path)
    strata_raw = _get(obj, "strata", list, "array", path)
    if not strata_raw:
        raise SchemaError("at least one stratum is required", f"{path}.strata")
    strata = []
    for i, s in enumerate(strata_raw):
        spath = f"{path}.strata[{i}]"
        _expect(s, dict, "object", spath)
        _reject_unknown(s, frozenset({"profile", "table"}), spath)
        profile_raw = _opt(s, "profile", dict, "object", spath, {})
        for k, v in profile_raw.items():
            _expect(k, str, "string", f"{spath}.profile")
            _expect(v, str, "string", f"{spath}.profile.{k}")
        table = _parse_table(_get(s, "table", dict, "object", spath),
                             design, f"{spath}.table")
        strata.append(Stratum(_freeze_profile(profile_raw), table))
    metadata = _opt(obj, "metadata", str, "string", path, "")
    return StratifiedStudy(study_id, tuple(strata), metadata)


def _parse_dose_series(obj, path: str) -> DoseSeries:
    _expect(obj, dict, "object", path)
    _reject_unknown(obj, frozenset({"id", "units", "points"}), path)
    series_id = _get(obj, "id", str, "string", path)
    units = _opt(obj, "units", str, "string", path, "")
    points_raw = _get(obj, "points", list, "array", path)
    if not points_raw:
        raise SchemaError("at least one dose point required", f"{path}.points")
    points = []
    for i, p in enumerate(points_raw):
        ppath = f"{path}.points[{i}]"
        _expect(p, dict, "object", ppath)
        _reject_unknown(p, frozenset({"dose", "table"}), ppath)
        if "dose" not in p:
            raise SchemaError("missing required key 'dose'", ppath)
        dose = _number(p["dose"], f"{ppath}.dose")
        table = _parse_table(_get(p, "table", dict, "object", ppath),
                             Design.COHORT, f"{ppath}.table")
        points.append(DosePoint(dose, table))
    return DoseSeries(series_id, tuple(points), units)


def _parse_judgment(obj, path: str) -> QualitativeJudgment:
    _expect(obj, dict, "object", path)
    _reject_unknown(obj, frozenset({"test", "verdict", "rationale"}), path)
    test_id = _get(obj, "test", int, "integer", path)
    raw = _get(obj, "verdict", str, "string", path)
    try:
        verdict = Status(raw)
    except ValueError:
        raise SchemaError(
            f"verdict must be one of Pass, Fail, Discounted, NotAssessable; "
            f"got {raw!r}",
            f"{path}.verdict",
        ) from None
    rationale = _opt(obj, "rationale", str, "string", path, "")
    return QualitativeJudgment(test_id, verdict, rationale)


def _parse_confounder(obj, path: str) -> DeclaredConfounder:
    _expect(obj, dict, "object", path)
    _reject_unknown(obj, frozenset({"label", "rr", "p1", "p0"}), path)
    label = _get(obj, "label", str, "string", path)
    vals = {}
    for k in ("rr", "p1", "p0"):
        if k not in obj:
            raise SchemaError(f"missing required key {k!r}", path)
        vals[k] = _number(obj[k], f"{path}.{k}")
    return DeclaredConfounder(label, vals["rr"], vals["p1"], vals["p0"])


def _parse_chain(obj, path: str) -> CausalChainSpec:
    _expect(obj, dict, "object", path)
    allowed = frozenset({
        "action", "compensable_exposure", "outcome", "relation_class",
        "other_exposures", "interaction_model",
    })
    _reject_unknown(obj, allowed, path)
    raw_rel = _get(obj, "relation_class", str, "string", path)
    try:
        relation = RelationClass(raw_rel)
    except ValueError:
        raise SchemaError(
            f"relation_class must be R0, R1 or R2, got {raw_rel!r}",
            f"{path}.relation_class",
        ) from None
    raw_int = _opt(obj, "interaction_model", str, "string", path, "additive")
    try:
        interaction = InteractionModel(raw_int)
    except ValueError:
        raise SchemaError(
            f"interaction_model must be 'additive' or 'synergistic', "
            f"got {raw_int!r}",
            f"{path}.interaction_model",
        ) from None
    others_raw = _opt(obj, "other_exposures", list, "array", path, [])
    others = tuple(
        _expect(e, str, "string", f"{path}.other_exposures[{i}]")
        for i, e in enumerate(others_raw)
    )
    return CausalChainSpec(
        action=_get(obj, "action", str, "string", path),
        compensable_exposure=_get(obj, "compensable_exposure", str, "string", path),
        outcome=_get(obj, "outcome", str, "string", path),
        relation_class=relation,
        other_exposures=others,
        interaction_model=interaction,
    )


def parse_study_file(raw: bytes) -> EvidenceBundle:
    """Parse and fully validate a UTF-8 JSON study file.

    SchemaError carries the JSON path of the offending node; count
    violations surface as ValidationError naming the cell. A bundle that
    parses is safe to hand to every downstream operation.
    """
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SchemaError(f"file is not valid UTF-8: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"file is not valid JSON: {exc}") from None
    _expect(doc, dict, "object", "$")
    allowed = frozenset({
        "studies", "dose_series", "judgments", "confounders", "chain",
    })
    _reject_unknown(doc, allowed, "$")

    studies_raw = _get(doc, "studies", list, "array", "$")
    if not studies_raw:
        raise SchemaError("at least one study is required", "$.studies")
    studies = tuple(
        _parse_study(s, f"$.studies[{i}]") for i, s in enumerate(studies_raw)
    )
    ids = [s.study_id for s in studies]
    if len(set(ids)) != len(ids):
        raise SchemaError("study ids must be unique", "$.studies")

    series = tuple(
        _parse_dose_series(d, f"$.dose_series[{i}]")
        for i, d in enumerate(_opt(doc, "dose_series", list, "array", "$", []))
    )
    judgments = tuple(
        _parse_judgment(j, f"$.judgments[{i}]")
        for i, j in enumerate(_opt(doc, "judgments", list, "array", "$", []))
    )
    seen_tests = set()
    for j in judgments:
        if j.test_id in seen_tests:
            raise SchemaError(
                f"duplicate judgment for test {j.test_id}", "$.judgments"
            )
        seen_tests.add(j.test_id)
    confounders = tuple(
        _parse_confounder(c, f"$.confounders[{i}]")
        for i, c in enumerate(_opt(doc, "confounders", list, "array", "$", []))
    )
    labels = [c.label for c in confounders]
    if len(set(labels)) != len(labels):
        raise SchemaError("confounder labels must be unique", "$.confounders")

    chain = None
    if "chain" in doc:
        chain = _parse_chain(doc["chain"], "$.chain")
    return EvidenceBundle(studies, series, judgments, confounders, chain)


# --- serialization -------------------------------------------------------


def _table_to_json(t: TwoByTwoTable) -> dict:
    return {"a": t.a, "b": t.b, "c": t.c, "d": t.d}


def bundle_to_dict(bundle: EvidenceBundle) -> dict:
    doc: dict = {
        "studies": [
            {
                "id": s.study_id,
                "design": s.design.value,
                "strata": [
                    {"profile": dict(st.profile), "table": _table_to_json(st.table)}
                    for st in s.strata
                ],
                **({"metadata": s.metadata} if s.metadata else {}),
            }
            for s in bundle.studies
        ]
    }
    if bundle.dose_series:
        doc["dose_series"] = [
            {
                "id": d.series_id,
                **({"units": d.units} if d.units else {}),
                "points": [
                    {"dose": p.dose, "table": _table_to_json(p.table)}
                    for p in d.points
                ],
            }
            for d in bundle.dose_series
        ]
    if bundle.judgments:
        doc["judgments"] = [
            {
                "test": j.test_id,
                "verdict": j.verdict.value,
                **({"rationale": j.rationale} if j.rationale else {}),
            }
            for j in bundle.judgments
        ]
    if bundle.confounders:
        doc["confounders"] = [
            {"label": c.label, "rr": c.rr, "p1": c.p1, "p0": c.p0}
            for c in bundle.confounders
        ]
    if bundle.chain is not None:
        ch = bundle.chain
        doc["chain"] = {
            "action": ch.action,
            "compensable_exposure": ch.compensable_exposure,
            "outcome": ch.outcome,
            "relation_class": ch.relation_class.value,
            **(
                {"other_exposures": list(ch.other_exposures)}
                if ch.other_exposures
                else {}
            ),
            "interaction_model": ch.interaction_model.value,
        }
    return doc


def serialize_bundle(bundle: EvidenceBundle) -> bytes:
    """Canonical JSON bytes; parse_study_file(serialize_bundle(b)) == b."""
    return json.dumps(
        bundle_to_dict(bundle), sort_keys=True, separators=(",", ":")
    ).encode("utf-8")
