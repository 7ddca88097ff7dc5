"""Report assembly, rendering, and the CLI contract, pinned against a
golden corpus under tests/data/golden/."""

import hashlib
import json

import pytest

from causalcheck import (
    ChecklistConfig,
    ConfigError,
    Design,
    EngineConfig,
    EvidenceBundle,
    LegalConfig,
    PDE_ACCELERATION_WARNING,
    SCHEMA_VERSION,
    ValidationError,
    WARN_BARE_STATISTICS,
    WARN_SINGLE_STUDY,
    WARN_SMALL_EXPECTED,
    WARN_ZERO_CELL,
    parse_config,
    parse_truth_file,
    parse_study_file,
    render_report,
    simulate_cohort,
)
from causalcheck.report import (
    build_dose_report,
    build_measure_report,
    canonical_json,
    config_to_dict,
    digest_args,
    inputs_digest,
)

from conftest import single_study
from goldens import CASES, GOLDEN_DIR, TESTS_DIR, run_case

DATA = TESTS_DIR / "data"


def golden_bytes(name):
    return (GOLDEN_DIR / name).read_bytes()


def golden_doc(name):
    return json.loads(golden_bytes(name))


class TestParseConfig:
    def test_absent_file_is_defaults(self):
        assert parse_config(None) == EngineConfig()

    def test_defaults_echo_eleven_keys(self):
        doc = config_to_dict(EngineConfig())
        assert sorted(doc) == [
            "alpha",
            "confidence_level",
            "evidentiary_gap",
            "heterogeneity_alpha",
            "material_fraction_floor",
            "mc_threshold",
            "rr_threshold",
            "strength_threshold",
            "strict",
            "strict_lcl",
            "use_lcl",
        ]

    def test_all_keys_round_trip(self):
        doc = {
            "confidence_level": 0.9,
            "alpha": 0.01,
            "heterogeneity_alpha": 0.2,
            "strength_threshold": 3.0,
            "strict_lcl": True,
            "strict": True,
            "rr_threshold": 1.5,
            "use_lcl": True,
            "material_fraction_floor": 0.05,
            "evidentiary_gap": True,
            "mc_threshold": 2.5,
        }
        cfg = parse_config(json.dumps(doc).encode())
        assert config_to_dict(cfg) == doc

    def test_alpha_is_shared(self):
        cfg = parse_config(b'{"alpha": 0.01}')
        assert cfg.checklist.alpha == 0.01
        assert cfg.legal.alpha == 0.01

    def test_partial_file_keeps_other_defaults(self):
        cfg = parse_config(b'{"strict": true}')
        assert cfg.checklist.strict is True
        assert cfg.checklist == ChecklistConfig(strict=True)
        assert cfg.legal == LegalConfig()
        assert cfg.mc_threshold == 2.0

    def test_rejections(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            parse_config(b'{"alfa": 0.05}')
        with pytest.raises(ConfigError, match="number"):
            parse_config(b'{"alpha": "low"}')
        with pytest.raises(ConfigError, match="number"):
            parse_config(b'{"alpha": true}')
        with pytest.raises(ConfigError, match="true or false"):
            parse_config(b'{"strict": 1}')
        with pytest.raises(ConfigError, match="JSON"):
            parse_config(b"{broken")
        with pytest.raises(ConfigError, match="object"):
            parse_config(b"[]")
        with pytest.raises(ConfigError):  # out-of-range via dataclass check
            parse_config(b'{"alpha": 2.0}')


class TestCanonicalJson:
    def test_sorted_compact_newline(self):
        doc = {"b": [1.5, {"z": None, "a": True}], "a": "x"}
        out = canonical_json(doc)
        assert out == b'{"a":"x","b":[1.5,{"a":true,"z":null}]}\n'
        assert json.loads(out) == doc

    def test_digest_args_is_content_addressed(self):
        assert digest_args({"x": 1, "y": 2}) == digest_args({"y": 2, "x": 1})
        assert digest_args({"x": 1}) != digest_args({"x": 2})


class TestEnvelope:
    def test_measure_envelope_shape(self):
        raw = (DATA / "headline_study.json").read_bytes()
        doc = build_measure_report(
            parse_study_file(raw), EngineConfig(), raw
        )
        assert set(doc) == {
            "schema_version",
            "command",
            "inputs_digest",
            "config",
            "warnings",
            "studies",
        }
        assert doc["schema_version"] == SCHEMA_VERSION
        assert doc["command"] == "measure"
        assert doc["inputs_digest"] == hashlib.sha256(raw).hexdigest()
        assert doc["inputs_digest"] == inputs_digest(raw)
        assert doc["warnings"] == sorted(set(doc["warnings"]))

    def test_case_control_entry_has_no_risk_measures(self):
        bundle = EvidenceBundle(
            studies=(single_study(20, 80, 10, 90, Design.CASE_CONTROL),)
        )
        doc = build_measure_report(bundle, EngineConfig(), b"{}")
        entry = doc["studies"][0]
        assert entry["estimate"]["kind"] == "OR"
        assert "odds_ratio" not in entry
        assert "excess_risk" not in entry
        assert "pde" not in entry
        assert PDE_ACCELERATION_WARNING not in doc["warnings"]

    def test_dose_report_requires_series(self):
        raw = (DATA / "headline_study.json").read_bytes()
        with pytest.raises(ValidationError, match="dose series"):
            build_dose_report(parse_study_file(raw), EngineConfig(), raw)


@pytest.mark.parametrize("name", sorted(CASES))
def test_golden(name):
    proc = run_case(CASES[name])
    assert proc.returncode == 0, proc.stderr.decode()
    assert proc.stdout == golden_bytes(name)
    assert proc.stderr == b""


@pytest.mark.parametrize(
    "name", ["measure_headline.json", "sensitivity.json", "simulate_random.json"]
)
def test_repeat_runs_are_byte_identical(name):
    assert run_case(CASES[name]).stdout == run_case(CASES[name]).stdout


def test_sensitivity_worker_count_does_not_change_bytes():
    argv = CASES["sensitivity.json"] + ["--workers", "4"]
    assert run_case(argv).stdout == golden_bytes("sensitivity.json")


def test_json_goldens_are_canonical_fixed_points():
    for name in CASES:
        if not name.endswith(".json"):
            continue
        raw = golden_bytes(name)
        assert canonical_json(json.loads(raw)) == raw, name


class TestGoldenContents:
    def test_measure_headline(self):
        doc = golden_doc("measure_headline.json")
        entry = doc["studies"][0]
        assert entry["method"] == "Crude"
        assert entry["estimate"]["point"] == 5.0
        assert entry["pde"] == pytest.approx(0.8)
        assert round(entry["estimate"]["lcl"], 2) == 1.92
        assert round(entry["estimate"]["ucl"], 1) == 13.0
        assert entry["association"]["method"] == "ChiSquare"
        assert PDE_ACCELERATION_WARNING in doc["warnings"]

    def test_measure_zero_cell(self):
        doc = golden_doc("measure_zero_cell.json")
        assert doc["studies"][0]["estimate"]["corrected"] is True
        assert WARN_ZERO_CELL in doc["warnings"]

    def test_measure_small_counts(self):
        doc = golden_doc("measure_small_counts.json")
        assoc = doc["studies"][0]["association"]
        assert assoc["method"] == "FisherExact"
        assert assoc["p_value"] == pytest.approx(34 / 70)
        assert assoc["statistic"] is None
        assert WARN_SMALL_EXPECTED in doc["warnings"]

    def test_measure_stratified(self):
        doc = golden_doc("measure_stratified.json")
        entry = doc["studies"][0]
        assert entry["method"] == "MantelHaenszel"
        assert entry["estimate"]["point"] == pytest.approx(
            1.2615384615384615, rel=1e-12
        )
        assert entry["simpson"]["reversal"] is True
        assert entry["simpson"]["crude"]["point"] < 1.0
        assert all(
            e["point"] > 1.0 for e in entry["simpson"]["per_stratum"]
        )

    def test_meta(self):
        doc = golden_doc("meta_full.json")
        assert doc["meta"]["q_df"] == 1
        assert doc["meta"]["q_p"] > 0.1
        assert doc["meta"]["pooled_fixed"]["point"] == pytest.approx(
            5.7627865943164815, rel=1e-12
        )
        assert doc["consistency"]["status"] == "Pass"
        assert [s["id"] for s in doc["studies"]] == [
            "city-cohort",
            "plant-cohort",
        ]

    def test_dose(self):
        doc = golden_doc("dose_full.json")
        series = doc["dose_series"][0]
        assert series["id"] == "cumulative-exposure"
        assert series["units"] == "pack-years"
        assert series["trend"]["trend_p"] < 0.001
        assert series["trend"]["monotone_nondecreasing"] is True
        assert series["fit"]["z"] > 1.0

    def test_checklist_full(self):
        doc = golden_doc("checklist_full.json")
        assert doc["checklist"]["overall"] == "CausationSupported"
        assert doc["checklist"]["narrative"] == "All ten tests pass."
        statuses = {
            o["test"]: o["status"] for o in doc["checklist"]["outcomes"]
        }
        assert statuses == {i: "Pass" for i in range(1, 11)}
        assert doc["primary_analysis"]["method"] == "MetaFixedWald"

    def test_checklist_strict_config_echo(self):
        doc = golden_doc("checklist_strict.json")
        cfg = doc["config"]
        assert cfg["strict"] is True
        assert cfg["alpha"] == 0.01
        assert cfg["use_lcl"] is True
        assert cfg["mc_threshold"] == 1.5
        assert cfg["rr_threshold"] == 2.0
        assert doc["checklist"]["overall"] == "CausationSupported"

    def test_legal_but_for_route(self):
        doc = golden_doc("legal_r1.json")
        leg = doc["legal"]
        assert leg["chain"]["relation_class"] == "R1"
        assert leg["general"]["verdict"] == "Established"
        assert leg["specific"]["route"] == "ButFor"
        assert leg["specific"]["verdict"] == "Satisfied"
        assert "strict inequality; equality fails" in leg["specific"]["rule"]
        assert "foreseeability" in leg["scope_note"]

    def test_legal_material_route(self):
        doc = golden_doc("legal_r2.json")
        leg = doc["legal"]
        assert leg["chain"]["relation_class"] == "R2"
        assert leg["chain"]["other_exposures"] == ["smoking"]
        assert leg["specific"]["route"] == "MaterialContribution"
        assert leg["specific"]["verdict"] == "Material"
        assert leg["specific"]["fraction"] == pytest.approx(0.8)

    def test_apportion(self):
        paper = golden_doc("apportion_paper.json")
        assert paper["apportionment"]["units"] == {
            "a": 5.0,
            "s": 10.0,
            "interaction": 50.0,
        }
        assert paper["apportionment"]["total_units"] == 65.0
        assert paper["apportionment"]["involved_fraction"]["a"] == (
            pytest.approx(55 / 65, rel=1e-15)
        )
        synergy = golden_doc("apportion_synergy.json")
        assert synergy["apportionment"]["units"]["interaction"] == 35.0
        assert synergy["apportionment"]["scheme"] == "SynergyPartition"
        assert paper["inputs_digest"] != synergy["inputs_digest"]

    def test_taxi(self):
        equal = golden_doc("taxi_equal.json")
        assert equal["taxi"]["posterior"] == {"blue": 0.75, "yellow": 0.25}
        assert equal["taxi"]["balance_verdict"] == "blue"
        assert equal["taxi"]["assumptions"] == {
            "equal_negligence_rates": True,
            "equal_exposure_rates": True,
        }
        assert WARN_BARE_STATISTICS in equal["warnings"]
        rates = golden_doc("taxi_rates.json")
        assert rates["taxi"]["balance_verdict"] == "yellow"
        assert rates["taxi"]["bare_statistics"] is False
        assert rates["warnings"] == []

    def test_sensitivity(self):
        doc = golden_doc("sensitivity.json")
        sens = doc["sensitivity"]
        assert sens["draws"] == 400
        assert sens["seed"] == 5
        assert sens["rr_observed"] == 5.0
        assert sorted(sens["quantiles"]) == ["2.5", "25", "50", "75", "97.5"]
        assert doc["ranges"]["rr_confounder"] == [1.0, 4.0]
        assert 0.0 <= sens["fraction_above_threshold"] <= 1.0

    def test_simulate_expected(self):
        doc = golden_doc("simulate_expected.json")
        sim = doc["simulated"]
        assert sim["mode"] == "expected"
        assert sim["crude"] == {"a": 15, "b": 985, "c": 12, "d": 988}
        assert sim["truth"]["confounder"]["rr_confounder"] == 2.0
        profiles = [
            s["profile"]
            for s in sim["study_file"]["studies"][0]["strata"]
        ]
        assert {"confounder": "present"} in profiles
        assert {"confounder": "absent"} in profiles

    def test_simulate_random_matches_library(self):
        doc = golden_doc("simulate_random.json")
        truth = parse_truth_file(
            (DATA / "truth_cohort.json").read_bytes()
        )
        t = simulate_cohort(truth, replicate=2)
        assert doc["simulated"]["crude"] == {
            "a": t.a,
            "b": t.b,
            "c": t.c,
            "d": t.d,
        }
        bundle = parse_study_file(
            canonical_json(doc["simulated"]["study_file"])
        )
        assert bundle.studies[0].strata[0].table == t


class TestWarningCoverage:
    def test_every_warning_constant_appears_in_some_golden(self):
        corpus = b"\n".join(
            golden_bytes(name) for name in CASES
        ).decode("utf-8")
        for constant in (
            WARN_ZERO_CELL,
            WARN_SMALL_EXPECTED,
            PDE_ACCELERATION_WARNING,
            WARN_SINGLE_STUDY,
            WARN_BARE_STATISTICS,
        ):
            assert constant in corpus, constant[:40]


class TestHumanRendering:
    def test_title_lines(self):
        assert golden_bytes("measure_headline.txt").startswith(
            b"measure report (cl-report/1)\n"
        )
        assert golden_bytes("taxi_equal.txt").startswith(
            b"taxi report (cl-report/1)\n"
        )

    def test_discounted_rationale_appears_verbatim(self):
        text = golden_bytes("checklist_zero.txt").decode()
        assert (
            "Discounted - zero cell present: 0.5 will be added to all four"
            in text
        )

    def test_single_study_warning_appears_verbatim(self):
        assert WARN_SINGLE_STUDY in golden_bytes(
            "checklist_single.txt"
        ).decode()

    def test_thresholds_quoted_next_to_verdicts(self):
        text = golden_bytes("legal_r1.txt").decode()
        assert "> threshold 2.0" in text
        assert "meets the strength threshold 2.0" in text

    def test_empty_containers_render_as_none(self):
        assert b"metrics: (none)" in golden_bytes("checklist_zero.txt")
        assert b"other_exposures: (none)" in golden_bytes("legal_r1.txt")

    def test_multiline_values_use_block_form(self):
        text = golden_bytes("checklist_zero.txt").decode()
        assert "narrative: |" in text

    def test_render_report_api(self):
        doc = {
            "schema_version": SCHEMA_VERSION,
            "command": "demo",
            "flag": True,
            "nothing": None,
            "rate": 0.1,
            "text": "line1\nline2",
            "empty": [],
        }
        out = render_report(doc, "human").decode()
        assert out.startswith("demo report (cl-report/1)\n")
        assert "flag: true" in out
        assert "nothing: null" in out
        assert "rate: 0.1" in out
        assert "text: |" in out
        assert "  line1" in out
        assert "empty: (none)" in out
        with pytest.raises(ValidationError):
            render_report(doc, "yaml")


class TestExitCodes:
    def test_missing_file(self):
        proc = run_case(["measure", "data/no_such_file.json"])
        assert proc.returncode == 1
        assert proc.stderr.decode().startswith("error:")

    def test_wrong_schema_for_command(self):
        proc = run_case(["measure", "data/taxi_equal.json"])
        assert proc.returncode == 1
        assert "error:" in proc.stderr.decode()

    def test_meta_needs_two_studies(self):
        proc = run_case(["meta", "data/headline_study.json"])
        assert proc.returncode == 1
        assert "2 studies" in proc.stderr.decode()

    def test_legal_needs_chain(self):
        proc = run_case(["legal", "data/headline_study.json"])
        assert proc.returncode == 1
        assert "chain" in proc.stderr.decode()

    def test_dose_needs_series(self):
        proc = run_case(["dose", "data/headline_study.json"])
        assert proc.returncode == 1
        assert "dose series" in proc.stderr.decode()

    def test_bad_config_key(self):
        proc = run_case(
            ["measure", "data/headline_study.json", "--config", "data/headline_study.json"]
        )
        assert proc.returncode == 1
        assert "unknown config key" in proc.stderr.decode()

    def test_missing_config_file(self):
        proc = run_case(
            ["measure", "data/headline_study.json", "--config", "data/nope.json"]
        )
        assert proc.returncode == 1

    def test_usage_errors(self):
        assert run_case(["frobnicate"]).returncode == 2
        assert run_case([]).returncode == 2
        assert run_case(
            ["measure", "data/headline_study.json", "--format", "xml"]
        ).returncode == 2
        assert run_case(
            ["sensitivity", "data/headline_study.json", "--rr-range", "bad"]
        ).returncode == 2
        assert run_case(["apportion", "--rr-a", "2"]).returncode == 2

    def test_help_exits_zero(self):
        proc = run_case(["--help"])
        assert proc.returncode == 0
        assert b"measure" in proc.stdout


class TestSimulateFlags:
    def test_seed_override_changes_output(self):
        base = run_case(CASES["simulate_random.json"]).stdout
        reseeded = run_case(
            CASES["simulate_random.json"] + ["--seed", "99"]
        ).stdout
        assert base != reseeded
        assert json.loads(reseeded)["simulated"]["truth"]["seed"] == 99

    def test_replicate_changes_output(self):
        alt = run_case(
            [
                "simulate", "--truth", "data/truth_cohort.json",
                "--replicate", "3", "--format", "json",
            ]
        ).stdout
        assert alt != golden_bytes("simulate_random.json")
        assert json.loads(alt)["simulated"]["replicate"] == 3

    def test_human_format_taxi_no_warnings(self):
        out = run_case(["taxi", "--spec", "data/taxi_rates.json"]).stdout
        assert b"warnings: (none)" in out
