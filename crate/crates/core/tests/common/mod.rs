//! Generators and property bodies shared by the property suite and the
//! acceptance harness.

#![allow(dead_code)]

use std::path::PathBuf;

use chrono::{DateTime, Duration as ChronoDuration, NaiveDate, TimeZone, Utc};
use lifecycle_dq::assess::{run_suite, CheckConfig, CheckDefinition, CheckKind, CheckOutcome, SubsetPredicate};
use lifecycle_dq::attribute::{
    attribute_all, compare_loci, load_rules, AttributedResult, AttributionAudit, OutcomeFacts, RuleSet,
};
use lifecycle_dq::ingest::{load_dataset, load_manifest, DatasetSnapshot, EntryMode, Stage};
use lifecycle_dq::notation::{parse_assertion, serialize_assertion, DQAssertion, Measurement, ParseMode};
use lifecycle_dq::rational::Fraction;
use lifecycle_dq::report::{
    build_coverage, load_report, render_report, Attestation, DQReport, ManifestSummary, ReportFormat, ReportInputs,
};
use lifecycle_dq::taxonomy::{enumerate_loci, ActorRegistry, LifecycleLocus, Organization, Parameter};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

pub const CASES: u32 = 128;

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(rel)
}

pub fn read_fixture(rel: &str) -> Vec<u8> {
    std::fs::read(fixture(rel)).unwrap_or_else(|e| panic!("reading {rel}: {e}"))
}

/// A runner with a fixed seed so every run sees the same cases.
pub fn runner(seed: u8) -> TestRunner {
    let config = Config { cases: CASES, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]))
}

// ---- assertions ----

const LABELS: [&str; 11] = [
    "Completeness",
    "Conformance",
    "Plausibility",
    "Accessibility",
    "Governance",
    "Relevance",
    "Timeliness",
    "Interoperability",
    "OperatingPlatform",
    "Policy",
    "Mapping",
];

pub fn locus_strategy() -> impl Strategy<Value = LifecycleLocus> {
    let loci = enumerate_loci(&ActorRegistry::builtin());
    proptest::sample::select(loci)
}

pub fn measurement_strategy() -> impl Strategy<Value = Measurement> {
    let percent = (0u32..=2).prop_flat_map(|p| {
        let scale = 100 * 10i128.pow(p);
        (0..=scale, Just(p), proptest::option::of("[a-z][a-z ]{0,12}[a-z]")).prop_map(move |(n, p, q)| {
            let m = Measurement::percent(Fraction::new(n, scale)).with_precision(p);
            match q {
                Some(q) => m.with_qualifier(q),
                None => m,
            }
        })
    });
    let text = "[A-Za-z][A-Za-z0-9 ,.]{0,30}".prop_map(Measurement::text);
    prop_oneof![3 => percent, 1 => text]
}

pub fn assertion_strategy() -> impl Strategy<Value = DQAssertion> {
    (locus_strategy(), proptest::sample::select(LABELS.to_vec()), measurement_strategy())
        .prop_map(|(locus, label, m)| DQAssertion::new(locus, label, m))
}

/// Percent assertions sharing one label.
pub fn percent_pair_strategy() -> impl Strategy<Value = (DQAssertion, DQAssertion)> {
    let percent = || (0i128..=1000).prop_map(|n| Measurement::percent(Fraction::new(n, 1000)).with_precision(1));
    (proptest::sample::select(LABELS.to_vec()), locus_strategy(), percent(), locus_strategy(), percent()).prop_map(
        |(label, la, ma, lb, mb)| (DQAssertion::new(la, label, ma), DQAssertion::new(lb, label, mb)),
    )
}

pub fn attestation_strategy() -> impl Strategy<Value = Attestation> {
    let attestable: Vec<Parameter> = lifecycle_dq::taxonomy::core_parameters()
        .iter()
        .copied()
        .filter(|p| p.accepts_attestation())
        .collect();
    (locus_strategy(), proptest::sample::select(attestable), 0i64..2_000_000_000).prop_map(|(locus, p, t)| {
        Attestation::new(locus, p, "in force", "steward", Utc.timestamp_opt(t, 0).unwrap()).unwrap()
    })
}

// ---- datasets ----

#[derive(Debug, Clone)]
pub struct Row {
    pub actor: Option<u8>,
    pub code: u8,
    pub reading: u8,
    pub onset_offset: i8,
    pub recorded: u32,
    pub lag: i32,
    pub mapped: bool,
}

fn row_strategy() -> impl Strategy<Value = Row> {
    (
        proptest::option::weighted(0.9, 0u8..4),
        0u8..6,
        0u8..6,
        -3i8..6,
        0u32..1_000_000,
        -3_600i32..200_000,
        proptest::bool::weighted(0.85),
    )
        .prop_map(|(actor, code, reading, onset_offset, recorded, lag, mapped)| Row {
            actor,
            code,
            reading,
            onset_offset,
            recorded,
            lag,
            mapped,
        })
}

pub fn rows_strategy() -> impl Strategy<Value = Vec<Row>> {
    proptest::collection::vec(row_strategy(), 0..60)
}

const SOURCE_MANIFEST: &str = r#"{
  "dataset_id": "prop",
  "stage": "SourceExtract",
  "key_column": "id",
  "actor_id_column": "author",
  "record_timestamp_column": "recorded_at",
  "availability_timestamp_column": "available_at",
  "fields": [
    {"name": "id", "semantic_type": "Text", "entry_mode": "AutoGenerated"},
    {"name": "author", "semantic_type": "Text", "entry_mode": "AutoGenerated"},
    {"name": "flag", "semantic_type": "Category", "entry_mode": "AutoGenerated", "allowed_values": ["N", "Y"]},
    {"name": "code", "semantic_type": "Code", "entry_mode": "FreeEntry", "allowed_values": ["A", "B"],
     "policy_condition": {"field": "flag", "values": ["Y"]}},
    {"name": "reading", "semantic_type": "Number", "entry_mode": "DeviceGenerated", "numeric_range": [0, 2]},
    {"name": "onset", "semantic_type": "Date", "entry_mode": "FreeEntry"},
    {"name": "seen", "semantic_type": "Date", "entry_mode": "AutoGenerated"},
    {"name": "recorded_at", "semantic_type": "Timestamp", "entry_mode": "AutoGenerated"},
    {"name": "available_at", "semantic_type": "Timestamp", "entry_mode": "AutoGenerated"}
  ]
}"#;

const TRANSFORMED_MANIFEST: &str = r#"{
  "dataset_id": "prop",
  "stage": "TransformedExtract",
  "key_column": "id",
  "actor_id_column": "author",
  "fields": [
    {"name": "id", "semantic_type": "Text", "entry_mode": "AutoGenerated"},
    {"name": "author", "semantic_type": "Text", "entry_mode": "AutoGenerated"},
    {"name": "code", "semantic_type": "Code", "entry_mode": "AutoGenerated", "allowed_values": ["X", "Y"]}
  ]
}"#;

const CODES: [&str; 6] = ["A", "B", "", "NA", "C", "A"];
const READINGS: [&str; 6] = ["0", "1.5", "2", "", "7", "x"];

fn base_time() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
}

fn ts(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%S").to_string()
}

/// Source and transformed snapshots built from generated rows.
pub fn snapshots(rows: &[Row]) -> [DatasetSnapshot; 2] {
    let mut src = String::from("id,author,flag,code,reading,onset,seen,recorded_at,available_at\n");
    let mut dst = String::from("id,author,code\n");
    let seen0 = NaiveDate::from_ymd_opt(2024, 3, 1).unwrap();
    for (i, r) in rows.iter().enumerate() {
        let author = r.actor.map(|a| format!("clin_{a}")).unwrap_or_default();
        let code = CODES[r.code as usize];
        let seen = seen0 + ChronoDuration::days(i as i64 % 20);
        let onset = seen - ChronoDuration::days(r.onset_offset as i64);
        let recorded = base_time() + ChronoDuration::seconds(r.recorded as i64);
        let available = recorded + ChronoDuration::seconds(r.lag as i64);
        src.push_str(&format!(
            "r{i},{author},{},{code},{},{onset},{seen},{},{}\n",
            if i % 3 == 0 { "N" } else { "Y" },
            READINGS[r.reading as usize],
            ts(recorded),
            ts(available),
        ));
        let mapped = match code {
            "A" if r.mapped => "X",
            "B" if r.mapped => "Y",
            _ => "",
        };
        dst.push_str(&format!("r{i},{author},{mapped}\n"));
    }
    let sm = load_manifest(SOURCE_MANIFEST.as_bytes()).unwrap();
    let tm = load_manifest(TRANSFORMED_MANIFEST.as_bytes()).unwrap();
    [load_dataset(src.as_bytes(), &sm).unwrap(), load_dataset(dst.as_bytes(), &tm).unwrap()]
}

/// One stratified definition of every check kind.
pub fn stratified_suite() -> Vec<CheckDefinition> {
    use CheckKind::*;
    let src = Stage::SourceExtract;
    let lag = CheckConfig { max_lag: Some(std::time::Duration::from_secs(86_400)), ..CheckConfig::default() };
    let degeneracy = CheckConfig { min_records: Some(3), max_dominant_share: Some(0.9), ..CheckConfig::default() };
    vec![
        CheckDefinition::new("completeness", Completeness, &["code"]).on_stage(src).stratified(),
        CheckDefinition::new("completeness-required", Completeness, &["code"])
            .on_stage(src)
            .stratified()
            .with_subset(SubsetPredicate::WhereRequired),
        CheckDefinition::new("value", ConformanceValue, &["code"]).on_stage(src).stratified(),
        CheckDefinition::new("format", ConformanceFormat, &["reading"]).on_stage(src).stratified(),
        CheckDefinition::new("range", PlausibilityRange, &["reading"]).on_stage(src).stratified(),
        CheckDefinition::new("temporal", PlausibilityTemporal, &["onset", "seen"]).on_stage(src).stratified(),
        CheckDefinition::new("timeliness", Timeliness, &["recorded_at", "available_at"])
            .on_stage(src)
            .stratified()
            .with_config(lag),
        CheckDefinition::new("degeneracy", DegeneracyByActor, &["code"]).on_stage(src).with_config(degeneracy),
        CheckDefinition::new("mapping", MappingSuccess, &["code", "code"]).stratified(),
    ]
}

// ---- property bodies ----

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

fn finish<E: std::fmt::Display>(r: Result<(), E>) -> Result<(), String> {
    r.map_err(|e| e.to_string())
}

pub fn prop_notation_round_trip(runner: &mut TestRunner) -> Result<(), String> {
    let registry = ActorRegistry::builtin();
    finish(runner.run(&assertion_strategy(), |a| {
        let text = serialize_assertion(&a);
        let parsed = parse_assertion(&text, &registry, ParseMode::Strict)
            .map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        ensure(serialize_assertion(&parsed) == text, || format!("re-serialized differently: {text}"))?;
        ensure(parsed.without_source() == a, || format!("structure changed: {text}"))
    }))
}

fn stratum_sum_matches(o: &CheckOutcome) -> Result<(), TestCaseError> {
    let Some(strata) = &o.strata else {
        return Err(TestCaseError::fail(format!("{} has no strata", o.check_id)));
    };
    let rest = o.unattributed_stratum.as_ref();
    let num: u64 = strata.values().map(|s| s.numerator).sum::<u64>() + rest.map_or(0, |s| s.numerator);
    let den: u64 = strata.values().map(|s| s.denominator).sum::<u64>() + rest.map_or(0, |s| s.denominator);
    ensure(num == o.numerator && den == o.denominator, || {
        format!("{}: strata {num}/{den} vs overall {}/{}", o.check_id, o.numerator, o.denominator)
    })
}

pub fn prop_strata_sum(runner: &mut TestRunner) -> Result<(), String> {
    let suite = stratified_suite();
    finish(runner.run(&rows_strategy(), |rows| {
        let snaps = snapshots(&rows);
        for o in run_suite(&suite, &snaps) {
            ensure(!o.is_errored(), || format!("{} errored: {:?}", o.check_id, o.status))?;
            stratum_sum_matches(&o)?;
        }
        Ok(())
    }))
}

fn summary(o: &CheckOutcome) -> (Option<Fraction>, u64, u64, String) {
    let strata = serde_json::to_string(&o.strata).unwrap();
    (o.rate(), o.numerator, o.denominator, strata)
}

pub fn prop_shuffle_invariance(runner: &mut TestRunner) -> Result<(), String> {
    let suite = stratified_suite();
    let strategy = rows_strategy().prop_flat_map(|rows| {
        let n = rows.len();
        let order: Vec<usize> = (0..n).collect();
        (Just(rows), Just(order.clone()).prop_shuffle(), Just(order).prop_shuffle())
    });
    finish(runner.run(&strategy, |(rows, src_order, dst_order)| {
        let [s, t] = snapshots(&rows);
        let shuffled = [s.permuted(&src_order), t.permuted(&dst_order)];
        let before = run_suite(&suite, &[s, t]);
        let after = run_suite(&suite, &shuffled);
        for (a, b) in before.iter().zip(&after) {
            ensure(summary(a) == summary(b), || format!("{} changed under shuffle", a.check_id))?;
            ensure(a.lag_summary == b.lag_summary && a.policy == b.policy, || {
                format!("{} context changed under shuffle", a.check_id)
            })?;
        }
        Ok(())
    }))
}

pub fn prop_coverage_conservation(runner: &mut TestRunner) -> Result<(), String> {
    let unresolved = (locus_strategy(), measurement_strategy())
        .prop_map(|(l, m)| DQAssertion::new(l, "Bespoke", m));
    let strategy = (
        proptest::collection::vec(assertion_strategy(), 0..30),
        proptest::collection::vec(unresolved, 0..5),
        proptest::collection::vec(attestation_strategy(), 0..10),
    );
    finish(runner.run(&strategy, |(mut assertions, extra, attestations)| {
        let excluded = extra.len() as u64;
        let included = (assertions.len() + attestations.len()) as u64;
        assertions.extend(extra);
        let m = build_coverage(&assertions, &attestations);
        ensure(m.total() == included, || format!("total {} != {included}", m.total()))?;
        ensure(m.excluded() == excluded, || format!("excluded {} != {excluded}", m.excluded()))?;
        let by_category: u64 = m.rows().iter().flat_map(|r| r.categories).sum();
        let by_parameter: u64 = m.rows().iter().flat_map(|r| r.parameters).sum();
        ensure(by_category == included && by_parameter == included, || "cell sums disagree".into())
    }))
}

pub fn sample_report(
    assertions: Vec<DQAssertion>,
    attestations: Vec<Attestation>,
    rows: &[Row],
    seconds: i64,
) -> DQReport {
    let snaps = snapshots(rows);
    let outcomes = run_suite(&stratified_suite(), &snaps);
    let rules = RuleSet::defaults();
    let attributions = attribute_all(&outcomes, &rules);
    let audit = AttributionAudit::of(&attributions, &rules);
    let inputs = ReportInputs {
        dataset_id: "prop".into(),
        context_label: Some("property".into()),
        manifests: snaps.iter().map(|s| ManifestSummary::of(s.manifest(), Some(s.row_count()))).collect(),
        assertions,
        attestations,
        outcomes,
        attributions,
        audit: Some(audit),
        created_at: Utc.timestamp_opt(seconds, 0).unwrap(),
    };
    DQReport::assemble(inputs, &ActorRegistry::builtin(), &Default::default()).expect("valid report")
}

pub fn prop_report_round_trip(runner: &mut TestRunner) -> Result<(), String> {
    let strategy = (
        proptest::collection::vec(assertion_strategy(), 0..8),
        proptest::collection::vec(attestation_strategy(), 0..4),
        proptest::collection::vec(row_strategy(), 0..25),
        0i64..2_000_000_000,
    );
    finish(runner.run(&strategy, |(assertions, attestations, rows, seconds)| {
        let report = sample_report(assertions, attestations, &rows, seconds);
        let json = render_report(&report, ReportFormat::MachineJson);
        let back = load_report(json.as_bytes()).map_err(|e| TestCaseError::fail(e.to_string()))?;
        ensure(back == report, || "report changed through JSON".into())?;
        ensure(render_report(&back, ReportFormat::MachineJson) == json, || "JSON not stable".into())
    }))
}

pub fn prop_compare_antisymmetric(runner: &mut TestRunner) -> Result<(), String> {
    finish(runner.run(&percent_pair_strategy(), |(a, b)| {
        let ab = compare_loci(&a, &b).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let ba = compare_loci(&b, &a).map_err(|e| TestCaseError::fail(e.to_string()))?;
        ensure(ab.delta_pp == -ba.delta_pp, || format!("{} vs {}", ab.delta_pp, ba.delta_pp))?;
        ensure(ab.relation == ba.relation && ab.narrative == ba.narrative, || "relation differs".into())
    }))
}

fn facts_strategy(stage: Option<Stage>) -> impl Strategy<Value = OutcomeFacts> {
    use CheckKind::*;
    let kinds = vec![
        Completeness,
        ConformanceValue,
        ConformanceFormat,
        PlausibilityRange,
        PlausibilityTemporal,
        DegeneracyByActor,
        Timeliness,
        MappingSuccess,
    ];
    let modes = vec![EntryMode::EhrEnforced, EntryMode::FreeEntry, EntryMode::AutoGenerated, EntryMode::DeviceGenerated];
    let stages = match stage {
        Some(s) => vec![s],
        None => vec![Stage::SourceExtract, Stage::TransformedExtract],
    };
    (
        proptest::sample::select(kinds),
        proptest::option::of(proptest::sample::select(modes)),
        proptest::sample::select(stages),
        any::<bool>(),
        any::<bool>(),
    )
        .prop_map(|(kind, entry_mode, stage, policy_explained, loss_vs_source)| OutcomeFacts {
            kind,
            entry_mode,
            stage: Some(stage),
            policy_explained,
            loss_vs_source,
        })
}

pub fn prop_source_never_dro(runner: &mut TestRunner) -> Result<(), String> {
    let rules = RuleSet::defaults();
    finish(runner.run(&(facts_strategy(Some(Stage::SourceExtract)), rows_strategy()), |(facts, rows)| {
        if let Some(rule) = rules.first_match(&facts) {
            let target = rule.target_for(facts.entry_mode);
            ensure(target.organization() == Organization::Dgo, || format!("{facts:?} -> {target}"))?;
        }
        let [src, _] = snapshots(&rows);
        let outcomes: Vec<CheckOutcome> = run_suite(&stratified_suite(), &[src])
            .into_iter()
            .filter(|o| o.stage == Some(Stage::SourceExtract))
            .collect();
        for r in attribute_all(&outcomes, &rules) {
            if let Some(l) = r.locus() {
                ensure(l.organization() == Organization::Dgo, || format!("{} -> {l}", r.check_id))?;
            }
        }
        Ok(())
    }))
}

fn rule_documents() -> impl Strategy<Value = (Vec<serde_json::Value>, Vec<serde_json::Value>)> {
    let defaults: Vec<serde_json::Value> =
        RuleSet::defaults().rules().iter().map(|r| serde_json::to_value(r).unwrap()).collect();
    proptest::collection::btree_set(41i64..200, 0..4)
        .prop_flat_map(|priorities| {
            let len = priorities.len();
            (
                Just(priorities),
                proptest::collection::vec(locus_strategy(), len),
                proptest::collection::vec(facts_strategy(None), len),
            )
        })
        .prop_flat_map(move |(priorities, targets, facts)| {
            let mut rules = defaults.clone();
            for ((p, target), f) in priorities.into_iter().zip(targets).zip(facts) {
                rules.push(serde_json::json!({
                    "id": format!("extra-{p}"),
                    "priority": p,
                    "match": {"check_kinds": [f.kind], "stages": [f.stage.unwrap()]},
                    "target": target.to_string(),
                }));
            }
            (Just(rules.clone()), Just(rules).prop_shuffle())
        })
}

pub fn prop_rule_order_invariance(runner: &mut TestRunner) -> Result<(), String> {
    let registry = ActorRegistry::builtin();
    let strategy = (rule_documents(), proptest::collection::vec(facts_strategy(None), 1..20));
    finish(runner.run(&strategy, |((ordered, shuffled), facts)| {
        let load = |rules: &Vec<serde_json::Value>| {
            let doc = serde_json::json!({"replace_defaults": true, "rules": rules});
            load_rules(doc.to_string().as_bytes(), &registry).map_err(|e| TestCaseError::fail(e.to_string()))
        };
        let (a, b) = (load(&ordered)?, load(&shuffled)?);
        ensure(a.fingerprint() == b.fingerprint(), || "fingerprint depends on file order".into())?;
        for f in &facts {
            let pick = |s: &RuleSet| s.first_match(f).map(|r| (r.id.clone(), r.target_for(f.entry_mode).clone()));
            ensure(pick(&a) == pick(&b), || format!("{f:?} fired differently"))?;
        }
        Ok(())
    }))
}

pub fn located(results: &[AttributedResult]) -> Vec<String> {
    results.iter().filter_map(|r| r.locus().map(ToString::to_string)).collect()
}
