//! Replays the checked-in fuzz seeds through the same entry points and
//! invariants as the fuzz targets, so they run on a stable toolchain.

use std::fs;
use std::path::PathBuf;

use lifecycle_dq::assess::load_suite;
use lifecycle_dq::attribute::load_rules;
use lifecycle_dq::ingest::{load_dataset, load_manifest};
use lifecycle_dq::notation::{parse_assertion_bytes, parse_assertion_file, serialize_assertion, LabelMap, ParseMode};
use lifecycle_dq::report::{load_attestations, load_report, render_report, ReportFormat};
use lifecycle_dq::simulate::load_scenario;
use lifecycle_dq::taxonomy::ActorRegistry;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn assertion_seeds() {
    let registry = ActorRegistry::builtin();
    let mut parsed = 0;
    for (_, data) in seeds("parse_assertion") {
        for mode in [ParseMode::Strict, ParseMode::Lenient] {
            if let Ok(a) = parse_assertion_bytes(&data, &registry, mode) {
                let text = serialize_assertion(&a);
                let again = parse_assertion_bytes(text.as_bytes(), &registry, ParseMode::Strict).unwrap();
                assert_eq!(serialize_assertion(&again), text);
                parsed += 1;
            }
        }
    }
    assert!(parsed > 0);
    for (_, data) in seeds("assertion_file") {
        let text = String::from_utf8(data).unwrap();
        assert!(!parse_assertion_file(&text, &registry, &LabelMap::default(), ParseMode::Lenient).is_empty());
    }
}

#[test]
fn manifest_and_dataset_seeds() {
    for (name, data) in seeds("load_manifest") {
        let m = load_manifest(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(load_manifest(m.to_json_pretty().as_bytes()).unwrap(), m);
    }
    let manifest_text = include_str!("../../../fuzz/fuzz_targets/load_dataset.rs");
    let start = manifest_text.find("r#\"").unwrap() + 3;
    let end = manifest_text.find("\"#").unwrap();
    let manifest = load_manifest(manifest_text[start..end].as_bytes()).unwrap();
    let loaded: Vec<_> = seeds("load_dataset")
        .into_iter()
        .filter_map(|(_, data)| load_dataset(&data, &manifest).ok())
        .collect();
    assert!(!loaded.is_empty());
    for s in loaded {
        assert_eq!(load_dataset(s.to_csv().as_bytes(), &manifest).unwrap().row_count(), s.row_count());
    }
}

#[test]
fn document_seeds_load() {
    let registry = ActorRegistry::builtin();
    for (name, data) in seeds("load_rules") {
        load_rules(&data, &registry).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, data) in seeds("load_suite") {
        load_suite(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, data) in seeds("load_scenario") {
        let s = load_scenario(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
        s.validate(&registry).unwrap();
    }
    for (name, data) in seeds("load_attestations") {
        load_attestations(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    for (name, data) in seeds("actor_config") {
        let ok = ActorRegistry::from_config_json(&data).is_ok() || LabelMap::from_json(&data).is_ok();
        assert!(ok, "{name}");
    }
    for (name, data) in seeds("load_report") {
        let report = load_report(&data).unwrap_or_else(|e| panic!("{name}: {e}"));
        let json = render_report(&report, ReportFormat::MachineJson);
        assert_eq!(load_report(json.as_bytes()).unwrap(), report);
    }
}
