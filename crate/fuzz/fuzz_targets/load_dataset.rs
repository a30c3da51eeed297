#![no_main]

use libfuzzer_sys::fuzz_target;
use lifecycle_dq::ingest::{load_dataset, load_manifest};

const MANIFEST: &str = r#"{
  "dataset_id": "fuzz",
  "stage": "SourceExtract",
  "key_column": "id",
  "actor_id_column": "author",
  "fields": [
    {"name": "id", "semantic_type": "Text", "entry_mode": "AutoGenerated"},
    {"name": "author", "semantic_type": "Text", "entry_mode": "AutoGenerated"},
    {"name": "code", "semantic_type": "Code", "entry_mode": "FreeEntry", "allowed_values": ["A", "B"]},
    {"name": "reading", "semantic_type": "Number", "entry_mode": "DeviceGenerated"},
    {"name": "seen", "semantic_type": "Date", "entry_mode": "AutoGenerated"},
    {"name": "at", "semantic_type": "Timestamp", "entry_mode": "AutoGenerated"}
  ]
}"#;

fuzz_target!(|data: &[u8]| {
    let manifest = load_manifest(MANIFEST.as_bytes()).expect("fixed manifest");
    if let Ok(snapshot) = load_dataset(data, &manifest) {
        let again =
            load_dataset(snapshot.to_csv().as_bytes(), &manifest).expect("written CSV loads");
        assert_eq!(again.row_count(), snapshot.row_count());
    }
});
