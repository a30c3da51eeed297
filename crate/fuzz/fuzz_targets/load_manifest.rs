#![no_main]

use libfuzzer_sys::fuzz_target;
use lifecycle_dq::ingest::load_manifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = load_manifest(data) {
        let again =
            load_manifest(m.to_json_pretty().as_bytes()).expect("serialized manifest loads");
        assert_eq!(again, m);
    }
});
