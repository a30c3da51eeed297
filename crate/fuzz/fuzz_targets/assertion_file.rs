#![no_main]

use libfuzzer_sys::fuzz_target;
use lifecycle_dq::notation::{parse_assertion_file, LabelMap, ParseMode};
use lifecycle_dq::taxonomy::ActorRegistry;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = parse_assertion_file(
            text,
            &ActorRegistry::builtin(),
            &LabelMap::default(),
            ParseMode::Lenient,
        );
    }
});
