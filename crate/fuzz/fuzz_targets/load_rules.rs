#![no_main]

use libfuzzer_sys::fuzz_target;
use lifecycle_dq::attribute::load_rules;
use lifecycle_dq::taxonomy::ActorRegistry;

fuzz_target!(|data: &[u8]| {
    if let Ok(rules) = load_rules(data, &ActorRegistry::builtin()) {
        let _ = rules.fingerprint();
    }
});
