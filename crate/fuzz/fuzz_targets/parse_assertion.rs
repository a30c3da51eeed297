#![no_main]

use libfuzzer_sys::fuzz_target;
use lifecycle_dq::notation::{parse_assertion_bytes, serialize_assertion, ParseMode};
use lifecycle_dq::taxonomy::ActorRegistry;

fuzz_target!(|data: &[u8]| {
    let registry = ActorRegistry::builtin();
    for mode in [ParseMode::Strict, ParseMode::Lenient] {
        if let Ok(a) = parse_assertion_bytes(data, &registry, mode) {
            let text = serialize_assertion(&a);
            let again = parse_assertion_bytes(text.as_bytes(), &registry, ParseMode::Strict)
                .expect("canonical form parses");
            assert_eq!(serialize_assertion(&again), text);
        }
    }
});
