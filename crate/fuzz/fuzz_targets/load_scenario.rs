#![no_main]

use libfuzzer_sys::fuzz_target;
use lifecycle_dq::simulate::load_scenario;
use lifecycle_dq::taxonomy::ActorRegistry;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = load_scenario(data) {
        // keep generation cheap
        if s.row_count <= 2_000 && s.actors.len() <= 50 {
            let _ = s.validate(&ActorRegistry::builtin());
        }
    }
});
