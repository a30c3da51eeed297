#![no_main]

use libfuzzer_sys::fuzz_target;
use lifecycle_dq::notation::LabelMap;
use lifecycle_dq::taxonomy::ActorRegistry;

fuzz_target!(|data: &[u8]| {
    let _ = ActorRegistry::from_config_json(data);
    let _ = LabelMap::from_json(data);
});
