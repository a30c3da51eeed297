#![no_main]

use libfuzzer_sys::fuzz_target;
use lifecycle_dq::report::load_attestations;

fuzz_target!(|data: &[u8]| {
    let _ = load_attestations(data);
});
