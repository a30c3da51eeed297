#![no_main]

use libfuzzer_sys::fuzz_target;
use lifecycle_dq::assess::load_suite;

fuzz_target!(|data: &[u8]| {
    let _ = load_suite(data);
});
