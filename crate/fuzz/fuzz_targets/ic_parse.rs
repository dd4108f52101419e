#![no_main]

use accbench::harness::grid::parse_ic;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(s) = parse_ic(text) {
            assert!(s.is_finite());
        }
    }
});
