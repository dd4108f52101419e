#![no_main]

use accbench::harness::DriveCycle;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(cycle) = DriveCycle::from_csv("fuzz", data) {
        assert!(cycle.t.len() >= 2);
        assert!(cycle.t.windows(2).all(|w| w[1] > w[0]));
        if let Ok(rs) = cycle.resample(0.1) {
            assert!(rs.speed.iter().all(|v| *v >= 0.0));
        }
    }
});
