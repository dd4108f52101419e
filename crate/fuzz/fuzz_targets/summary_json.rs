#![no_main]

use accbench::harness::ExperimentSummary;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(summary) = ExperimentSummary::from_json(text) {
            if let Ok(json) = summary.to_json() {
                let _ = ExperimentSummary::from_json(&json);
            }
            let _ = summary.render();
            let _ = summary.to_csv();
        }
    }
});
