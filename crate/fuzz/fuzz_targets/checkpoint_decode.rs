#![no_main]

use accbench::drl::Checkpoint;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(ckpt) = Checkpoint::decode(data) {
        assert_eq!(Checkpoint::decode(&ckpt.encode()).unwrap().encode(), ckpt.encode());
        let _ = ckpt.policy();
    }
});
