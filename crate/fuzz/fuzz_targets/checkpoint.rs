#![no_main]

use libfuzzer_sys::fuzz_target;
use masked_cavity::checkpoint::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(ck) = Checkpoint::from_json(text) {
            let back = Checkpoint::from_json(&ck.to_json().expect("serializes")).expect("round trips");
            assert_eq!(back, ck);
        }
    }
});
