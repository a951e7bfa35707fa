#![no_main]

use libfuzzer_sys::fuzz_target;
use masked_cavity_cli::config::{parse_config, revalidate};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(cfg) = parse_config(text) {
            let again = revalidate(&cfg).expect("a resolved configuration re-validates");
            assert_eq!(again, cfg);
        }
    }
});
