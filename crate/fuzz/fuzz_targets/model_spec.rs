#![no_main]

use libfuzzer_sys::fuzz_target;
use volswap_core::io::parse_model_spec;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(spec) = parse_model_spec(text) {
            // a validated spec must round-trip
            let json = serde_json::to_string(&spec).unwrap();
            assert_eq!(parse_model_spec(&json).unwrap(), spec);
        }
    }
});
