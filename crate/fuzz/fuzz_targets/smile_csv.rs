#![no_main]

use libfuzzer_sys::fuzz_target;
use volswap_core::io::parse_smile_csv;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(quotes) = parse_smile_csv(text) {
            for q in quotes {
                assert!(q.strike.is_finite() && q.implied_vol.is_finite());
            }
        }
    }
});
