#![no_main]

use libfuzzer_sys::fuzz_target;
use volswap_core::io::decode_panel;

fuzz_target!(|data: &[u8]| {
    if let Ok(panel) = decode_panel(data) {
        let n = panel.integrated_var.len();
        assert_eq!(panel.mixing_m.len(), n);
        assert_eq!(panel.terminal_sigma.len(), n);
    }
});
