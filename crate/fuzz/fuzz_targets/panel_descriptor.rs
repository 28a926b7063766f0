#![no_main]

use libfuzzer_sys::fuzz_target;
use volswap_core::io::{assemble, decode_panel, PanelDescriptor};

// First line is the JSON descriptor, the rest the binary panel.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == b'\n').unwrap_or(data.len());
    let (head, tail) = data.split_at(split);
    let Ok(text) = std::str::from_utf8(head) else { return };
    let Ok(desc) = serde_json::from_str::<PanelDescriptor>(text) else { return };
    if let Ok(panel) = decode_panel(tail.get(1..).unwrap_or(&[])) {
        let _ = assemble(&desc, panel);
    }
});
