#![no_main]

use libfuzzer_sys::fuzz_target;
use oal_core::FrameTag;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(FrameTag::Link(i)) = oal_cli::commands::parse_frame(s) {
        assert!(i >= 1);
    }
});
