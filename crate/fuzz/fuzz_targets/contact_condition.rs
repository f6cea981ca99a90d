#![no_main]

use libfuzzer_sys::fuzz_target;
use oal_core::{ContactCondition, Side};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(c) = s.parse::<ContactCondition>() {
        assert_eq!(c.to_string().parse::<ContactCondition>().ok(), Some(c));
    }
    if let Ok(side) = s.parse::<Side>() {
        assert_eq!(side.to_string().parse::<Side>().ok(), Some(side));
    }
});
