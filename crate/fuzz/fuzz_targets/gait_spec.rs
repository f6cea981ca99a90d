#![no_main]

use libfuzzer_sys::fuzz_target;
use oal_core::GaitSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(g) = s.parse::<GaitSpec>() {
        let again: GaitSpec = g.to_string().parse().expect("displayed gait parses");
        assert_eq!(again, g);
    }
});
