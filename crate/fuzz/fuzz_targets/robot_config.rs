#![no_main]

use libfuzzer_sys::fuzz_target;
use oal_core::RobotSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(spec) = RobotSpec::from_json_str(s) {
        let again = RobotSpec::from_json_str(&spec.to_json_string()).expect("serialized config parses");
        assert_eq!(again, spec);
    }
});
