#![no_main]

use libfuzzer_sys::fuzz_target;
use oal_core::Environment;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(env) = Environment::from_json_str(s) {
        let again = Environment::from_json_str(&env.to_json_string()).expect("serialized environment parses");
        assert_eq!(again, env);
    }
});
