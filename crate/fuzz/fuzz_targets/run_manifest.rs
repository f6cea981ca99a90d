#![no_main]

use libfuzzer_sys::fuzz_target;
use oal_cli::manifest::RunManifest;

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = serde_json::from_slice::<RunManifest>(data) {
        let bytes = serde_json::to_vec(&m).expect("manifest serializes");
        let again: RunManifest = serde_json::from_slice(&bytes).expect("serialized manifest parses");
        assert_eq!(again, m);
    }
});
