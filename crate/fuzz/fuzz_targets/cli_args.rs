#![no_main]

use clap::Parser;
use libfuzzer_sys::fuzz_target;
use oal_cli::Cli;

// arguments are NUL-separated; only parsed, never executed
fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let _ = Cli::try_parse_from(std::iter::once("oal").chain(s.split('\0')));
});
