#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use ulrot_cli::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = RunConfig::parse(text, Path::new("/data")) {
        assert!(cfg.solver.validate().is_ok());
    }
});
