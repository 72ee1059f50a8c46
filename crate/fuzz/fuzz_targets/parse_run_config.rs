#![no_main]

use essf_cli::RunConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = RunConfig::from_toml_str(s) {
        let _ = config.hash();
        let _ = config.validate_tests();
    }
});
