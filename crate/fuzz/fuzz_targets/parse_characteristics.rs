#![no_main]

use essf::Characteristics;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(ch) = Characteristics::from_toml_str(s) {
        let config = ch.to_config();
        assert_eq!(config.build().expect("valid characteristics rebuild"), ch);
        let _ = essf::dislocation::rate_j(&ch, 3);
        let _ = essf::diagnostics::cumulant(&ch, 1.0);
    }
});
