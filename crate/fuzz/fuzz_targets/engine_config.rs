#![no_main]

use libfuzzer_sys::fuzz_target;
use oraldx_core::engine::EngineConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(config) = toml::from_str::<EngineConfig>(text) {
        let _ = config.validate();
    }
});
