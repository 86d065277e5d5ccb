#![no_main]

use libfuzzer_sys::fuzz_target;
use oraldx_core::reasoning::DialogueScript;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(script) = DialogueScript::parse(text) {
        assert_eq!(DialogueScript::parse(&script.to_toml()).unwrap(), script);
    }
});
