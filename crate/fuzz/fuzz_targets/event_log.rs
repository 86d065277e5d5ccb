#![no_main]

use libfuzzer_sys::fuzz_target;
use oraldx_service::parse_log;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(events) = parse_log(text) {
            assert!(events.windows(2).all(|w| w[0].seq < w[1].seq));
        }
    }
});
