#![no_main]

use libfuzzer_sys::fuzz_target;
use oraldx_core::taxonomy::Taxonomy;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(t) = Taxonomy::parse(text) {
        for id in t.all_ids() {
            t.record(id).unwrap();
        }
    }
});
