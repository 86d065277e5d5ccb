#![no_main]

use libfuzzer_sys::fuzz_target;
use oraldx_core::datapipe::{build_plan, read_counts_csv, AugConfig};

fuzz_target!(|data: &[u8]| {
    if let Ok(counts) = read_counts_csv(data) {
        let _ = build_plan(&counts, &AugConfig::default());
    }
});
