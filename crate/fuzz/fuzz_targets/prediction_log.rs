#![no_main]

use libfuzzer_sys::fuzz_target;
use oraldx_core::evaluation::{zone_report, PredictionLog};
use oraldx_core::taxonomy::Taxonomy;

fuzz_target!(|data: &[u8]| {
    let Ok(log) = PredictionLog::read_csv(data) else {
        return;
    };
    assert_eq!(PredictionLog::read_csv(log.to_csv().as_bytes()).unwrap(), log);
    let taxonomy = Taxonomy::bundled();
    if log.validate(&taxonomy).is_ok() {
        let _ = zone_report(&log, &taxonomy);
    }
});
