#![no_main]

use libfuzzer_sys::fuzz_target;
use oraldx_core::evaluation::{render_reproduction, PublishedTable};

fuzz_target!(|data: &[u8]| {
    let Ok(table) = PublishedTable::read_csv(data) else {
        return;
    };
    if let Ok(rows) = table.reproduce() {
        let _ = render_reproduction(&rows);
    }
    if let Ok(report) = table.to_report() {
        let _ = report.render();
    }
});
