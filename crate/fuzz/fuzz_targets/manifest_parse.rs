#![no_main]

use libfuzzer_sys::fuzz_target;
use oraldx_core::datapipe::Manifest;

fuzz_target!(|data: &[u8]| {
    let Ok(manifest) = Manifest::parse(data) else {
        return;
    };
    let mut out = Vec::new();
    manifest.write(&mut out).unwrap();
    assert_eq!(Manifest::parse(&out[..]).unwrap(), manifest);
});
