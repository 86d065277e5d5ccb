#![no_main]

use libfuzzer_sys::fuzz_target;
use oraldx_core::fusion::bundle::decode;
use oraldx_core::fusion::Bundled;
use oraldx_core::reasoning::HierarchyModel;

fuzz_target!(|data: &[u8]| {
    let _ = decode(data);
    if let Ok(model) = HierarchyModel::from_bytes(data) {
        assert_eq!(HierarchyModel::from_bytes(&model.to_bytes()).unwrap(), model);
    }
});
