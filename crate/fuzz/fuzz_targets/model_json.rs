#![no_main]

use cdnerr::cluster::ClusterModel;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = serde_json::from_slice::<ClusterModel>(data) {
        let _ = (model.k(), model.algorithm());
        let text = serde_json::to_string(&model).expect("serialize");
        let _: ClusterModel = serde_json::from_str(&text).expect("reparse");
    }
});
