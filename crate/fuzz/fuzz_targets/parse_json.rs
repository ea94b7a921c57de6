#![no_main]

use gem_core::bounds::{BoundInputs, TailSpec};
use gem_core::selector::SelectionReport;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(tail) = serde_json::from_slice::<TailSpec>(data) {
        let text = serde_json::to_string(&tail).unwrap();
        let _: TailSpec = serde_json::from_str(&text).unwrap();
    }
    if let Ok(inputs) = serde_json::from_slice::<BoundInputs>(data) {
        let _ = gem_core::bounds::ege_bound_validation(&inputs);
        let _ = gem_core::bounds::vc_population_bound(&inputs);
    }
    if let Ok(report) = serde_json::from_slice::<SelectionReport>(data) {
        let _ = report.path_csv();
    }
});
