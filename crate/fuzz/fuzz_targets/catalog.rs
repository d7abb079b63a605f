#![no_main]
use std::path::Path;

use isoscope_core::catalog::DatasetCatalog;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(cat) = DatasetCatalog::parse(text, Path::new("/nonexistent")) {
        let _ = cat.summary();
        for e in &cat.entries {
            assert!(cat.find(&e.name).is_some());
        }
    }
});
