#![no_main]
use isoscope_core::metrics::parse_isovalue_range;
use isoscope_llm::parse_score;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(v) = parse_isovalue_range(text) {
        assert!(v.windows(2).all(|w| w[0] < w[1]));
    }
    if let Some(s) = parse_score(text) {
        assert!(s.is_finite());
    }
});
