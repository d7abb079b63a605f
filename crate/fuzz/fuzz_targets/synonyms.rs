#![no_main]
use isoscope_knowledge::Synonyms;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = Synonyms::parse(text) {
        for t in s.terms() {
            let _ = s.expand(t);
        }
    }
});
