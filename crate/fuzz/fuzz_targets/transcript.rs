#![no_main]
use isoscope_llm::Transcript;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(t) = Transcript::parse_jsonl(text) {
        let back = Transcript::parse_jsonl(&t.to_jsonl()).expect("reparse");
        assert_eq!(back, t);
    }
});
