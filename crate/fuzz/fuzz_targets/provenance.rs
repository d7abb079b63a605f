#![no_main]
use isoscope_agent::Session;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(s) = Session::from_jsonl(text, "/nonexistent") {
        let back = Session::from_jsonl(&s.to_jsonl(), "/nonexistent").expect("reparse");
        assert_eq!(back.to_jsonl(), s.to_jsonl());
    }
});
