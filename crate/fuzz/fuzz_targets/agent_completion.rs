#![no_main]
use isoscope_agent::parse::parse_action_input;
use isoscope_agent::parse_completion;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_completion(text);
    let _ = parse_action_input(text);
});
