#![no_main]
use isoscope_llm::GatewayConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = GatewayConfig::from_toml_str(text);
    }
});
