#![no_main]
use isoscope_knowledge::RagIndex;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(idx) = RagIndex::decode(data) {
        let back = RagIndex::decode(&idx.encode()).expect("reparse");
        assert_eq!(back, idx);
        let _ = idx.retrieve("isosurface skull", 3);
    }
});
