#![no_main]
use isoscope_core::render::ImageBuffer;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = ImageBuffer::decode_png(data) {
        let bytes = img.encode_png().expect("encode");
        assert_eq!(ImageBuffer::decode_png(&bytes).expect("reparse"), img);
    }
});
