#![no_main]
use isoscope_core::io::vti::{parse_vti, write_vti, Encoding};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(vol) = parse_vti(data, "fuzz") else { return };
    // whatever parses must survive a write/read cycle in both encodings
    for enc in [Encoding::Ascii, Encoding::Base64] {
        let text = write_vti(&vol, enc);
        let back = parse_vti(text.as_bytes(), "fuzz").expect("reparse");
        assert_eq!(back.dims(), vol.dims());
        assert_eq!(back.scalars().len(), vol.scalars().len());
    }
});
