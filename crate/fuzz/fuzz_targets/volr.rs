#![no_main]
use isoscope_core::io::volr::{parse_volr, write_volr};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(vol) = parse_volr(data, "fuzz") {
        let back = parse_volr(&write_volr(&vol), "fuzz").expect("reparse");
        assert_eq!(back.dims(), vol.dims());
        assert_eq!(back.scalars(), vol.scalars());
    }
});
