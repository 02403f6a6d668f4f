#![no_main]
use latentprint::imaging::io::{decode_image, decode_mask};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = decode_image(data) {
        assert_eq!(img.pixels().len(), img.width() * img.height());
    }
    let _ = decode_mask(data);
});
