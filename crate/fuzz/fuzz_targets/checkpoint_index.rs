#![no_main]
use latentprint::backbone::checkpoint::{decode_params, parse_index};
use libfuzzer_sys::fuzz_target;

// First two bytes give the params blob length, the rest is index JSON.
fuzz_target!(|data: &[u8]| {
    if data.len() < 2 {
        return;
    }
    let blob_len = u16::from_le_bytes([data[0], data[1]]) as usize;
    if let Ok(index) = parse_index(&data[2..], blob_len) {
        let blob: Vec<u8> = (0..blob_len).map(|i| i as u8).collect();
        decode_params(&index, &blob).expect("validated index must decode");
    }
});
