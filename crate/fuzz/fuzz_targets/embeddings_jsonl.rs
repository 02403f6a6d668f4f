#![no_main]
use latentprint::matching::io::parse_jsonl;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(records) = parse_jsonl(text, "fuzz") {
        for r in &records {
            let _ = r.embedding().to_unit();
        }
    }
});
