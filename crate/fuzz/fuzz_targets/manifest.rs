#![no_main]
use latentprint::protocol::{manifest_to_csv, parse_manifest};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(records) = parse_manifest(text, "fuzz") {
        // whatever parses must survive a write/read round trip
        let csv = manifest_to_csv(&records).expect("serialize parsed manifest");
        let again = parse_manifest(&csv, "roundtrip").expect("reparse written manifest");
        assert_eq!(records, again);
    }
});
