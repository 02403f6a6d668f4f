#![no_main]
use latentprint::matching::ScoreMatrix;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = ScoreMatrix::parse_csv(text, "fuzz") {
        for p in 0..m.probes.len() {
            assert_eq!(m.ranked(p).len(), m.identities.len());
        }
    }
});
