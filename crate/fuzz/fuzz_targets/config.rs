#![no_main]
use latentprint::config::{parse_config, TrainSettings};
use latentprint::imaging::PreprocessConfig;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(p) = parse_config::<PreprocessConfig>(text, "fuzz") {
        let _ = p.validate();
    }
    if let Ok(t) = parse_config::<TrainSettings>(text, "fuzz") {
        let _ = t.train_config().validate();
        let _ = t.arcface(4).validate();
    }
});
