#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    // dataset parse with a response column; must never panic
    let _ = optkern::data::parse_csv(data, "y", "fuzz");
    // feature-only parse (prediction queries)
    let _ = optkern::data::parse_feature_csv(data, "fuzz");
});
