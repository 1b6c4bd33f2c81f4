#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(model) = optkern::FittedModel::from_json(text) {
        // anything that validates must survive a save/load cycle and predict
        // without panicking
        let again = optkern::FittedModel::from_json(&model.to_json()).expect("round trip");
        let query = vec![0.5; model.dim()];
        let a = model.predict(&query);
        let b = again.predict(&query);
        match (a, b) {
            (Ok(pa), Ok(pb)) => {
                assert_eq!(pa.mean.to_bits(), pb.mean.to_bits());
                assert_eq!(pa.variance.to_bits(), pb.variance.to_bits());
            }
            (Err(_), Err(_)) => {}
            other => panic!("round-tripped model diverged: {other:?}"),
        }
    }
});
