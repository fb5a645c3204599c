#![no_main]

use libfuzzer_sys::fuzz_target;
use parvi::targets::parse_csv;

fuzz_target!(|data: &[u8]| {
    let Some((&flag, body)) = data.split_first() else {
        return;
    };
    if let Ok(ds) = parse_csv(body, flag & 1 == 1) {
        assert_eq!(ds.features.nrows(), ds.labels.len());
        assert!(ds.features.iter().all(|v| v.is_finite()));
        assert!(ds.labels.iter().all(|&y| y == 0.0 || y == 1.0));
    }
});
