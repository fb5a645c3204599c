#![no_main]

use std::path::Path;

use libfuzzer_sys::fuzz_target;
use parvi::runner::validate_config;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    // Anything accepted must survive a render/parse round trip unchanged.
    if let Ok(cfg) = validate_config(text, Path::new("/base")) {
        let again = validate_config(&cfg.render(), Path::new("/base"))
            .expect("rendered config must validate");
        assert_eq!(cfg, again);
    }
});
