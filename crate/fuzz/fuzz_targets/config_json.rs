#![no_main]

use libfuzzer_sys::fuzz_target;
use probeflow::cli::config::config_to_args;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(args) = config_to_args(text) {
        assert!(args.iter().all(|a| a.starts_with("--") && !a.starts_with("--config")));
    }
});
