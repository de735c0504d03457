#![no_main]

use cosmargin_cli::commands::margins_trace;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        let _ = margins_trace(text);
    }
});
