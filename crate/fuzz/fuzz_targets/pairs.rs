#![no_main]

use cosmargin::dataio::{parse_pairs, write_pairs};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_pairs(text, Some(64));
    if let Ok(pairs) = parse_pairs(text, None) {
        assert_eq!(parse_pairs(&write_pairs(&pairs), None).unwrap(), pairs);
    }
});
