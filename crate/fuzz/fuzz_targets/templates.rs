#![no_main]

use cosmargin::dataio::{parse_templates, write_templates};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_templates(text, Some(64));
    if let Ok(set) = parse_templates(text, None) {
        assert_eq!(parse_templates(&write_templates(&set), None).unwrap(), set);
    }
});
