#![no_main]

use cosmargin_cli::{Assignments, RunConfig};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(raw) = Assignments::parse(text) else { return };
    if let Ok(cfg) = RunConfig::from_assignments(&raw) {
        let dumped = cfg.dump();
        let again = RunConfig::from_assignments(&Assignments::parse(&dumped).unwrap()).unwrap();
        assert_eq!(again.dump(), dumped);
    }
});
