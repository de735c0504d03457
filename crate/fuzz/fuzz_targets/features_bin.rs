#![no_main]

use cosmargin::evalkit::FeatureTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(table) = FeatureTable::from_bytes(data) {
        assert_eq!(table.to_bytes(), data);
    }
});
