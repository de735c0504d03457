#![no_main]

use cosmargin::evalkit::FeatureTable;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(table) = FeatureTable::from_csv(text) {
        let csv = table.to_csv();
        assert_eq!(FeatureTable::from_csv(&csv).unwrap().to_csv(), csv);
    }
});
