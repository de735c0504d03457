#![no_main]

use cosmargin::dataio::{encode_idx_images, parse_idx_images};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(images) = parse_idx_images(data) {
        let bytes = encode_idx_images(&images);
        assert_eq!(parse_idx_images(&bytes).unwrap(), images);
    }
});
