#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(sizes) = hilfer_cli::parse_grid_list(text) {
            assert!(sizes.iter().all(|&n| n >= 2));
        }
    }
});
