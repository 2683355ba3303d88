//! Fuzz the initial-condition field reader (snapshot CSVs reload through
//! the same path).

#![no_main]

use libfuzzer_sys::fuzz_target;
use microlax::config::parse_field_text;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    for expected in [0usize, 1, 16] {
        let _ = parse_field_text(text, expected);
    }
});
