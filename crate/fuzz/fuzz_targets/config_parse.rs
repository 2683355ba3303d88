//! Fuzz the INI layer and the full configuration resolution: arbitrary text
//! must produce a clean error, never a panic.

#![no_main]

use libfuzzer_sys::fuzz_target;
use microlax::config::{Ini, RegimeMapRequest, SimConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(ini) = Ini::parse(text) {
        let _ = SimConfig::from_ini(&ini);
        let _ = RegimeMapRequest::from_ini(&ini);
    }
});
