//! Fuzz the small value parsers: comma lists, modulus specs, 2x2 matrix
//! specs, Mandel tensors and axis ranges.

#![no_main]

use libfuzzer_sys::fuzz_target;
use microlax::config::{parse_list, parse_mat2, parse_modulus, parse_tensor, parse_vec2, AxisSpec};
use microlax::tensor::Dim;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = parse_list(text);
    let _ = parse_modulus(text, Dim::One);
    let _ = parse_modulus(text, Dim::Two);
    let _ = parse_mat2(text);
    let _ = parse_tensor(text, Dim::One);
    let _ = parse_tensor(text, Dim::Two);
    let _ = parse_vec2(text);
    let _ = AxisSpec::parse(text);
});
