#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok((left, right)) = pine::eval::parse_masked(text) {
            assert!(left.iter().chain(&right).all(|w| w != pine::eval::MASK));
        }
    }
});
