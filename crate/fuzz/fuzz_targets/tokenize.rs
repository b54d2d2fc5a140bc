#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(tokens) = pine::corpus::tokenize_bytes(data) {
        for t in &tokens {
            assert!(!t.is_empty());
            let _ = pine::subword::extract_ngrams(t, 3, 6);
        }
    }
});
