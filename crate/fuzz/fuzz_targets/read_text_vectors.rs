#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(rows) = pine::io::read_text_vectors(data) {
        if let Some((_, first)) = rows.first() {
            assert!(rows.iter().all(|(_, v)| v.len() == first.len()));
        }
    }
});
