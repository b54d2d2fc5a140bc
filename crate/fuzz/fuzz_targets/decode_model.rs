#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(model) = pine::io::decode_model(data) {
        // whatever decodes must re-encode to a fixed point
        let mut once = Vec::new();
        pine::io::encode_model(&model, &mut once).unwrap();
        let again = pine::io::decode_model(&once[..]).unwrap();
        let mut twice = Vec::new();
        pine::io::encode_model(&again, &mut twice).unwrap();
        assert_eq!(once, twice);
    }
});
