//! Replays the checked-in fuzz corpus through the same entry points.

use std::fs;
use std::path::PathBuf;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let path = e.unwrap().path();
            (path.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&path).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn model_seeds() {
    for (name, data) in seeds("decode_model") {
        let decoded = pine::io::decode_model(&data[..]);
        if name.ends_with(".pine") {
            let model = decoded.unwrap();
            let mut bytes = Vec::new();
            pine::io::encode_model(&model, &mut bytes).unwrap();
            assert_eq!(bytes, data, "{name}");
        } else {
            assert!(decoded.is_err(), "{name}");
        }
    }
}

#[test]
fn text_vector_seeds() {
    for (name, data) in seeds("read_text_vectors") {
        let parsed = pine::io::read_text_vectors(&data[..]);
        match name.as_str() {
            "minimal.txt" => assert_eq!(parsed.unwrap(), vec![("word".to_owned(), vec![0.5, -1.0])]),
            "empty.txt" => assert!(parsed.unwrap().is_empty()),
            _ => {
                let rows = parsed.unwrap();
                assert!(rows.iter().all(|(_, v)| v.len() == rows[0].1.len()));
            }
        }
    }
}

#[test]
fn text_seeds() {
    for (_, data) in seeds("tokenize") {
        let _ = pine::corpus::tokenize_bytes(&data);
    }
    for (name, data) in seeds("parse_questions") {
        let parsed = pine::eval::parse_questions(std::str::from_utf8(&data).unwrap());
        assert_eq!(parsed.is_ok(), name == "sections.txt", "{name}");
    }
    for (name, data) in seeds("parse_masked") {
        let parsed = pine::eval::parse_masked(std::str::from_utf8(&data).unwrap());
        assert_eq!(parsed.is_ok(), name != "two.txt", "{name}");
    }
}
