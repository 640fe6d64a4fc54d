use std::fs;
use std::path::PathBuf;

use fdif_core::config::ConfigFile;
use fdif_core::detect::LogisticModel;
use fdif_core::io::{decode_image, encode_image, quantized, OutputFormat};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fuzz/corpus").join(target);
    let mut out: Vec<_> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds in {}", dir.display());
    out
}

#[test]
fn image_seeds_decode_or_fail_cleanly() {
    let mut decoded = 0;
    for (name, bytes) in seeds("image_decode") {
        let Ok(img) = decode_image(&bytes) else { continue };
        decoded += 1;
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)), "{name}");
        let q = quantized(&img);
        for fmt in [OutputFormat::Png, OutputFormat::Pgm] {
            assert_eq!(decode_image(&encode_image(&q, fmt).unwrap()).unwrap(), q, "{name}");
        }
    }
    assert!(decoded >= 5);
    let rejected = |name: &str| seeds("image_decode").into_iter().any(|(n, b)| n == name && decode_image(&b).is_err());
    assert!(rejected("gray16.png"));
    assert!(rejected("truncated.png"));
}

#[test]
fn model_seeds_round_trip() {
    let mut parsed = 0;
    for (name, bytes) in seeds("model_parse") {
        let Ok(model) = LogisticModel::parse(std::str::from_utf8(&bytes).unwrap()) else { continue };
        parsed += 1;
        assert_eq!(LogisticModel::parse(&model.to_text()).unwrap(), model, "{name}");
    }
    assert_eq!(parsed, 2);
}

#[test]
fn config_seeds_parse_or_fail_cleanly() {
    let results: Vec<_> = seeds("config_parse")
        .into_iter()
        .map(|(n, b)| (n, ConfigFile::parse(std::str::from_utf8(&b).unwrap())))
        .collect();
    for (name, r) in &results {
        assert_eq!(r.is_err(), name == "errors.cfg", "{name}");
    }
}
