#![no_main]
use fdif_core::io::{decode_image, encode_image, quantized, OutputFormat};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(img) = decode_image(data) else { return };
    assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    // Small images only: re-encoding is the slow part.
    if img.len() > 1 << 16 {
        return;
    }
    let q = quantized(&img);
    for fmt in [OutputFormat::Png, OutputFormat::Pgm] {
        let bytes = encode_image(&q, fmt).expect("decoded images re-encode");
        assert_eq!(decode_image(&bytes).expect("own output decodes"), q);
    }
});
