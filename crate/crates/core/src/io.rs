//! Grayscale image ingestion and 8-bit output.
//!
//! Decoding is delegated to the `image` crate (PNG and the PNM family).
//! Samples deeper than 8 bits are rejected; colour is reduced to luminance
//! `0.299 R + 0.587 G + 0.114 B`, and everything lands in `[0, 1]`.

use std::io::Cursor;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, GrayImage, ImageFormat, ImageReader};

use crate::detect::BinaryMap;
use crate::error::{Error, Result};
use crate::image::Image;

/// Output container, chosen from the file extension.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Png,
    Pgm,
}

impl OutputFormat {
    /// `.pgm`/`.pnm` give PGM; anything else is written as PNG.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
            Some(ext) if ext == "pgm" || ext == "pnm" => OutputFormat::Pgm,
            _ => OutputFormat::Png,
        }
    }
}

fn luminance(r: u8, g: u8, b: u8) -> f64 {
    (0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64) / 255.0
}

fn from_dynamic(img: DynamicImage) -> Result<Image> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data: Vec<f64> = match img {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(g) => g.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageRgb8(c) => c.pixels().map(|p| luminance(p.0[0], p.0[1], p.0[2])).collect(),
        DynamicImage::ImageRgba8(c) => c.pixels().map(|p| luminance(p.0[0], p.0[1], p.0[2])).collect(),
        other => {
            return Err(Error::UnsupportedBitDepth(format!(
                "{:?} samples; only 8-bit images are accepted",
                other.color()
            )))
        }
    };
    Image::new(w, h, data)
}

/// Decodes PNG or PNM bytes, sniffing the container from the magic number.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(Error::Io)?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        Some(other) => return Err(Error::Decode(format!("unsupported format {other:?}"))),
        None => return Err(Error::Decode("unrecognised image format".into())),
    }
    let img = reader.decode().map_err(|e| Error::Decode(e.to_string()))?;
    from_dynamic(img)
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path)?;
    decode_image(&bytes)
}

/// Ground-truth maps: a pixel is on when its intensity exceeds one half.
pub fn read_binary_map(path: &Path) -> Result<BinaryMap> {
    Ok(BinaryMap::from_image(&read_image(path)?, 0.5))
}

/// `round(v * 255)` after clipping to `[0, 1]`.
pub fn quantize(img: &Image) -> Vec<u8> {
    img.data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// The grid that `encode_image` followed by `decode_image` yields.
pub fn quantized(img: &Image) -> Image {
    let data = quantize(img).into_iter().map(|b| b as f64 / 255.0).collect();
    Image::new(img.width(), img.height(), data).expect("same shape")
}

pub fn encode_image(img: &Image, format: OutputFormat) -> Result<Vec<u8>> {
    let gray = GrayImage::from_raw(img.width() as u32, img.height() as u32, quantize(img))
        .expect("buffer matches dimensions");
    let mut out = Vec::new();
    match format {
        OutputFormat::Png => gray
            .write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
            .map_err(|e| Error::Decode(e.to_string()))?,
        OutputFormat::Pgm => {
            let enc = PnmEncoder::new(&mut out).with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary));
            gray.write_with_encoder(enc)
                .map_err(|e| Error::Decode(e.to_string()))?
        }
    }
    Ok(out)
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let bytes = encode_image(img, OutputFormat::from_path(path))?;
    std::fs::write(path, bytes)?;
    Ok(())
}
