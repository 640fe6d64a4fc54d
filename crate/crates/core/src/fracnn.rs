//! FraCNN: a predefined-filter network that approximates iterative FDIF.
//!
//! Each layer pair is a max-response convolution over an oriented filter
//! bank followed by a rectified power normalisation with a fixed exponent.
//! No pooling, no learned filters.

use rayon::prelude::*;

use crate::direction::{build_filter_bank, FilterBank, DEFAULT_BANK_SIZE, DEFAULT_KERNEL_SIDE};
use crate::error::{invalid, Result};
use crate::fdif::AlphaClamp;
use crate::image::{apply_taps, box_mean, convolve_taps, require_odd, Image, Padded};

pub const DEFAULT_DEPTH: usize = 3;
pub const DEFAULT_ALPHA: f64 = 2.0;

/// Below this the normalisation denominator is treated as zero.
const DENOM_EPS: f64 = 1e-12;

/// Which image the mean filter sees in the numerator of the nonlinear layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Numerator {
    /// `M * f_F`, the unrectified filter response.
    #[default]
    Literal,
    /// `M * max(f_F, 0)`.
    Rectified,
}

#[derive(Debug, Clone)]
pub struct FracnnConfig {
    pub bank: FilterBank,
    /// Number of (convolution, nonlinear) layer pairs, so depth 3 is a
    /// six-layer network.
    pub depth: usize,
    pub alpha: f64,
    pub mean_side: usize,
    pub numerator: Numerator,
}

impl FracnnConfig {
    pub fn new(bank_size: usize, side: usize, depth: usize, alpha: f64) -> Result<Self> {
        let cfg = Self {
            bank: build_filter_bank(bank_size, side)?,
            depth,
            alpha,
            mean_side: side,
            numerator: Numerator::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(invalid("depth must be >= 1"));
        }
        if !AlphaClamp::default().contains(self.alpha) {
            return Err(invalid(format!(
                "alpha {} outside the supported range [0.25, 4]",
                self.alpha
            )));
        }
        require_odd("mean side", self.mean_side, 1)
    }
}

impl Default for FracnnConfig {
    fn default() -> Self {
        Self::new(DEFAULT_BANK_SIZE, DEFAULT_KERNEL_SIDE, DEFAULT_DEPTH, DEFAULT_ALPHA)
            .expect("default configuration is valid")
    }
}

/// Response of every bank filter, in bank order.
pub fn bank_responses(img: &Image, bank: &FilterBank) -> Vec<Image> {
    let half = bank.side() / 2;
    bank.taps().iter().map(|t| convolve_taps(img, t, half)).collect()
}

/// Pixelwise maximum over the bank together with the index of the winning
/// filter; ties go to the lowest index.
pub fn conv_max_with_index(img: &Image, bank: &FilterBank) -> (Image, Vec<u16>) {
    let padded = Padded::new(img, bank.side() / 2);
    let (w, h) = img.shape();
    let mut out = vec![0.0; w * h];
    let mut idx = vec![0u16; w * h];
    out.par_chunks_mut(w)
        .zip(idx.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (row, irow))| {
            row.fill(f64::NEG_INFINITY);
            for (k, taps) in bank.taps().iter().enumerate() {
                for x in 0..w {
                    let r = apply_taps(&padded, x, y, taps);
                    if r > row[x] {
                        row[x] = r;
                        irow[x] = k as u16;
                    }
                }
            }
        });
    (Image::from_raw(w, h, out), idx)
}

/// Max-response convolution layer.
pub fn conv_max_layer(img: &Image, bank: &FilterBank) -> Image {
    conv_max_with_index(img, bank).0
}

/// Rectified power normalisation with a box mean filter `M`:
/// `(M * f) max(f, 0)^a / (M * max(f, 0)^a)`, zero where the denominator
/// vanishes.
pub fn nonlinear_layer(
    filtered: &Image,
    alpha: f64,
    mean_side: usize,
    numerator: Numerator,
) -> Result<Image> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(invalid(format!("alpha must be positive, got {alpha}")));
    }
    require_odd("mean side", mean_side, 1)?;
    let rect = filtered.map(|v| v.max(0.0));
    let powered = rect.map(|v| v.powf(alpha));
    let num_mean = match numerator {
        Numerator::Literal => box_mean(filtered, mean_side),
        Numerator::Rectified => box_mean(&rect, mean_side),
    };
    let den = box_mean(&powered, mean_side);
    let (w, h) = filtered.shape();
    let data = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let d = den.data()[i];
            if d >= DENOM_EPS {
                num_mean.data()[i] * powered.data()[i] / d
            } else {
                0.0
            }
        })
        .collect();
    Ok(Image::from_raw(w, h, data))
}

/// Output of every layer pair (unclipped), first pair first.
pub fn fracnn_layers(img: &Image, cfg: &FracnnConfig) -> Result<Vec<Image>> {
    cfg.validate()?;
    let mut current = img.clone();
    let mut out = Vec::with_capacity(cfg.depth);
    for _ in 0..cfg.depth {
        let conv = conv_max_layer(&current, &cfg.bank);
        current = nonlinear_layer(&conv, cfg.alpha, cfg.mean_side, cfg.numerator)?;
        out.push(current.clone());
    }
    Ok(out)
}

/// Forward pass clipped to `[0, 1]`.
pub fn fracnn_forward(img: &Image, cfg: &FracnnConfig) -> Result<Image> {
    let last = fracnn_layers(img, cfg)?.pop().expect("depth >= 1");
    Ok(last.clip(0.0, 1.0))
}
