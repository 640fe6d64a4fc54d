//! Grayscale image grid, dense kernels and the boundary/convolution
//! helpers shared by every stage of the pipeline.
//!
//! Boundary handling is symmetric (half-sample mirror) padding everywhere:
//! index `-1` maps to `0`, `n` maps to `n - 1`, and the pattern repeats with
//! period `2n`, so arbitrarily large kernels work on tiny images.

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};

/// Row-major grid of finite intensities. Canonical range is `[0, 1]` but
/// intermediate results may leave it.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid(format!("image must be non-empty, got {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(invalid(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("non-finite value at index {i}")));
        }
        Ok(Self { width, height, data })
    }

    /// Skips validation; callers guarantee shape and finiteness.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width > 0 && height > 0, "image must be non-empty");
        assert!(value.is_finite());
        Self::from_raw(width, height, vec![value; width * height])
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width > 0 && height > 0, "image must be non-empty");
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                assert!(v.is_finite(), "non-finite value at ({x}, {y})");
                data.push(v);
            }
        }
        Self::from_raw(width, height, data)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    /// Value at a possibly out-of-range coordinate, mirrored back inside.
    #[inline]
    pub fn get_mirrored(&self, x: isize, y: isize) -> f64 {
        self.get(mirror_index(x, self.width), mirror_index(y, self.height))
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                expected: self.shape(),
                actual: other.shape(),
            });
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Image {
        let data = self.data.par_iter().map(|&v| f(v)).collect();
        Image::from_raw(self.width, self.height, data)
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn clip(&self, lo: f64, hi: f64) -> Image {
        self.map(|v| v.clamp(lo, hi))
    }

    pub fn transpose(&self) -> Image {
        let (w, h) = self.shape();
        let mut data = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                data[x * h + y] = self.data[y * w + x];
            }
        }
        Image::from_raw(h, w, data)
    }

    /// Left-right mirror.
    pub fn mirror_horizontal(&self) -> Image {
        let (w, h) = self.shape();
        Image::from_fn(w, h, |x, y| self.get(w - 1 - x, y))
    }

    pub fn mirror_vertical(&self) -> Image {
        let (w, h) = self.shape();
        Image::from_fn(w, h, |x, y| self.get(x, h - 1 - y))
    }

    /// Quarter turn clockwise as displayed (rows grow downwards).
    pub fn rotate90(&self) -> Image {
        let (w, h) = self.shape();
        Image::from_fn(h, w, |x, y| self.get(y, h - 1 - x))
    }

    pub fn rotate180(&self) -> Image {
        let (w, h) = self.shape();
        Image::from_fn(w, h, |x, y| self.get(w - 1 - x, h - 1 - y))
    }

    /// Nearest-neighbour upscale by an integer factor.
    pub fn upscale_nearest(&self, factor: usize) -> Image {
        assert!(factor >= 1);
        let (w, h) = self.shape();
        Image::from_fn(w * factor, h * factor, |x, y| self.get(x / factor, y / factor))
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn mean_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!(self.shape(), other.shape());
        let total: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).abs()).sum();
        total / self.data.len() as f64
    }
}

/// Symmetric padding index map with period `2n`.
#[inline]
pub fn mirror_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m >= n { period - 1 - m } else { m }) as usize
}

/// Dense odd-sided convolution kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    side: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn new(side: usize, weights: Vec<f64>) -> Result<Self> {
        if side == 0 || side.is_multiple_of(2) {
            return Err(invalid(format!("kernel side must be odd and positive, got {side}")));
        }
        if weights.len() != side * side {
            return Err(invalid(format!(
                "kernel needs {} weights, got {}",
                side * side,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(invalid("kernel weights must be finite"));
        }
        Ok(Self { side, weights })
    }

    #[inline]
    pub fn side(&self) -> usize {
        self.side
    }

    #[inline]
    pub fn half(&self) -> usize {
        self.side / 2
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at offset `(dx, dy)` from the centre, rows growing downwards.
    #[inline]
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let h = self.half() as isize;
        self.weights[((dy + h) as usize) * self.side + (dx + h) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn transpose(&self) -> Kernel {
        let s = self.side;
        let mut w = vec![0.0; s * s];
        for y in 0..s {
            for x in 0..s {
                w[x * s + y] = self.weights[y * s + x];
            }
        }
        Kernel { side: s, weights: w }
    }

    pub fn mirror_horizontal(&self) -> Kernel {
        let s = self.side;
        let mut w = vec![0.0; s * s];
        for y in 0..s {
            for x in 0..s {
                w[y * s + x] = self.weights[y * s + (s - 1 - x)];
            }
        }
        Kernel { side: s, weights: w }
    }

    /// Nonzero entries in raster order.
    pub fn taps(&self) -> Vec<Tap> {
        let h = self.half() as isize;
        let s = self.side;
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w != 0.0)
            .map(|(i, &w)| Tap {
                dx: (i % s) as isize - h,
                dy: (i / s) as isize - h,
                weight: w,
            })
            .collect()
    }
}

/// One nonzero kernel entry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tap {
    pub dx: isize,
    pub dy: isize,
    pub weight: f64,
}

/// Image copy with a mirrored margin so stencils can index without bounds
/// juggling.
pub(crate) struct Padded {
    pad: usize,
    stride: usize,
    data: Vec<f64>,
}

impl Padded {
    pub(crate) fn new(img: &Image, pad: usize) -> Self {
        let (w, h) = img.shape();
        let stride = w + 2 * pad;
        let rows = h + 2 * pad;
        let mut data = Vec::with_capacity(stride * rows);
        let p = pad as isize;
        for py in 0..rows as isize {
            let y = mirror_index(py - p, h);
            let row = img.row(y);
            for px in 0..stride as isize {
                data.push(row[mirror_index(px - p, w)]);
            }
        }
        Self { pad, stride, data }
    }

    /// Value at image coordinate `(x + dx, y + dy)`; offsets must lie within the pad.
    #[inline]
    pub(crate) fn at(&self, x: usize, y: usize, dx: isize, dy: isize) -> f64 {
        let px = (x + self.pad) as isize + dx;
        let py = (y + self.pad) as isize + dy;
        self.data[py as usize * self.stride + px as usize]
    }
}

/// Applies sparse taps at one pixel, summing in tap order.
#[inline]
pub(crate) fn apply_taps(padded: &Padded, x: usize, y: usize, taps: &[Tap]) -> f64 {
    let mut acc = 0.0;
    for t in taps {
        acc += t.weight * padded.at(x, y, t.dx, t.dy);
    }
    acc
}

/// Full convolution with a dense kernel (correlation; all kernels used here
/// are point-symmetric so the distinction is moot).
pub fn convolve(img: &Image, kernel: &Kernel) -> Image {
    let taps = kernel.taps();
    convolve_taps(img, &taps, kernel.half())
}

pub(crate) fn convolve_taps(img: &Image, taps: &[Tap], half: usize) -> Image {
    let padded = Padded::new(img, half);
    let (w, h) = img.shape();
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            *o = apply_taps(&padded, x, y, taps);
        }
    });
    Image::from_raw(w, h, out)
}

/// 1D symmetric convolution along rows. `taps[0]` is the centre weight and
/// `taps[j]` the weight at both `+j` and `-j`. Mirrored pairs are added before
/// weighting, which makes the result bit-exactly equivariant under flips.
pub fn convolve_rows_symmetric(img: &Image, taps: &[f64]) -> Image {
    let (w, h) = img.shape();
    let rad = taps.len() - 1;
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, orow)| {
        let src = img.row(y);
        let buf: Vec<f64> = (0..w + 2 * rad)
            .map(|i| src[mirror_index(i as isize - rad as isize, w)])
            .collect();
        for (x, o) in orow.iter_mut().enumerate() {
            let c = x + rad;
            let mut acc = taps[0] * buf[c];
            for (j, &t) in taps.iter().enumerate().skip(1) {
                acc += t * (buf[c - j] + buf[c + j]);
            }
            *o = acc;
        }
    });
    Image::from_raw(w, h, out)
}

/// Column counterpart of [`convolve_rows_symmetric`], with identical
/// arithmetic order so that `cols(f)` equals `transpose(rows(transpose(f)))`
/// bit for bit.
pub fn convolve_cols_symmetric(img: &Image, taps: &[f64]) -> Image {
    let (w, h) = img.shape();
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, orow)| {
        let yi = y as isize;
        let centre = img.row(y);
        for (o, &c) in orow.iter_mut().zip(centre) {
            *o = taps[0] * c;
        }
        for (j, &t) in taps.iter().enumerate().skip(1) {
            let up = img.row(mirror_index(yi - j as isize, h));
            let down = img.row(mirror_index(yi + j as isize, h));
            for x in 0..w {
                orow[x] += t * (up[x] + down[x]);
            }
        }
    });
    Image::from_raw(w, h, out)
}

/// Separable symmetric smoothing, averaged over both pass orders so the
/// result commutes exactly with transposition as well as flips.
pub fn separable_symmetric(img: &Image, taps: &[f64]) -> Image {
    let hv = convolve_cols_symmetric(&convolve_rows_symmetric(img, taps), taps);
    let vh = convolve_rows_symmetric(&convolve_cols_symmetric(img, taps), taps);
    let data = hv
        .data
        .par_iter()
        .zip(vh.data.par_iter())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    Image::from_raw(img.width, img.height, data)
}

/// Unit-sum box (mean) filter of odd side.
pub fn box_mean(img: &Image, side: usize) -> Image {
    debug_assert!(side % 2 == 1);
    let taps = vec![1.0 / side as f64; side / 2 + 1];
    convolve_cols_symmetric(&convolve_rows_symmetric(img, &taps), &taps)
}

pub(crate) fn require_odd(name: &str, value: usize, min: usize) -> Result<()> {
    if value.is_multiple_of(2) || value < min {
        return Err(invalid(format!("{name} must be odd and >= {min}, got {value}")));
    }
    Ok(())
}
