//! Iterative fractal-dimension-invariant filtering.
//!
//! One iteration: estimate the local dimension `D`, filter each pixel along
//! its structure orientation, estimate the filtered dimension `D_F`, then
//! raise the (rectified) filtered image to the per-pixel power
//! `alpha = D / D_F` while keeping the local L2 energy of the neighbourhood.

use rayon::prelude::*;

use crate::direction::{
    adaptive_filter, direction_field, DEFAULT_GRADIENT_SIGMA, DEFAULT_KERNEL_SIDE, DEFAULT_WINDOW,
};
use crate::error::{invalid, Result};
use crate::fractal::{estimate_fractal, FractalMap, DEFAULT_SCALES};
use crate::image::{require_odd, Image, Padded};

/// Denominators below this make the energy ratio fall back to 1.
const ENERGY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaClamp {
    pub min: f64,
    pub max: f64,
}

impl Default for AlphaClamp {
    fn default() -> Self {
        Self { min: 0.25, max: 4.0 }
    }
}

impl AlphaClamp {
    pub fn contains(&self, alpha: f64) -> bool {
        (self.min..=self.max).contains(&alpha)
    }

    /// `clamp(d / d_f)`, with the degenerate `0/0` case mapped to 1.
    pub fn alpha(&self, d: f64, d_f: f64) -> f64 {
        let ratio = d / d_f;
        if ratio.is_nan() {
            1.0_f64.clamp(self.min, self.max)
        } else {
            ratio.clamp(self.min, self.max)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdifConfig {
    pub iterations: usize,
    pub kernel_side: usize,
    pub scales: usize,
    pub alpha_clamp: AlphaClamp,
    /// Window of the energy norm; defaults to the kernel side.
    pub neighborhood: usize,
    pub direction_window: usize,
    pub gradient_sigma: f64,
    /// Use this constant exponent instead of `D / D_F`.
    pub alpha_override: Option<f64>,
}

impl Default for FdifConfig {
    fn default() -> Self {
        Self {
            iterations: 3,
            kernel_side: DEFAULT_KERNEL_SIDE,
            scales: DEFAULT_SCALES,
            alpha_clamp: AlphaClamp::default(),
            neighborhood: DEFAULT_KERNEL_SIDE,
            direction_window: DEFAULT_WINDOW,
            gradient_sigma: DEFAULT_GRADIENT_SIGMA,
            alpha_override: None,
        }
    }
}

impl FdifConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(invalid("iterations must be >= 1"));
        }
        require_odd("kernel side", self.kernel_side, 3)?;
        require_odd("neighborhood", self.neighborhood, 1)?;
        require_odd("direction window", self.direction_window, 3)?;
        if self.scales < 2 {
            return Err(invalid("scales must be >= 2"));
        }
        let c = self.alpha_clamp;
        if !(c.min > 0.0 && c.min <= c.max && c.max.is_finite()) {
            return Err(invalid(format!("bad alpha clamp [{}, {}]", c.min, c.max)));
        }
        if let Some(a) = self.alpha_override {
            if !(a > 0.0 && a.is_finite()) {
                return Err(invalid(format!("alpha must be positive, got {a}")));
            }
        }
        if !(self.gradient_sigma > 0.0 && self.gradient_sigma.is_finite()) {
            return Err(invalid("gradient sigma must be positive"));
        }
        Ok(())
    }
}

/// Per-pixel exponent map from the original and filtered dimensions.
pub fn alpha_map(d_orig: &FractalMap, d_filt: &FractalMap, clamp: AlphaClamp) -> Result<Image> {
    d_orig.dimension.ensure_same_shape(&d_filt.dimension)?;
    let (w, h) = d_orig.shape();
    let data = d_orig
        .dimension
        .data()
        .par_iter()
        .zip(d_filt.dimension.data().par_iter())
        .map(|(&d, &df)| clamp.alpha(d, df))
        .collect();
    Image::new(w, h, data)
}

/// `(||v(B(x))|| / ||v^a(B(x))||) * v(x)^a` with `v = max(filtered, 0)` and
/// `a = alpha(x)`; norms are L2 over the `neighborhood` window.
pub fn power_normalize(filtered: &Image, alpha: &Image, neighborhood: usize) -> Result<Image> {
    require_odd("neighborhood", neighborhood, 1)?;
    filtered.ensure_same_shape(alpha)?;
    let rect = filtered.map(|v| v.max(0.0));
    let half = (neighborhood / 2) as isize;
    let padded = Padded::new(&rect, neighborhood / 2);
    let (w, h) = filtered.shape();
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let alphas = alpha.row(y);
        for (x, o) in row.iter_mut().enumerate() {
            let a = alphas[x];
            let (mut e1, mut ea) = (0.0, 0.0);
            for dy in -half..=half {
                for dx in -half..=half {
                    let v = padded.at(x, y, dx, dy);
                    e1 += v * v;
                    let va = v.powf(a);
                    ea += va * va;
                }
            }
            let ratio = if ea.sqrt() < ENERGY_EPS {
                1.0
            } else {
                e1.sqrt() / ea.sqrt()
            };
            *o = ratio * rect.get(x, y).powf(a);
        }
    });
    Ok(Image::from_raw(w, h, out))
}

/// Dimension-preserving nonlinear transform of a filtered image.
pub fn fd_preserving_transform(
    filtered: &Image,
    d_orig: &FractalMap,
    d_filt: &FractalMap,
    neighborhood: usize,
    clamp: AlphaClamp,
) -> Result<Image> {
    filtered.ensure_same_shape(&d_orig.dimension)?;
    let alpha = alpha_map(d_orig, d_filt, clamp)?;
    power_normalize(filtered, &alpha, neighborhood)
}

/// Intermediate products of one iteration.
#[derive(Debug, Clone)]
pub struct FdifStep {
    pub input_dimension: FractalMap,
    pub filtered: Image,
    pub filtered_dimension: FractalMap,
    pub output: Image,
}

pub fn fdif_step(img: &Image, cfg: &FdifConfig) -> Result<FdifStep> {
    cfg.validate()?;
    let input_dimension = estimate_fractal(img, cfg.scales)?;
    let field = direction_field(img, cfg.direction_window, cfg.gradient_sigma)?;
    let filtered = adaptive_filter(img, &field, cfg.kernel_side)?;
    let filtered_dimension = estimate_fractal(&filtered, cfg.scales)?;
    let output = match cfg.alpha_override {
        Some(a) => {
            let alpha = Image::filled(img.width(), img.height(), a);
            power_normalize(&filtered, &alpha, cfg.neighborhood)?
        }
        None => fd_preserving_transform(
            &filtered,
            &input_dimension,
            &filtered_dimension,
            cfg.neighborhood,
            cfg.alpha_clamp,
        )?,
    };
    Ok(FdifStep {
        input_dimension,
        filtered,
        filtered_dimension,
        output,
    })
}

/// Every unclipped iterate, first iteration first.
pub fn fdif_iterates(img: &Image, cfg: &FdifConfig) -> Result<Vec<Image>> {
    cfg.validate()?;
    let mut current = img.clone();
    let mut out = Vec::with_capacity(cfg.iterations);
    for _ in 0..cfg.iterations {
        current = fdif_step(&current, cfg)?.output;
        out.push(current.clone());
    }
    Ok(out)
}

/// Full pipeline; the result is clipped to `[0, 1]`.
pub fn fdif_iterate(img: &Image, cfg: &FdifConfig) -> Result<Image> {
    let last = fdif_iterates(img, cfg)?.pop().expect("at least one iteration");
    Ok(last.clip(0.0, 1.0))
}

/// Mean of `clip(scale * img + offset, 0, 1)`.
fn clipped_mean(img: &Image, scale: f64, offset: f64) -> f64 {
    img.data().iter().map(|&v| (scale * v + offset).clamp(0.0, 1.0)).sum::<f64>() / img.len() as f64
}

/// Largest `x` in `[lo, hi]` with `f(x) <= target`, for nondecreasing `f`.
fn bisect(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Runs the pipeline, then rescales the result linearly so its clipped mean
/// equals the input mean.
///
/// The gain is found by bisection. When even saturating every positive
/// pixel cannot reach the target mean, a uniform offset makes up the rest.
pub fn stylize(img: &Image, cfg: &FdifConfig) -> Result<Image> {
    let filtered = fdif_iterate(img, cfg)?;
    let target = img.mean().clamp(0.0, 1.0);
    let positive = filtered.data().iter().filter(|&&v| v > 0.0).count() as f64 / filtered.len() as f64;
    let (scale, offset) = if positive >= target && positive > 0.0 {
        let min_positive = filtered
            .data()
            .iter()
            .copied()
            .filter(|&v| v > 0.0)
            .fold(f64::INFINITY, f64::min);
        (bisect(|s| clipped_mean(&filtered, s, 0.0), target, 0.0, 1.0 / min_positive), 0.0)
    } else {
        let scale = if positive > 0.0 {
            let max = filtered.min_max().1;
            1.0 / max
        } else {
            0.0
        };
        (scale, bisect(|b| clipped_mean(&filtered, scale, b), target, 0.0, 1.0))
    };
    Ok(filtered.map(|v| (scale * v + offset).clamp(0.0, 1.0)))
}
