//! Local orientation from the structure tensor, and the oriented line
//! kernels used for anisotropic filtering.
//!
//! Angles follow the usual mathematical convention with the vertical axis
//! pointing *up*: orientation `theta` is the line direction
//! `(cos theta, sin theta)`, so `theta = 0` is horizontal and
//! `theta = pi/4` runs from bottom-left to top-right on screen. Orientations
//! are taken modulo `pi`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::image::{
    apply_taps, box_mean, mirror_index, require_odd, separable_symmetric, Image, Kernel, Padded, Tap,
};

pub const DEFAULT_BANK_SIZE: usize = 30;
pub const DEFAULT_KERNEL_SIDE: usize = 9;
pub const DEFAULT_WINDOW: usize = 7;
pub const DEFAULT_GRADIENT_SIGMA: f64 = 1.0;

/// Per-pixel structure orientation in `[0, pi)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionField {
    theta: Image,
}

impl DirectionField {
    pub fn new(theta: Image) -> Result<Self> {
        if theta.data().iter().any(|t| !(0.0..PI).contains(t)) {
            return Err(invalid("orientations must lie in [0, pi)"));
        }
        Ok(Self { theta })
    }

    pub fn uniform(width: usize, height: usize, theta: f64) -> Self {
        Self {
            theta: Image::filled(width, height, normalize_angle(theta)),
        }
    }

    pub fn theta(&self) -> &Image {
        &self.theta
    }

    pub fn shape(&self) -> (usize, usize) {
        self.theta.shape()
    }

    /// Replace every angle by the nearest of `k pi / n`.
    pub fn snapped(&self, n: usize) -> DirectionField {
        let step = PI / n as f64;
        let theta = self.theta.map(|t| {
            let k = (t / step).round() as usize % n;
            k as f64 * step
        });
        DirectionField { theta }
    }
}

/// Maps any angle to `[0, pi)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(PI);
    if t >= PI {
        0.0
    } else {
        t
    }
}

fn gaussian_sigma_taps(sigma: f64) -> Vec<f64> {
    let rad = (3.0 * sigma).ceil().max(1.0) as usize;
    let raw: Vec<f64> = (0..=rad)
        .map(|j| (-((j * j) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total = raw[0] + 2.0 * raw[1..].iter().sum::<f64>();
    raw.into_iter().map(|v| v / total).collect()
}

/// Structure-tensor orientation field.
///
/// Gradients are central differences of the `sigma`-smoothed image; their
/// outer products are summed over a `window x window` neighbourhood. The
/// leading eigenvector of that 2x2 tensor is the gradient direction; the
/// stored angle is the perpendicular, i.e. the direction the structure runs.
pub fn direction_field(img: &Image, window: usize, sigma: f64) -> Result<DirectionField> {
    require_odd("window", window, 3)?;
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid(format!("sigma must be positive, got {sigma}")));
    }
    let smooth = separable_symmetric(img, &gaussian_sigma_taps(sigma));
    let (w, h) = img.shape();
    let mut gxx = vec![0.0; w * h];
    let mut gyy = vec![0.0; w * h];
    let mut gxy = vec![0.0; w * h];
    gxx.par_chunks_mut(w)
        .zip(gyy.par_chunks_mut(w))
        .zip(gxy.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, ((rxx, ryy), rxy))| {
            let yi = y as isize;
            let above = smooth.row(mirror_index(yi - 1, h));
            let below = smooth.row(mirror_index(yi + 1, h));
            let row = smooth.row(y);
            for x in 0..w {
                let xi = x as isize;
                let gx = 0.5 * (row[mirror_index(xi + 1, w)] - row[mirror_index(xi - 1, w)]);
                // Vertical axis points up.
                let gy = 0.5 * (above[x] - below[x]);
                rxx[x] = gx * gx;
                ryy[x] = gy * gy;
                rxy[x] = gx * gy;
            }
        });
    let jxx = box_mean(&Image::from_raw(w, h, gxx), window);
    let jyy = box_mean(&Image::from_raw(w, h, gyy), window);
    let jxy = box_mean(&Image::from_raw(w, h, gxy), window);

    let theta: Vec<f64> = (0..w * h)
        .into_par_iter()
        .map(|i| tensor_orientation(jxx.data()[i], jyy.data()[i], jxy.data()[i]))
        .collect();
    Ok(DirectionField {
        theta: Image::from_raw(w, h, theta),
    })
}

/// Structure orientation for the tensor `[[xx, xy], [xy, yy]]`.
/// Flat and isotropic tensors map to 0.
pub fn tensor_orientation(xx: f64, yy: f64, xy: f64) -> f64 {
    let trace = xx + yy;
    if trace < 1e-12 {
        return 0.0;
    }
    let diff = xx - yy;
    let spread = (diff * diff + 4.0 * xy * xy).sqrt();
    if spread <= 1e-12 * trace {
        return 0.0;
    }
    let gradient = 0.5 * (2.0 * xy).atan2(diff);
    normalize_angle(gradient + FRAC_PI_2)
}

/// Cells of the two rays `theta` and `theta + pi` leaving the centre, one
/// sample per step along the major axis for `half + 1` steps each. The
/// centre is emitted once per ray. Offsets are `(dx, dy)` with rows growing
/// downwards.
pub(crate) fn ray_cells(theta: f64, half: usize) -> Vec<(isize, isize)> {
    let t = normalize_angle(theta);
    if t > FRAC_PI_2 {
        return ray_cells(PI - t, half)
            .into_iter()
            .map(|(dx, dy)| (-dx, dy))
            .collect();
    }
    let mut cells = Vec::with_capacity(2 * (half + 1));
    for i in 0..=half as isize {
        let fi = i as f64;
        let (dx, dy_up) = if t <= FRAC_PI_4 {
            (i, (fi * t.tan()).round() as isize)
        } else {
            ((fi * t.cos() / t.sin()).round() as isize, i)
        };
        cells.push((dx, -dy_up));
        cells.push((-dx, dy_up));
    }
    cells
}

/// Sparse taps of the oriented line kernel, in raster order.
pub fn line_taps(theta: f64, side: usize) -> Vec<Tap> {
    let half = side / 2;
    let weight = 1.0 / (2 * (half + 1)) as f64;
    let mut cells = ray_cells(theta, half);
    cells.sort_by_key(|&(dx, dy)| (dy, dx));
    let mut taps: Vec<Tap> = Vec::with_capacity(cells.len());
    for (dx, dy) in cells {
        match taps.last_mut() {
            Some(t) if t.dx == dx && t.dy == dy => t.weight += weight,
            _ => taps.push(Tap { dx, dy, weight }),
        }
    }
    taps
}

/// Oriented line kernel: both rays from the centre rasterised across the
/// `side x side` support, every ray sample carrying equal weight, unit sum.
pub fn directional_filter(theta: f64, side: usize) -> Result<Kernel> {
    require_odd("kernel side", side, 3)?;
    let half = side as isize / 2;
    let mut weights = vec![0.0; side * side];
    for t in line_taps(theta, side) {
        weights[((t.dy + half) as usize) * side + (t.dx + half) as usize] = t.weight;
    }
    Kernel::new(side, weights)
}

/// Oriented kernels at `theta_k = k pi / N`.
#[derive(Debug, Clone)]
pub struct FilterBank {
    kernels: Vec<Kernel>,
    angles: Vec<f64>,
    taps: Vec<Vec<Tap>>,
}

impl FilterBank {
    pub fn kernels(&self) -> &[Kernel] {
        &self.kernels
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }

    pub fn side(&self) -> usize {
        self.kernels[0].side()
    }

    pub(crate) fn taps(&self) -> &[Vec<Tap>] {
        &self.taps
    }

    /// Element-wise mean of all kernels.
    pub fn mean_kernel(&self) -> Kernel {
        let side = self.side();
        let n = self.kernels.len() as f64;
        let mut acc = vec![0.0; side * side];
        for k in &self.kernels {
            for (a, w) in acc.iter_mut().zip(k.weights()) {
                *a += w;
            }
        }
        acc.iter_mut().for_each(|a| *a /= n);
        Kernel::new(side, acc).expect("valid mean kernel")
    }
}

pub fn build_filter_bank(count: usize, side: usize) -> Result<FilterBank> {
    if count < 2 {
        return Err(invalid(format!("filter bank needs at least 2 kernels, got {count}")));
    }
    require_odd("kernel side", side, 3)?;
    let angles: Vec<f64> = (0..count).map(|k| k as f64 * PI / count as f64).collect();
    let kernels = angles
        .iter()
        .map(|&a| directional_filter(a, side))
        .collect::<Result<Vec<_>>>()?;
    let taps = angles.iter().map(|&a| line_taps(a, side)).collect();
    Ok(FilterBank { kernels, angles, taps })
}

/// Filters every pixel with the line kernel oriented along its own
/// direction-field angle.
pub fn adaptive_filter(img: &Image, field: &DirectionField, side: usize) -> Result<Image> {
    require_odd("kernel side", side, 3)?;
    img.ensure_same_shape(field.theta())?;
    let padded = Padded::new(img, side / 2);
    let (w, h) = img.shape();
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let thetas = field.theta().row(y);
        for (x, o) in row.iter_mut().enumerate() {
            let taps = line_taps(thetas[x], side);
            *o = apply_taps(&padded, x, y, &taps);
        }
    });
    Ok(Image::from_raw(w, h, out))
}
