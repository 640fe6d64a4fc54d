//! Synthetic fixtures: fractal curves, line rasters, textures and labelled
//! curve datasets. Everything is deterministic given its seed.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::detect::BinaryMap;
use crate::direction::ray_cells;
use crate::image::{separable_symmetric, Image};

/// Rasterises the segment `p0 -> p1` with one sample per unit step along
/// the major axis.
pub fn draw_segment(img: &mut Image, p0: (f64, f64), p1: (f64, f64), value: f64) {
    let (dx, dy) = (p1.0 - p0.0, p1.1 - p0.1);
    let steps = dx.abs().max(dy.abs()).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = (p0.0 + t * dx).round();
        let y = (p0.1 + t * dy).round();
        if x >= 0.0 && y >= 0.0 && (x as usize) < img.width() && (y as usize) < img.height() {
            img.set(x as usize, y as usize, value);
        }
    }
}

pub fn draw_polyline(img: &mut Image, points: &[(f64, f64)], value: f64) {
    for pair in points.windows(2) {
        draw_segment(img, pair[0], pair[1], value);
    }
}

/// Vertices of a Von Koch curve of the given construction level between two
/// end points. Bumps point to the left of the travel direction.
pub fn koch_polyline(start: (f64, f64), end: (f64, f64), level: usize) -> Vec<(f64, f64)> {
    let mut pts = vec![start, end];
    for _ in 0..level {
        let mut next = Vec::with_capacity(pts.len() * 4);
        for pair in pts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let d = ((b.0 - a.0) / 3.0, (b.1 - a.1) / 3.0);
            let p1 = (a.0 + d.0, a.1 + d.1);
            let p3 = (a.0 + 2.0 * d.0, a.1 + 2.0 * d.1);
            // Rotate the middle third by -60 degrees (image rows grow down).
            let (c, s) = ((PI / 3.0).cos(), -(PI / 3.0).sin());
            let p2 = (p1.0 + d.0 * c - d.1 * s, p1.1 + d.0 * s + d.1 * c);
            next.extend_from_slice(&[a, p1, p2, p3]);
        }
        next.push(*pts.last().unwrap());
        pts = next;
    }
    pts
}

/// White Von Koch curve on black, spanning most of a `size x size` image.
pub fn koch_image(size: usize, level: usize) -> (Image, BinaryMap) {
    let margin = size as f64 * 0.03;
    let base_y = size as f64 * 0.62;
    let pts = koch_polyline((margin, base_y), (size as f64 - 1.0 - margin, base_y), level);
    let mut img = Image::zeros(size, size);
    draw_polyline(&mut img, &pts, 1.0);
    let mask = BinaryMap::from_image(&img, 0.5);
    (img, mask)
}

/// Draws the full line through pixel `centre` at `theta`, sampled exactly
/// like the oriented filter kernels (one cell per major-axis step, rounded
/// from the centre outwards).
pub fn draw_line_through(img: &mut Image, centre: (usize, usize), theta: f64, value: f64) {
    let reach = img.width() + img.height();
    for (dx, dy) in ray_cells(theta, reach) {
        let (x, y) = (centre.0 as isize + dx, centre.1 as isize + dy);
        if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
            img.set(x as usize, y as usize, value);
        }
    }
}

/// Straight white line through the centre pixel at `theta` (vertical axis up).
pub fn line_image(width: usize, height: usize, theta: f64) -> (Image, BinaryMap) {
    let mut img = Image::zeros(width, height);
    draw_line_through(&mut img, (width / 2, height / 2), theta, 1.0);
    let mask = BinaryMap::from_image(&img, 0.5);
    (img, mask)
}

/// Stripes running along `theta`: intensity varies only across them.
pub fn stripes(width: usize, height: usize, theta: f64, period: f64) -> Image {
    let (nx, ny) = (-theta.sin(), theta.cos());
    Image::from_fn(width, height, |x, y| {
        let along_normal = nx * x as f64 + ny * -(y as f64);
        0.5 + 0.5 * (2.0 * PI * along_normal / period).sin()
    })
}

/// Band-limited random texture with unit-scale contrast around `mean`.
pub fn texture(width: usize, height: usize, mean: f64, contrast: f64, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let white = Image::from_fn(width, height, |_, _| normal.sample(&mut rng));
    let taps = [0.26, 0.21, 0.11, 0.04, 0.01];
    let smooth = separable_symmetric(&white, &taps);
    let (lo, hi) = smooth.min_max();
    let span = (hi - lo).max(1e-12);
    smooth.map(|v| mean + contrast * ((v - lo) / span - 0.5))
}

/// One labelled image of a curve-detection dataset.
#[derive(Debug, Clone)]
pub struct CurveSample {
    pub image: Image,
    pub truth: BinaryMap,
}

/// Appearance of the curve-detection fixture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveStyle {
    pub texture_mean: f64,
    pub texture_contrast: f64,
    /// Intensity added on curve pixels.
    pub curve_gain: f64,
    /// Standard deviation of the additive pixel noise.
    pub noise: f64,
}

impl Default for CurveStyle {
    fn default() -> Self {
        Self {
            texture_mean: 0.45,
            texture_contrast: 0.6,
            curve_gain: 0.25,
            noise: 0.08,
        }
    }
}

/// Texture-like images crossed by thin, gently bending bright curves.
pub fn curve_dataset(count: usize, size: usize, seed: u64) -> Vec<CurveSample> {
    (0..count)
        .map(|i| curve_sample(size, seed.wrapping_add(i as u64 * 7919)))
        .collect()
}

pub fn curve_sample(size: usize, seed: u64) -> CurveSample {
    curve_sample_with(size, seed, &CurveStyle::default())
}

/// Walks from `start` along a slowly turning heading until leaving the frame.
fn walk(start: (f64, f64), mut heading: f64, bend: f64, size: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let mut p = start;
    let mut pts = vec![p];
    while p.0 >= -2.0 && p.1 >= -2.0 && p.0 <= size + 1.0 && p.1 <= size + 1.0 && pts.len() < 8 * size as usize {
        heading += bend + rng.random_range(-0.02..0.02);
        p = (p.0 + heading.cos(), p.1 + heading.sin());
        pts.push(p);
    }
    pts
}

pub fn curve_sample_with(size: usize, seed: u64, style: &CurveStyle) -> CurveSample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background = texture(size, size, style.texture_mean, style.texture_contrast, rng.random());
    let mut curves = Image::zeros(size, size);
    let n_curves = 3 + rng.random_range(0..3);
    let s = size as f64;
    for _ in 0..n_curves {
        let start = (rng.random_range(0.2..0.8) * s, rng.random_range(0.2..0.8) * s);
        let heading = rng.random_range(0.0..2.0 * PI);
        let bend = rng.random_range(-0.03..0.03);
        let forward = walk(start, heading, bend, s, &mut rng);
        let backward = walk(start, heading + PI, -bend, s, &mut rng);
        draw_polyline(&mut curves, &forward, 1.0);
        draw_polyline(&mut curves, &backward, 1.0);
    }
    let noise = Normal::new(0.0, style.noise.max(0.0)).expect("finite noise level");
    let image = Image::from_fn(size, size, |x, y| {
        let base = background.get(x, y);
        let v = if curves.get(x, y) > 0.5 { base + style.curve_gain } else { base };
        (v + noise.sample(&mut rng)).clamp(0.0, 1.0)
    });
    CurveSample {
        image,
        truth: BinaryMap::from_image(&curves, 0.5),
    }
}

/// Lines at the given orientations through random points, on a dim
/// background.
pub fn oriented_lines(size: usize, angles: &[f64], seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = Image::filled(size, size, 0.1);
    let (lo, hi) = (size / 5, size - size / 5);
    for &theta in angles {
        let c = (rng.random_range(lo..hi), rng.random_range(lo..hi));
        draw_line_through(&mut img, c, theta, 0.9);
    }
    img
}

/// Photo-like scene: smooth illumination, a few flat shapes with edges and
/// mild texture.
pub fn photo(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tex = texture(width, height, 0.0, 0.15, rng.random());
    let shapes: Vec<(f64, f64, f64, f64)> = (0..6)
        .map(|_| {
            (
                rng.random_range(0.0..width as f64),
                rng.random_range(0.0..height as f64),
                rng.random_range(0.05..0.3) * width.min(height) as f64,
                rng.random_range(-0.35..0.35),
            )
        })
        .collect();
    let (gx, gy) = (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
    Image::from_fn(width, height, |x, y| {
        let (u, v) = (x as f64 / width as f64, y as f64 / height as f64);
        let mut val = 0.5 + gx * (u - 0.5) + gy * (v - 0.5) + tex.get(x, y);
        for &(cx, cy, r, delta) in &shapes {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            if d2 <= r * r {
                val += delta;
            }
        }
        val.clamp(0.0, 1.0)
    })
}
