//! Detection heads that turn a filtered feature image into a curve map:
//! histogram (Otsu) and fixed thresholds, and a patch logistic classifier.

use std::fmt::Write as _;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::image::{require_odd, Image, Padded};

pub const DEFAULT_THRESHOLD: f64 = 0.1;
pub const DEFAULT_PATCH_SIDE: usize = 9;
pub const DEFAULT_EPOCHS: usize = 500;
pub const DEFAULT_LEARNING_RATE: f64 = 0.1;

const OTSU_BINS: usize = 256;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMap {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMap {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if width == 0 || height == 0 || bits.len() != width * height {
            return Err(invalid(format!(
                "binary map {width}x{height} needs {} bits, got {}",
                width * height,
                bits.len()
            )));
        }
        Ok(Self { width, height, bits })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    /// `true` where the image is strictly above `t`.
    pub fn from_image(img: &Image, t: f64) -> Self {
        Self {
            width: img.width(),
            height: img.height(),
            bits: img.data().iter().map(|&v| v > t).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Coordinates of set pixels in raster order.
    pub fn positives(&self) -> Vec<(usize, usize)> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| (i % self.width, i / self.width))
            .collect()
    }

    pub fn to_image(&self) -> Image {
        let data = self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        Image::from_raw(self.width, self.height, data)
    }
}

#[inline]
fn otsu_bin(v: f64) -> usize {
    ((v.clamp(0.0, 1.0) * OTSU_BINS as f64) as usize).min(OTSU_BINS - 1)
}

/// Otsu split over a 256-bin histogram of `[0, 1]`.
///
/// Returns the index `k` of the last bin in the dark class, maximising the
/// between-class variance (first maximum on ties), or `None` when every
/// split leaves a class empty or has zero variance.
pub fn otsu_split(img: &Image) -> Option<usize> {
    let mut hist = [0u64; OTSU_BINS];
    for &v in img.data() {
        hist[otsu_bin(v)] += 1;
    }
    let total = img.len() as f64;
    let centre = |b: usize| (b as f64 + 0.5) / OTSU_BINS as f64;
    let sum_all: f64 = hist.iter().enumerate().map(|(b, &c)| c as f64 * centre(b)).sum();

    let mut best: Option<(usize, f64)> = None;
    let (mut w0, mut sum0) = (0.0, 0.0);
    for (k, &count) in hist.iter().enumerate().take(OTSU_BINS - 1) {
        w0 += count as f64;
        sum0 += count as f64 * centre(k);
        let w1 = total - w0;
        if w0 == 0.0 || w1 == 0.0 {
            continue;
        }
        let mu0 = sum0 / w0;
        let mu1 = (sum_all - sum0) / w1;
        let between = (w0 / total) * (w1 / total) * (mu0 - mu1) * (mu0 - mu1);
        if between > 0.0 && best.is_none_or(|(_, b)| between > b) {
            best = Some((k, between));
        }
    }
    best.map(|(k, _)| k)
}

/// Threshold value corresponding to an Otsu split: pixels at or above it
/// fall in the bright class.
pub fn otsu_level(img: &Image) -> Option<f64> {
    otsu_split(img).map(|k| (k + 1) as f64 / OTSU_BINS as f64)
}

/// Otsu binarisation; a degenerate (constant) image yields an all-zero map.
pub fn otsu_threshold(img: &Image) -> BinaryMap {
    match otsu_split(img) {
        Some(k) => BinaryMap {
            width: img.width(),
            height: img.height(),
            bits: img.data().iter().map(|&v| otsu_bin(v) > k).collect(),
        },
        None => BinaryMap::zeros(img.width(), img.height()),
    }
}

pub fn fixed_threshold(img: &Image, t: f64) -> Result<BinaryMap> {
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid(format!("threshold must lie in [0, 1], got {t}")));
    }
    Ok(BinaryMap::from_image(img, t))
}

/// Flattened square patches with binary labels.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchSet {
    side: usize,
    features: Vec<f64>,
    labels: Vec<bool>,
}

impl PatchSet {
    pub fn new(side: usize) -> Self {
        Self {
            side,
            features: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.side * self.side
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim()..(i + 1) * self.dim()]
    }

    pub fn push(&mut self, patch: &[f64], label: bool) -> Result<()> {
        if patch.len() != self.dim() {
            return Err(invalid(format!(
                "patch has {} values, expected {}",
                patch.len(),
                self.dim()
            )));
        }
        self.features.extend_from_slice(patch);
        self.labels.push(label);
        Ok(())
    }

    pub fn extend(&mut self, other: &PatchSet) -> Result<()> {
        if other.side != self.side {
            return Err(invalid("cannot merge patch sets of different sides"));
        }
        self.features.extend_from_slice(&other.features);
        self.labels.extend_from_slice(&other.labels);
        Ok(())
    }

    pub fn count_positive(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

fn extract_patch(padded: &Padded, x: usize, y: usize, side: usize, out: &mut Vec<f64>) {
    let h = (side / 2) as isize;
    for dy in -h..=h {
        for dx in -h..=h {
            out.push(padded.at(x, y, dx, dy));
        }
    }
}

/// Balanced patch sample: `n/2` patches centred on truth pixels and the rest
/// on background, drawn without replacement.
pub fn sample_patches(
    feature: &Image,
    truth: &BinaryMap,
    side: usize,
    n: usize,
    seed: u64,
) -> Result<PatchSet> {
    require_odd("patch side", side, 1)?;
    if feature.shape() != truth.shape() {
        return Err(Error::ShapeMismatch {
            expected: feature.shape(),
            actual: truth.shape(),
        });
    }
    let n_pos = n / 2;
    let n_neg = n - n_pos;
    let w = feature.width();
    let (pos, neg): (Vec<usize>, Vec<usize>) = (0..truth.bits.len()).partition(|&i| truth.bits[i]);
    if pos.len() < n_pos {
        return Err(Error::InsufficientClass {
            class: "positive",
            needed: n_pos,
            available: pos.len(),
        });
    }
    if neg.len() < n_neg {
        return Err(Error::InsufficientClass {
            class: "negative",
            needed: n_neg,
            available: neg.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let padded = Padded::new(feature, side / 2);
    let mut set = PatchSet::new(side);
    let mut buf = Vec::with_capacity(side * side);
    for (pool, amount, label) in [(&pos, n_pos, true), (&neg, n_neg, false)] {
        for i in index::sample(&mut rng, pool.len(), amount) {
            let p = pool[i];
            buf.clear();
            extract_patch(&padded, p % w, p / w, side, &mut buf);
            set.push(&buf, label)?;
        }
    }
    Ok(set)
}

/// Sigmoid classifier over a `side x side` patch; the bias is the last weight.
#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    side: usize,
    weights: Vec<f64>,
}

const MODEL_MAGIC: &str = "fdif-logistic-model";
const MODEL_VERSION: u32 = 1;

impl LogisticModel {
    pub fn new(side: usize, weights: Vec<f64>) -> Result<Self> {
        require_odd("patch side", side, 1)?;
        if weights.len() != side * side + 1 {
            return Err(invalid(format!(
                "model for side {side} needs {} weights, got {}",
                side * side + 1,
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(invalid("model weights must be finite"));
        }
        Ok(Self { side, weights })
    }

    pub fn zeros(side: usize) -> Self {
        Self {
            side,
            weights: vec![0.0; side * side + 1],
        }
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        *self.weights.last().unwrap()
    }

    #[inline]
    pub fn logit(&self, patch: &[f64]) -> f64 {
        logit(&self.weights, patch)
    }

    pub fn predict_patch(&self, patch: &[f64]) -> f64 {
        sigmoid(self.logit(patch))
    }

    /// Fraction of patches whose 0.5-thresholded prediction matches the label.
    pub fn accuracy(&self, data: &PatchSet) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let correct = (0..data.len())
            .filter(|&i| (self.logit(data.patch(i)) > 0.0) == data.labels()[i])
            .count();
        correct as f64 / data.len() as f64
    }

    /// Text form: magic and version, side, weight count, then one weight per
    /// line in shortest round-trip decimal.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{MODEL_MAGIC} {MODEL_VERSION}");
        let _ = writeln!(s, "side {}", self.side);
        let _ = writeln!(s, "weights {}", self.weights.len());
        for w in &self.weights {
            let _ = writeln!(s, "{w}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let err = |line: usize, message: String| Error::ModelFormat { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

        let (ln, header) = lines.next().ok_or_else(|| err(1, "empty model file".into()))?;
        let mut parts = header.split_whitespace();
        if parts.next() != Some(MODEL_MAGIC) {
            return Err(err(ln, format!("missing '{MODEL_MAGIC}' header")));
        }
        let version: u32 = parts
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| err(ln, "missing format version".into()))?;
        if version != MODEL_VERSION || parts.next().is_some() {
            return Err(err(ln, format!("unsupported format version {version}")));
        }

        let mut field = |name: &str| -> Result<usize> {
            let (ln, l) = lines
                .next()
                .ok_or_else(|| err(0, format!("missing '{name}' line")))?;
            let mut p = l.split_whitespace();
            if p.next() != Some(name) {
                return Err(err(ln, format!("expected '{name}'")));
            }
            let v = p
                .next()
                .and_then(|v| v.parse::<usize>().ok())
                .ok_or_else(|| err(ln, format!("bad '{name}' value")))?;
            if p.next().is_some() {
                return Err(err(ln, format!("trailing data after '{name}'")));
            }
            Ok(v)
        };
        let side = field("side")?;
        let count = field("weights")?;
        if side % 2 == 0 || side > 255 {
            return Err(err(2, format!("side must be odd and at most 255, got {side}")));
        }
        if count != side * side + 1 {
            return Err(err(3, format!("side {side} needs {} weights, header says {count}", side * side + 1)));
        }
        let mut weights = Vec::with_capacity(count);
        for (ln, l) in lines {
            if l.is_empty() {
                continue;
            }
            if weights.len() == count {
                return Err(err(ln, "more weights than declared".into()));
            }
            let w: f64 = l.parse().map_err(|_| err(ln, format!("bad weight '{l}'")))?;
            if !w.is_finite() {
                return Err(err(ln, "weight is not finite".into()));
            }
            weights.push(w);
        }
        if weights.len() != count {
            return Err(err(0, format!("expected {count} weights, found {}", weights.len())));
        }
        Ok(Self { side, weights })
    }
}

#[inline]
fn logit(weights: &[f64], patch: &[f64]) -> f64 {
    let (w, bias) = weights.split_at(weights.len() - 1);
    let mut z = bias[0];
    for (a, b) in w.iter().zip(patch) {
        z += a * b;
    }
    z
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Fixed-size chunks keep the reduction order independent of thread count.
const GRAD_CHUNK: usize = 2048;

/// Mean binary cross-entropy and its gradient with respect to the weights.
pub fn loss_and_gradient(weights: &[f64], data: &PatchSet) -> (f64, Vec<f64>) {
    let dim = weights.len();
    let partials: Vec<(f64, Vec<f64>)> = (0..data.len())
        .collect::<Vec<_>>()
        .par_chunks(GRAD_CHUNK)
        .map(|idx| {
            let mut loss = 0.0;
            let mut grad = vec![0.0; dim];
            for &i in idx {
                let x = data.patch(i);
                let y = if data.labels()[i] { 1.0 } else { 0.0 };
                let z = logit(weights, x);
                loss += softplus(z) - y * z;
                let r = sigmoid(z) - y;
                for (g, v) in grad.iter_mut().zip(x) {
                    *g += r * v;
                }
                grad[dim - 1] += r;
            }
            (loss, grad)
        })
        .collect();
    let n = data.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; dim];
    for (l, g) in partials {
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    grad.iter_mut().for_each(|g| *g /= n);
    (loss / n, grad)
}

pub fn mean_loss(weights: &[f64], data: &PatchSet) -> f64 {
    loss_and_gradient(weights, data).0
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LogisticModel,
    /// Loss before training followed by the loss after every epoch.
    pub losses: Vec<f64>,
}

/// Full-batch gradient descent from zero. A step that would raise the loss
/// is retried with half the learning rate; the reduced rate is kept.
pub fn train_logistic(data: &PatchSet, epochs: usize, learning_rate: f64) -> Result<TrainOutcome> {
    if data.is_empty() {
        return Err(invalid("training data is empty"));
    }
    let pos = data.count_positive();
    if pos == 0 || pos == data.len() {
        return Err(invalid("training data must contain both classes"));
    }
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(invalid(format!("learning rate must be positive, got {learning_rate}")));
    }
    let mut weights = vec![0.0; data.dim() + 1];
    let mut lr = learning_rate;
    let (mut loss, mut grad) = loss_and_gradient(&weights, data);
    let mut losses = vec![loss];
    for _ in 0..epochs {
        let mut accepted = false;
        while lr > 1e-12 {
            let trial: Vec<f64> = weights.iter().zip(&grad).map(|(w, g)| w - lr * g).collect();
            let (trial_loss, trial_grad) = loss_and_gradient(&trial, data);
            if trial_loss <= loss {
                weights = trial;
                loss = trial_loss;
                grad = trial_grad;
                accepted = true;
                break;
            }
            lr *= 0.5;
        }
        losses.push(loss);
        if !accepted {
            break;
        }
    }
    Ok(TrainOutcome {
        model: LogisticModel::new(data.side(), weights)?,
        losses,
    })
}

/// Dense per-pixel probability map: every pixel classified from the patch
/// centred on it.
pub fn predict_map(model: &LogisticModel, feature: &Image) -> Result<Image> {
    let side = model.side();
    let padded = Padded::new(feature, side / 2);
    let (w, h) = feature.shape();
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        let mut buf = Vec::with_capacity(side * side);
        for (x, o) in row.iter_mut().enumerate() {
            buf.clear();
            extract_patch(&padded, x, y, side, &mut buf);
            *o = model.predict_patch(&buf);
        }
    });
    Ok(Image::from_raw(w, h, out))
}
