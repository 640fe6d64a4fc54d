//! Oracles and fixtures shared by the integration and acceptance suites.
#![allow(dead_code)]

use fdif_core::detect::BinaryMap;
use fdif_core::eval::{self, MatchCounts, PrPoint};
use fdif_core::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn map_from_mask(w: usize, h: usize, mask: u32) -> BinaryMap {
    let bits = (0..w * h).map(|i| mask >> i & 1 == 1).collect();
    BinaryMap::new(w, h, bits).unwrap()
}

/// Maximum matching size by plain augmenting paths (Kuhn), written
/// independently of the library matcher.
pub fn optimal_matches(pred: &BinaryMap, gt: &BinaryMap, d_max: f64) -> usize {
    let p = pred.positives();
    let t = gt.positives();
    let close = |a: (usize, usize), b: (usize, usize)| {
        let dx = a.0 as f64 - b.0 as f64;
        let dy = a.1 as f64 - b.1 as f64;
        (dx * dx + dy * dy).sqrt() <= d_max
    };
    fn augment(
        i: usize,
        p: &[(usize, usize)],
        t: &[(usize, usize)],
        close: &dyn Fn((usize, usize), (usize, usize)) -> bool,
        seen: &mut [bool],
        owner: &mut [Option<usize>],
    ) -> bool {
        for j in 0..t.len() {
            if close(p[i], t[j]) && !seen[j] {
                seen[j] = true;
                if owner[j].is_none() || augment(owner[j].unwrap(), p, t, close, seen, owner) {
                    owner[j] = Some(i);
                    return true;
                }
            }
        }
        false
    }
    let mut owner = vec![None; t.len()];
    let mut size = 0;
    for i in 0..p.len() {
        let mut seen = vec![false; t.len()];
        if augment(i, &p, &t, &close, &mut seen, &mut owner) {
            size += 1;
        }
    }
    size
}

/// Exhaustive subset search for tiny instances; a second, slower oracle.
pub fn brute_force_matches(pred: &BinaryMap, gt: &BinaryMap, d_max: f64) -> usize {
    let p = pred.positives();
    let t = gt.positives();
    fn best(i: usize, used: u32, p: &[(usize, usize)], t: &[(usize, usize)], d: f64) -> usize {
        if i == p.len() {
            return 0;
        }
        let mut b = best(i + 1, used, p, t, d);
        for (j, q) in t.iter().enumerate() {
            let dist = ((p[i].0 as f64 - q.0 as f64).powi(2) + (p[i].1 as f64 - q.1 as f64).powi(2)).sqrt();
            if used >> j & 1 == 0 && dist <= d {
                b = b.max(1 + best(i + 1, used | 1 << j, p, t, d));
            }
        }
        b
    }
    best(0, 0, &p, &t, d_max)
}

pub struct EnumerationReport {
    pub pairs: u64,
    pub mismatches: u64,
    pub first_mismatch: Option<String>,
}

/// Compares the library matcher with the oracle on every pair of `w x h`
/// maps, for each distance.
pub fn enumerate_shape(w: usize, h: usize, distances: &[f64], report: &mut EnumerationReport) {
    let n = 1u32 << (w * h);
    let maps: Vec<BinaryMap> = (0..n).map(|m| map_from_mask(w, h, m)).collect();
    for &d in distances {
        for (pm, pred) in maps.iter().enumerate() {
            for (gm, gt) in maps.iter().enumerate() {
                report.pairs += 1;
                let c = eval::match_tolerant(pred, gt, d).unwrap();
                let best = optimal_matches(pred, gt, d);
                let consistent = c.fp + c.tp == pred.count_ones() && c.fn_ + c.tp == gt.count_ones();
                if c.tp != best || !consistent {
                    report.mismatches += 1;
                    report.first_mismatch.get_or_insert_with(|| {
                        format!("{w}x{h} pred {pm:#b} gt {gm:#b} d {d}: {c:?} vs optimum {best}")
                    });
                }
            }
        }
    }
}

/// Seeded random `w x h` pairs with mixed densities.
pub fn sample_shape(w: usize, h: usize, samples: usize, seed: u64, report: &mut EnumerationReport) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let distances = [0.0, 1.0, 1.5, 2.0, 3.0];
    for _ in 0..samples {
        let density = rng.random_range(0.1..0.9);
        let mut draw = || {
            let bits = (0..w * h).map(|_| rng.random_bool(density)).collect();
            BinaryMap::new(w, h, bits).unwrap()
        };
        let (pred, gt) = (draw(), draw());
        let d = distances[rng.random_range(0..distances.len())];
        report.pairs += 1;
        let c = eval::match_tolerant(&pred, &gt, d).unwrap();
        let best = optimal_matches(&pred, &gt, d);
        if c.tp != best {
            report.mismatches += 1;
            report
                .first_mismatch
                .get_or_insert_with(|| format!("{w}x{h} random pair d {d}: {c:?} vs optimum {best}"));
        }
    }
}

/// Two 4x1 images whose precision / recall table is worked out by hand:
/// at 0.3 the pooled counts are tp 3, fp 1, fn 0; at 0.7 tp 1, fp 0, fn 2.
pub fn hand_fixture() -> Vec<(Image, BinaryMap)> {
    let a = (
        Image::new(4, 1, vec![0.5, 0.5, 0.1, 0.1]).unwrap(),
        BinaryMap::new(4, 1, vec![true, true, false, false]).unwrap(),
    );
    let b = (
        Image::new(4, 1, vec![0.9, 0.5, 0.1, 0.1]).unwrap(),
        BinaryMap::new(4, 1, vec![true, false, false, false]).unwrap(),
    );
    vec![a, b]
}

pub const HAND_THRESHOLDS: [f64; 2] = [0.3, 0.7];
pub const HAND_DMAX: f64 = 0.5;
pub const HAND_ODS: f64 = 6.0 / 7.0;
pub const HAND_OIS: f64 = 1.0;
pub const HAND_AP: f64 = 11.0 / 12.0;

pub fn curves_for(images: &[(Image, BinaryMap)], thresholds: &[f64], d_max: f64) -> Vec<Vec<PrPoint>> {
    images
        .iter()
        .map(|(p, g)| eval::pr_curve(p, g, thresholds, d_max).unwrap())
        .collect()
}

/// A small random dataset of probability maps with correlated truth.
pub fn random_dataset(rng: &mut ChaCha8Rng) -> Vec<(Image, BinaryMap)> {
    let count = rng.random_range(1..5);
    (0..count)
        .map(|_| {
            let (w, h) = (rng.random_range(3..12), rng.random_range(3..12));
            let truth: Vec<bool> = (0..w * h).map(|_| rng.random_bool(0.3)).collect();
            let prob: Vec<f64> = truth
                .iter()
                .map(|&t| {
                    let base: f64 = rng.random_range(0.0..1.0);
                    if t { (base + 0.3).min(1.0) } else { base * 0.8 }
                })
                .collect();
            (Image::new(w, h, prob).unwrap(), BinaryMap::new(w, h, truth).unwrap())
        })
        .collect()
}

pub fn counts(tp: usize, fp: usize, fn_: usize) -> MatchCounts {
    MatchCounts { tp, fp, fn_ }
}
