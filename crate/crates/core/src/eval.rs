//! Boundary-style evaluation: tolerant pixel correspondence, precision /
//! recall sweeps, and the ODS / OIS / AP summaries.

use std::collections::VecDeque;
use std::fmt::Write as _;

use serde::Serialize;
use serde_json::json;

use crate::detect::{fixed_threshold, BinaryMap};
use crate::error::{invalid, Error, Result};
use crate::image::Image;

pub const DEFAULT_MAX_DISTANCE: f64 = 2.0;

/// Shared threshold grid `0.01, 0.02, ..., 0.99`.
pub fn default_thresholds() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

const NIL: usize = usize::MAX;

/// One-to-one correspondence between predicted and true positives that lie
/// within `d_max` pixels of each other.
///
/// Predictions are first matched greedily in raster order to their nearest
/// free truth pixel; augmenting paths then grow this to a maximum-cardinality
/// matching, so the counts do not depend on scan order.
pub fn match_tolerant(pred: &BinaryMap, gt: &BinaryMap, d_max: f64) -> Result<MatchCounts> {
    if pred.shape() != gt.shape() {
        return Err(Error::ShapeMismatch {
            expected: gt.shape(),
            actual: pred.shape(),
        });
    }
    if !(d_max >= 0.0 && d_max.is_finite()) {
        return Err(invalid(format!("d_max must be a finite non-negative distance, got {d_max}")));
    }
    let (w, h) = gt.shape();
    let preds = pred.positives();
    let truths = gt.positives();
    let mut truth_id = vec![NIL; w * h];
    for (i, &(x, y)) in truths.iter().enumerate() {
        truth_id[y * w + x] = i;
    }

    // Candidate truths per prediction, nearest first, raster order on ties.
    let reach = d_max.floor() as isize;
    let limit = d_max * d_max;
    let adjacency: Vec<Vec<usize>> = preds
        .iter()
        .map(|&(px, py)| {
            let mut cands: Vec<(isize, usize)> = Vec::new();
            for dy in -reach..=reach {
                for dx in -reach..=reach {
                    let d2 = dx * dx + dy * dy;
                    if d2 as f64 > limit {
                        continue;
                    }
                    let (x, y) = (px as isize + dx, py as isize + dy);
                    if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                        continue;
                    }
                    let id = truth_id[y as usize * w + x as usize];
                    if id != NIL {
                        cands.push((d2, id));
                    }
                }
            }
            cands.sort();
            cands.into_iter().map(|(_, id)| id).collect()
        })
        .collect();

    let mut pred_match = vec![NIL; preds.len()];
    let mut truth_match = vec![NIL; truths.len()];
    for (p, cands) in adjacency.iter().enumerate() {
        if let Some(&t) = cands.iter().find(|&&t| truth_match[t] == NIL) {
            pred_match[p] = t;
            truth_match[t] = p;
        }
    }
    hopcroft_karp(&adjacency, &mut pred_match, &mut truth_match);

    let tp = pred_match.iter().filter(|&&m| m != NIL).count();
    Ok(MatchCounts {
        tp,
        fp: preds.len() - tp,
        fn_: truths.len() - tp,
    })
}

/// Grows an existing matching to maximum cardinality.
fn hopcroft_karp(adj: &[Vec<usize>], pred_match: &mut [usize], truth_match: &mut [usize]) {
    const INF: usize = usize::MAX;
    let n = adj.len();
    let mut dist = vec![INF; n];
    let mut iter = vec![0usize; n];
    loop {
        // Layer the free predictions by alternating-path distance.
        let mut queue = VecDeque::new();
        for p in 0..n {
            if pred_match[p] == NIL && !adj[p].is_empty() {
                dist[p] = 0;
                queue.push_back(p);
            } else {
                dist[p] = INF;
            }
        }
        let mut free_layer = INF;
        while let Some(p) = queue.pop_front() {
            if dist[p] >= free_layer {
                continue;
            }
            for &t in &adj[p] {
                let q = truth_match[t];
                if q == NIL {
                    free_layer = free_layer.min(dist[p] + 1);
                } else if dist[q] == INF {
                    dist[q] = dist[p] + 1;
                    queue.push_back(q);
                }
            }
        }
        if free_layer == INF {
            return;
        }

        // Vertex-disjoint shortest augmenting paths, explicit-stack DFS.
        iter.iter_mut().for_each(|i| *i = 0);
        for root in 0..n {
            if pred_match[root] != NIL || dist[root] != 0 {
                continue;
            }
            let mut stack = vec![root];
            while let Some(&p) = stack.last() {
                if iter[p] == adj[p].len() {
                    dist[p] = INF;
                    stack.pop();
                    continue;
                }
                let t = adj[p][iter[p]];
                iter[p] += 1;
                let q = truth_match[t];
                if q == NIL {
                    if dist[p] + 1 == free_layer {
                        for &u in stack.iter().rev() {
                            let v = adj[u][iter[u] - 1];
                            pred_match[u] = v;
                            truth_match[v] = u;
                        }
                        for &u in &stack {
                            dist[u] = INF;
                        }
                        break;
                    }
                } else if dist[q] != INF && dist[q] == dist[p] + 1 {
                    stack.push(q);
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl PrPoint {
    pub fn from_counts(threshold: f64, tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f1 = f_measure(precision, recall);
        Self {
            threshold,
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

pub fn f_measure(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Precision / recall of `prob > t` for every threshold.
pub fn pr_curve(prob: &Image, gt: &BinaryMap, thresholds: &[f64], d_max: f64) -> Result<Vec<PrPoint>> {
    if thresholds.is_empty() {
        return Err(invalid("threshold list is empty"));
    }
    thresholds
        .iter()
        .map(|&t| {
            let pred = fixed_threshold(prob, t)?;
            let c = match_tolerant(&pred, gt, d_max)?;
            Ok(PrPoint::from_counts(t, c.tp, c.fp, c.fn_))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageSummary {
    /// Threshold maximising this image's own F-measure.
    pub best_threshold: f64,
    pub best_f1: f64,
    /// Threshold this image uses in the OIS assignment.
    pub ois_threshold: f64,
    pub curve: Vec<PrPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetMetrics {
    pub ods: f64,
    pub ods_threshold: f64,
    pub ois: f64,
    pub ap: f64,
    /// Dataset-aggregated curve, one point per threshold.
    pub aggregate: Vec<PrPoint>,
    pub per_image: Vec<ImageSummary>,
}

/// ODS, OIS and AP over per-image curves sharing one threshold grid.
pub fn dataset_metrics(curves: &[Vec<PrPoint>]) -> Result<DatasetMetrics> {
    let first = curves.first().ok_or_else(|| invalid("no images to evaluate"))?;
    if first.is_empty() {
        return Err(invalid("empty precision/recall curve"));
    }
    for c in curves {
        let same = c.len() == first.len()
            && c.iter().zip(first).all(|(a, b)| a.threshold == b.threshold);
        if !same {
            return Err(invalid("images do not share a threshold grid"));
        }
    }

    let aggregate: Vec<PrPoint> = (0..first.len())
        .map(|k| {
            let (tp, fp, fn_) = curves.iter().fold((0, 0, 0), |(a, b, c), curve| {
                (a + curve[k].tp, b + curve[k].fp, c + curve[k].fn_)
            });
            PrPoint::from_counts(first[k].threshold, tp, fp, fn_)
        })
        .collect();

    let best = |curve: &[PrPoint]| {
        curve
            .iter()
            .fold(curve[0], |b, p| if p.f1 > b.f1 { *p } else { b })
    };
    let ods_point = best(&aggregate);
    let (ois, choice) = per_image_optimum(curves, ods_point.threshold);
    let per_image: Vec<ImageSummary> = curves
        .iter()
        .zip(&choice)
        .map(|(c, &k)| {
            let b = best(c);
            ImageSummary {
                best_threshold: b.threshold,
                best_f1: b.f1,
                ois_threshold: c[k].threshold,
                curve: c.clone(),
            }
        })
        .collect();
    let ap = average_precision(&aggregate);

    Ok(DatasetMetrics {
        ods: ods_point.f1,
        ods_threshold: ods_point.threshold,
        ois,
        ap,
        aggregate,
        per_image,
    })
}

fn pooled(curves: &[Vec<PrPoint>], choice: &[usize]) -> PrPoint {
    let (tp, fp, fn_) = curves.iter().zip(choice).fold((0, 0, 0), |(a, b, c), (curve, &k)| {
        (a + curve[k].tp, b + curve[k].fp, c + curve[k].fn_)
    });
    PrPoint::from_counts(f64::NAN, tp, fp, fn_)
}

/// Best F-measure of the pooled counts when every image picks its own
/// threshold, with the chosen grid index per image.
///
/// Pooled F is `2 tp / (2 tp + fp + fn)`, a ratio of sums, so Dinkelbach
/// iteration finds the exact optimum: for a fixed level `l` each image
/// independently maximises `2 tp - l (2 tp + fp + fn)`. Starting from the
/// shared ODS threshold makes the result at least ODS.
fn per_image_optimum(curves: &[Vec<PrPoint>], ods_threshold: f64) -> (f64, Vec<usize>) {
    let start = curves[0]
        .iter()
        .position(|p| p.threshold == ods_threshold)
        .expect("ODS threshold is on the grid");
    let mut choice = vec![start; curves.len()];
    let mut level = pooled(curves, &choice).f1;
    loop {
        let next: Vec<usize> = curves
            .iter()
            .zip(&choice)
            .map(|(curve, &current)| {
                let score = |p: &PrPoint| {
                    let tp = p.tp as f64;
                    2.0 * tp - level * (2.0 * tp + p.fp as f64 + p.fn_ as f64)
                };
                let mut best = current;
                for (k, p) in curve.iter().enumerate() {
                    if score(p) > score(&curve[best]) {
                        best = k;
                    }
                }
                best
            })
            .collect();
        let f = pooled(curves, &next).f1;
        if f <= level {
            return (level, choice);
        }
        level = f;
        choice = next;
    }
}

/// Trapezoidal area under the interpolated precision envelope, where the
/// precision at recall `r` is the best precision reached at recall `>= r`.
/// The curve is extended flat to recall 0.
pub fn average_precision(points: &[PrPoint]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut pts: Vec<(f64, f64)> = points.iter().map(|p| (p.recall, p.precision)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(b.1.total_cmp(&a.1)));
    for i in (0..pts.len().saturating_sub(1)).rev() {
        pts[i].1 = pts[i].1.max(pts[i + 1].1);
    }
    let mut area = 0.0;
    let mut prev = (0.0, pts[0].1);
    for &(r, p) in &pts {
        area += (r - prev.0) * 0.5 * (p + prev.1);
        prev = (r, p);
    }
    area.clamp(0.0, 1.0)
}

/// Metrics as the versioned JSON document emitted by the CLI.
pub fn metrics_json(metrics: &DatasetMetrics, names: &[String], d_max: f64) -> serde_json::Value {
    let images: Vec<_> = metrics
        .per_image
        .iter()
        .zip(names)
        .map(|(s, name)| {
            json!({
                "name": name,
                "best_threshold": s.best_threshold,
                "best_f1": s.best_f1,
                "ois_threshold": s.ois_threshold,
                "curve": s.curve,
            })
        })
        .collect();
    json!({
        "schema": 1,
        "matcher": {
            "kind": "greedy-nearest+augmenting",
            "d_max": d_max,
        },
        "ods": metrics.ods,
        "ods_threshold": metrics.ods_threshold,
        "ois": metrics.ois,
        "ap": metrics.ap,
        "aggregate": metrics.aggregate,
        "images": images,
    })
}

/// Aligned text table: one summary row plus one row per image.
pub fn metrics_table(metrics: &DatasetMetrics, names: &[String]) -> String {
    let width = names.iter().map(|n| n.len()).max().unwrap_or(0).max(7);
    let mut s = String::new();
    let _ = writeln!(s, "{:<width$}  {:>6}  {:>6}  {:>6}", "", "ODS", "OIS", "AP");
    let _ = writeln!(
        s,
        "{:<width$}  {:>6.3}  {:>6.3}  {:>6.3}",
        "dataset", metrics.ods, metrics.ois, metrics.ap
    );
    let _ = writeln!(s);
    let _ = writeln!(s, "{:<width$}  {:>6}  {:>6}", "image", "best t", "F");
    for (summary, name) in metrics.per_image.iter().zip(names) {
        let _ = writeln!(
            s,
            "{:<width$}  {:>6.2}  {:>6.3}",
            name, summary.best_threshold, summary.best_f1
        );
    }
    s
}
