//! Peak extraction and localization metrics.
//!
//! Detected head centers are local maxima of the localization map. A match
//! counts as a true positive at similarity level `t` when
//! `exp(−d²/(2σ²)) ≥ t`, i.e. within distance `σ·√(−2·ln t)`; AP/AR are
//! swept over levels 0.50..0.95 and averaged into mAP/mAR. A pure-distance
//! rule (one level, TP iff `d ≤ σ`) is available as an alternative.


use crate::tensor::{dims2, Tensor};
use crate::{Error, Result};

// ── Detections ───────────────────────────────────────────────────────────

/// One predicted head center with its confidence.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

/// Detections of one image, kept sorted by descending score.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DetectionSet {
    dets: Vec<Detection>,
}

impl DetectionSet {
    /// Validate scores and sort by descending score (stable).
    pub fn new(mut dets: Vec<Detection>) -> Result<Self> {
        for d in &dets {
            if !(d.score > 0.0 && d.score < 1.0) {
                return Err(Error::validation(format!(
                    "detection score {} outside (0, 1)",
                    d.score
                )));
            }
        }
        dets.sort_by(|a, b| b.score.partial_cmp(&a.score).expect("finite scores"));
        Ok(Self { dets })
    }

    pub fn detections(&self) -> &[Detection] {
        &self.dets
    }

    pub fn len(&self) -> usize {
        self.dets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dets.is_empty()
    }
}

// ── Peak extraction ──────────────────────────────────────────────────────

/// Detections = pixels ≥ `threshold` that dominate their `window`-sized
/// neighborhood: strictly greater than every neighbor, except that equal
/// values lose to a neighbor earlier in row-major order (top-left priority,
/// so a plateau yields exactly one peak).
pub fn find_peaks(map: &Tensor, threshold: f64, window: usize) -> Result<DetectionSet> {
    if window < 3 || window % 2 == 0 {
        return Err(Error::contract(format!("window must be odd and >= 3, got {window}")));
    }
    let (h, w) = dims2(map)?;
    let half = (window / 2) as isize;
    let mut dets = Vec::new();
    for r in 0..h {
        for c in 0..w {
            let v = map.at(&[r, c])?;
            if v < threshold {
                continue;
            }
            let mut is_peak = true;
            'scan: for rr in (r as isize - half).max(0)..=(r as isize + half).min(h as isize - 1)
            {
                for cc in (c as isize - half).max(0)..=(c as isize + half).min(w as isize - 1) {
                    let (rr, cc) = (rr as usize, cc as usize);
                    if rr == r && cc == c {
                        continue;
                    }
                    let u = map.at(&[rr, cc])?;
                    let earlier = (rr, cc) < (r, c);
                    if u > v || (u == v && earlier) {
                        is_peak = false;
                        break 'scan;
                    }
                }
            }
            if is_peak {
                dets.push(Detection { x: c as f64, y: r as f64, score: v });
            }
        }
    }
    DetectionSet::new(dets)
}

// ── Matching ─────────────────────────────────────────────────────────────

/// Outcome of greedy matching.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchResult {
    pub tp: usize,
    pub fp: usize,
    pub missed: usize,
    /// `(detection index, ground-truth index)` pairs in match order.
    pub pairs: Vec<(usize, usize)>,
}

/// Greedy matching: walk detections by descending score; each takes the
/// nearest unmatched ground truth within `max_dist` (ties broken by lower
/// ground-truth index).
pub fn match_detections(
    dets: &DetectionSet,
    gts: &[(f64, f64)],
    max_dist: f64,
) -> MatchResult {
    let mut taken = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for (di, d) in dets.detections().iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for (gi, &(gx, gy)) in gts.iter().enumerate() {
            if taken[gi] {
                continue;
            }
            let dist = ((d.x - gx).powi(2) + (d.y - gy).powi(2)).sqrt();
            if dist <= max_dist && best.is_none_or(|(bd, _)| dist < bd) {
                best = Some((dist, gi));
            }
        }
        if let Some((_, gi)) = best {
            taken[gi] = true;
            pairs.push((di, gi));
        }
    }
    let tp = pairs.len();
    MatchResult { tp, fp: dets.len() - tp, missed: gts.len() - tp, pairs }
}

// ── AP / AR ──────────────────────────────────────────────────────────────

/// Evaluation σ values.
pub const SIGMAS: [f64; 3] = [5.0, 20.0, 40.0];

/// Similarity levels 0.50, 0.55, …, 0.95.
pub fn similarity_levels() -> Vec<f64> {
    (10..20).map(|i| i as f64 / 20.0).collect()
}

/// Distance at which `exp(−d²/(2σ²))` equals level `t`.
pub fn level_distance(sigma: f64, t: f64) -> f64 {
    sigma * (-2.0 * t.ln()).sqrt()
}

/// AP/AR per similarity level plus their means.
#[derive(Clone, Debug, PartialEq)]
pub struct ApAr {
    pub levels: Vec<f64>,
    pub ap: Vec<f64>,
    pub ar: Vec<f64>,
    pub map: f64,
    pub mar: f64,
}

/// Pool per-image detections (descending score), flag TPs by per-image
/// greedy matching at `max_dist`, and integrate the precision-recall curve
/// over score ranks.
fn ap_ar_at_distance(
    dets_per_image: &[DetectionSet],
    gts_per_image: &[Vec<(f64, f64)>],
    max_dist: f64,
) -> (f64, f64) {
    let g_total: usize = gts_per_image.iter().map(Vec::len).sum();
    // (score, image, rank, is_tp) pooled across images.
    let mut pooled: Vec<(f64, usize, usize, bool)> = Vec::new();
    for (img, (dets, gts)) in dets_per_image.iter().zip(gts_per_image).enumerate() {
        let matched = match_detections(dets, gts, max_dist);
        let mut is_tp = vec![false; dets.len()];
        for &(di, _) in &matched.pairs {
            is_tp[di] = true;
        }
        for (rank, d) in dets.detections().iter().enumerate() {
            pooled.push((d.score, img, rank, is_tp[rank]));
        }
    }
    if g_total == 0 {
        let clean = pooled.is_empty();
        return (f64::from(clean), f64::from(clean));
    }
    pooled.sort_by(|a, b| {
        b.0.partial_cmp(&a.0).expect("finite scores").then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    });
    let mut tp = 0usize;
    let mut ap = 0.0;
    for (k, &(_, _, _, hit)) in pooled.iter().enumerate() {
        if hit {
            tp += 1;
            ap += tp as f64 / (k + 1) as f64;
        }
    }
    (ap / g_total as f64, tp as f64 / g_total as f64)
}

/// Similarity-level sweep at the given σ.
pub fn ap_ar(
    dets_per_image: &[DetectionSet],
    gts_per_image: &[Vec<(f64, f64)>],
    sigma: f64,
) -> Result<ApAr> {
    if dets_per_image.len() != gts_per_image.len() {
        return Err(Error::contract("detections and ground truths cover different image counts"));
    }
    let levels = similarity_levels();
    let mut ap = Vec::with_capacity(levels.len());
    let mut ar = Vec::with_capacity(levels.len());
    for &t in &levels {
        let (a, r) = ap_ar_at_distance(dets_per_image, gts_per_image, level_distance(sigma, t));
        ap.push(a);
        ar.push(r);
    }
    let n = levels.len() as f64;
    let (map, mar) = (ap.iter().sum::<f64>() / n, ar.iter().sum::<f64>() / n);
    Ok(ApAr { levels, ap, ar, map, mar })
}

/// Pure-distance rule: one level, TP iff `d ≤ σ`.
pub fn ap_ar_distance_mode(
    dets_per_image: &[DetectionSet],
    gts_per_image: &[Vec<(f64, f64)>],
    sigma: f64,
) -> Result<ApAr> {
    if dets_per_image.len() != gts_per_image.len() {
        return Err(Error::contract("detections and ground truths cover different image counts"));
    }
    let (ap, ar) = ap_ar_at_distance(dets_per_image, gts_per_image, sigma);
    Ok(ApAr { levels: vec![sigma], ap: vec![ap], ar: vec![ar], map: ap, mar: ar })
}

// ── Counting ─────────────────────────────────────────────────────────────

/// `(MAE, MSE)` where MAE is the mean absolute count error and MSE the
/// root-mean-square count error.
pub fn counting_metrics(predicted: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    if predicted.len() != truth.len() {
        return Err(Error::contract("count lists differ in length"));
    }
    if predicted.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n = predicted.len() as f64;
    let mae = predicted.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    let mse =
        (predicted.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n).sqrt();
    Ok((mae, mse))
}

// ── Report ───────────────────────────────────────────────────────────────

/// Full metric table: one AP/AR sweep per σ plus counting errors.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub per_sigma: Vec<(f64, ApAr)>,
    pub mae: f64,
    pub mse: f64,
}

impl MetricReport {
    /// Rows `sigma,level,AP,AR`, per-σ `mean` summary rows, then counting
    /// rows.
    pub fn write_csv(&self, w: &mut impl std::io::Write) -> Result<()> {
        writeln!(w, "sigma,level,AP,AR")?;
        for (sigma, block) in &self.per_sigma {
            for ((t, ap), ar) in block.levels.iter().zip(&block.ap).zip(&block.ar) {
                writeln!(w, "{sigma},{t},{ap},{ar}")?;
            }
            writeln!(w, "{sigma},mean,{},{}", block.map, block.mar)?;
        }
        writeln!(w, "counting,MAE,{},", self.mae)?;
        writeln!(w, "counting,MSE,{},", self.mse)?;
        Ok(())
    }
}

/// Evaluate detections against ground truths at every σ in [`SIGMAS`] and
/// attach counting metrics (predicted count = detections per image).
pub fn metric_report(
    dets_per_image: &[DetectionSet],
    gts_per_image: &[Vec<(f64, f64)>],
    distance_mode: bool,
) -> Result<MetricReport> {
    let mut per_sigma = Vec::new();
    for &sigma in &SIGMAS {
        let block = if distance_mode {
            ap_ar_distance_mode(dets_per_image, gts_per_image, sigma)?
        } else {
            ap_ar(dets_per_image, gts_per_image, sigma)?
        };
        per_sigma.push((sigma, block));
    }
    let predicted: Vec<f64> = dets_per_image.iter().map(|d| d.len() as f64).collect();
    let truth: Vec<f64> = gts_per_image.iter().map(|g| g.len() as f64).collect();
    let (mae, mse) = counting_metrics(&predicted, &truth)?;
    Ok(MetricReport { per_sigma, mae, mse })
}
