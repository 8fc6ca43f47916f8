//! Executable verification of the sparse-attention error bound.
//!
//! A [`BoundTrial`] holds one query `q`, key/value matrices `K`, `V`, and a
//! kept-index subset `P`. Splitting `K = K₁ + K₂` and `V = V₁ + V₂` (rows
//! kept on `P`, zeroed elsewhere), the sparse output is `SM(qK₁ᵀ)·V₁` with
//! the softmax taken over all `n` logits — excluded rows contribute logit 0,
//! not −∞ — and the full output is `SM(qKᵀ)·V`. Neither uses `√d` scaling.
//! The claim checked numerically for every trial:
//!
//! ```text
//! ‖FA − SA‖₂  ≤  ‖qK₂ᵀ‖₂·‖V₁‖ + C·‖V₂‖,   C = ‖SM(qKᵀ)‖₂
//! ```
//!
//! Vector norms are Euclidean. Matrix norms default to Frobenius, which
//! upper-bounds the spectral norm and so keeps the inequality sound; a
//! spectral-norm variant (power iteration) is reported alongside but never
//! gated on.

use std::io::Write;

use rand::{Rng as _, RngCore as _};

use crate::error::{Error, Result};
use crate::rng::{derive_rng, standard_normal, Rng};

// ── Trial ────────────────────────────────────────────────────────────────

/// One randomized instance of the bound check.
#[derive(Clone, Debug)]
pub struct BoundTrial {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    d: usize,
    /// Per-row membership in the kept subset P.
    kept: Vec<bool>,
}

impl BoundTrial {
    /// `k` and `v` are row-major `[n, d]`; `subset` lists kept row indices
    /// (duplicates collapse, order irrelevant).
    pub fn new(q: Vec<f64>, k: Vec<f64>, v: Vec<f64>, d: usize, subset: &[usize]) -> Result<Self> {
        if d == 0 || q.len() != d {
            return Err(Error::shape(format!("query length {} does not match d={d}", q.len())));
        }
        if k.len() % d != 0 || v.len() != k.len() {
            return Err(Error::shape(format!(
                "K length {} / V length {} inconsistent with d={d}",
                k.len(),
                v.len()
            )));
        }
        let n = k.len() / d;
        if n == 0 {
            return Err(Error::EmptyKeys);
        }
        let mut kept = vec![false; n];
        for &i in subset {
            if i >= n {
                return Err(Error::index(format!("subset index {i} outside 0..{n}")));
            }
            kept[i] = true;
        }
        Ok(Self { q, k, v, d, kept })
    }

    pub fn n(&self) -> usize {
        self.kept.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn subset_size(&self) -> usize {
        self.kept.iter().filter(|&&b| b).count()
    }

    /// K with rows outside P zeroed.
    pub fn k1(&self) -> Vec<f64> {
        self.masked(&self.k, true)
    }

    /// K − K₁ (rows inside P zeroed).
    pub fn k2(&self) -> Vec<f64> {
        self.masked(&self.k, false)
    }

    pub fn v1(&self) -> Vec<f64> {
        self.masked(&self.v, true)
    }

    pub fn v2(&self) -> Vec<f64> {
        self.masked(&self.v, false)
    }

    fn masked(&self, m: &[f64], keep_in_subset: bool) -> Vec<f64> {
        let mut out = vec![0.0; m.len()];
        for (i, &in_p) in self.kept.iter().enumerate() {
            if in_p == keep_in_subset {
                out[i * self.d..(i + 1) * self.d]
                    .copy_from_slice(&m[i * self.d..(i + 1) * self.d]);
            }
        }
        out
    }

    /// Softmax weights of the full attention, `SM(qKᵀ)` (no scaling).
    pub fn full_weights(&self) -> Vec<f64> {
        softmax(&matvec_rows(&self.k, &self.q, self.d))
    }

    /// Full attention output `SM(qKᵀ)·V`.
    pub fn full_attention(&self) -> Vec<f64> {
        weighted_rows(&self.full_weights(), &self.v, self.d)
    }

    /// `C = ‖SM(qKᵀ)‖₂`, the Euclidean norm of the full weight vector.
    pub fn c(&self) -> f64 {
        norm2(&self.full_weights())
    }
}

/// Sparse attention exactly as constructed in the bound's derivation:
/// softmax of `qK₁ᵀ` over all `n` logits (zeroed rows score 0) times `V₁`.
pub fn appendix_sparse_attention(trial: &BoundTrial) -> Vec<f64> {
    let w = softmax(&matvec_rows(&trial.k1(), &trial.q, trial.d));
    weighted_rows(&w, &trial.v1(), trial.d)
}

/// `(‖FA − SA‖₂, ‖qK₂ᵀ‖₂·‖V₁‖_F + C·‖V₂‖_F)`.
pub fn attention_error_and_bound(trial: &BoundTrial) -> (f64, f64) {
    let fa = trial.full_attention();
    let sa = appendix_sparse_attention(trial);
    let error = norm2_diff(&fa, &sa);
    let qk2 = matvec_rows(&trial.k2(), &trial.q, trial.d);
    let bound = norm2(&qk2) * frobenius(&trial.v1()) + trial.c() * frobenius(&trial.v2());
    (error, bound)
}

/// Same bound with spectral matrix norms (power iteration); tighter, still
/// sound, reported for comparison only.
pub fn attention_error_and_bound_spectral(trial: &BoundTrial) -> (f64, f64) {
    let fa = trial.full_attention();
    let sa = appendix_sparse_attention(trial);
    let error = norm2_diff(&fa, &sa);
    let qk2 = matvec_rows(&trial.k2(), &trial.q, trial.d);
    let bound = norm2(&qk2) * spectral_norm(&trial.v1(), trial.d)
        + trial.c() * spectral_norm(&trial.v2(), trial.d);
    (error, bound)
}

// ── Numeric helpers ──────────────────────────────────────────────────────

/// `m·x` where `m` is row-major `[n, d]`: one dot product per row.
fn matvec_rows(m: &[f64], x: &[f64], d: usize) -> Vec<f64> {
    m.chunks_exact(d)
        .map(|row| row.iter().zip(x).map(|(&a, &b)| a * b).sum())
        .collect()
}

/// `wᵀ·m` for row-major `m`: the weighted sum of rows.
fn weighted_rows(w: &[f64], m: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for (&wi, row) in w.iter().zip(m.chunks_exact(d)) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += wi * v;
        }
    }
    out
}

fn softmax(s: &[f64]) -> Vec<f64> {
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = s.iter().map(|&x| (x - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / z).collect()
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|&v| v * v).sum::<f64>().sqrt()
}

fn norm2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn frobenius(m: &[f64]) -> f64 {
    norm2(m)
}

/// Largest singular value of a row-major `[n, d]` matrix via power
/// iteration on the `d×d` Gram matrix.
pub fn spectral_norm(m: &[f64], d: usize) -> f64 {
    let n = m.len() / d;
    let mut gram = vec![0.0; d * d];
    for row in m.chunks_exact(d) {
        for i in 0..d {
            for j in 0..d {
                gram[i * d + j] += row[i] * row[j];
            }
        }
    }
    let _ = n;
    // Slightly asymmetric start vector avoids landing orthogonal to the
    // dominant eigenvector.
    let mut x: Vec<f64> = (0..d).map(|i| 1.0 + i as f64 * 1e-3).collect();
    let mut lambda = 0.0;
    for _ in 0..200 {
        let y: Vec<f64> = (0..d)
            .map(|i| (0..d).map(|j| gram[i * d + j] * x[j]).sum())
            .collect();
        let norm = norm2(&y);
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm;
        x = y.iter().map(|&v| v / norm).collect();
    }
    lambda.sqrt()
}

// ── Randomized verification ──────────────────────────────────────────────

/// Draw one trial: `n ∈ 1..=max_n`, `d ∈ 1..=max_d`, entries uniform in
/// `[-2, 2]`, subset size uniform in `0..=n`.
pub fn random_trial(max_n: usize, max_d: usize, rng: &mut Rng) -> BoundTrial {
    let n = rng.gen_range(1..=max_n);
    let d = rng.gen_range(1..=max_d);
    let unif = |rng: &mut Rng| rng.gen_range(-2.0..2.0);
    let q: Vec<f64> = (0..d).map(|_| unif(rng)).collect();
    let k: Vec<f64> = (0..n * d).map(|_| unif(rng)).collect();
    let v: Vec<f64> = (0..n * d).map(|_| unif(rng)).collect();
    let size = rng.gen_range(0..=n);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..size {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(size);
    BoundTrial::new(q, k, v, d, &idx).expect("generated trial is valid")
}

/// One verified trial's record.
#[derive(Clone, Debug)]
pub struct BoundRow {
    pub trial_id: usize,
    pub n: usize,
    pub d: usize,
    pub subset_size: usize,
    pub strategy: String,
    pub error: f64,
    pub bound: f64,
    pub violated: bool,
}

/// Outcome of a randomized verification run.
#[derive(Clone, Debug, Default)]
pub struct BoundReport {
    pub rows: Vec<BoundRow>,
    /// Violations of the Frobenius-norm bound (the gated statement).
    pub violations: usize,
    /// Violations of the tighter spectral-norm variant (informational).
    pub spectral_violations: usize,
}

impl BoundReport {
    /// CSV with columns `trial_id,n,d,subset_size,strategy,error,bound,violated`.
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "trial_id,n,d,subset_size,strategy,error,bound,violated")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                r.trial_id,
                r.n,
                r.d,
                r.subset_size,
                r.strategy,
                r.error,
                r.bound,
                u8::from(r.violated)
            )?;
        }
        Ok(())
    }
}

/// Run `n_trials` random trials and record every error/bound pair.
pub fn run_verification(n_trials: usize, max_n: usize, max_d: usize, rng: &mut Rng) -> BoundReport {
    let mut report = BoundReport::default();
    for trial_id in 0..n_trials {
        let trial = random_trial(max_n, max_d, rng);
        let (error, bound) = attention_error_and_bound(&trial);
        let violated = error > bound;
        let (s_error, s_bound) = attention_error_and_bound_spectral(&trial);
        // Power iteration approaches the spectral norm from below, so in
        // cases where error and bound are mathematically equal (e.g. an
        // empty kept set with n = 1) the estimate can land a few ulps short.
        // Give the informational spectral check that much slack; the primary
        // Frobenius check above stays strict.
        if s_error > s_bound * (1.0 + 1e-9) + 1e-12 {
            report.spectral_violations += 1;
        }
        report.violations += usize::from(violated);
        report.rows.push(BoundRow {
            trial_id,
            n: trial.n(),
            d: trial.d(),
            subset_size: trial.subset_size(),
            strategy: "random".into(),
            error,
            bound,
            violated,
        });
    }
    report
}

// ── Tightness experiment ─────────────────────────────────────────────────

/// Feature texture for the tightness experiment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureKind {
    /// Per-cell i.i.d. noise: selection strategies are exchangeable.
    WhiteNoise,
    /// Gaussian-blurred noise (blur std 2): nearby cells carry similar
    /// features, favoring neighborhood-concentrated selection.
    Smooth,
}

/// One paired comparison: the same grid, query, and subset size, with the
/// kept set chosen by Gaussian-neighborhood vs uniform-random selection.
#[derive(Clone, Copy, Debug)]
pub struct TightnessTrial {
    pub gaussian_error: f64,
    pub gaussian_bound: f64,
    pub uniform_error: f64,
    pub uniform_bound: f64,
}

/// Aggregated per-strategy row of [`bound_tightness_report`].
#[derive(Clone, Debug)]
pub struct TightnessRow {
    pub strategy: String,
    pub mean_error: f64,
    pub mean_bound: f64,
}

/// Grid side used by the tightness experiment.
pub const TIGHTNESS_GRID: usize = 16;
/// Feature channels used by the tightness experiment. Moderate width keeps
/// chance query/key alignment small next to genuine neighborhood
/// similarity, so spatial smoothness — not sampling luck — drives the
/// comparison.
pub const TIGHTNESS_D: usize = 16;
/// Gaussian selection focus used by the tightness experiment.
pub const TIGHTNESS_GAMMA: f64 = 2.0;

/// Run paired trials on a `TIGHTNESS_GRID²` grid. Each trial builds smooth
/// or white-noise K/V maps (unit per-channel deviation), takes the query
/// feature from a random cell, and keeps `k` cells: the query cell itself
/// plus `k−1` distinct others chosen by each strategy. Both strategies see
/// the identical maps, query, and subset size.
pub fn tightness_trials(n_trials: usize, kind: FeatureKind, rng: &mut Rng) -> Vec<TightnessTrial> {
    let side = TIGHTNESS_GRID;
    let d = TIGHTNESS_D;
    let n = side * side;
    let salt = rng.next_u64();
    (0..n_trials)
        .map(|t| {
            let mut trng = derive_rng(&[salt, t as u64]);
            let k_map = feature_map(side, d, kind, &mut trng);
            let v_map = feature_map(side, d, kind, &mut trng);
            let qr = trng.gen_range(0..side);
            let qc = trng.gen_range(0..side);
            let q_cell = qr * side + qc;
            let q = k_map[q_cell * d..(q_cell + 1) * d].to_vec();
            let keep = trng.gen_range(12..=32usize);
            let gauss = select_gaussian(q_cell, keep, side, &mut trng);
            let unif = select_uniform(q_cell, keep, n, &mut trng);
            let g_trial =
                BoundTrial::new(q.clone(), k_map.clone(), v_map.clone(), d, &gauss).unwrap();
            let u_trial = BoundTrial::new(q, k_map, v_map, d, &unif).unwrap();
            let (ge, gb) = attention_error_and_bound(&g_trial);
            let (ue, ub) = attention_error_and_bound(&u_trial);
            TightnessTrial {
                gaussian_error: ge,
                gaussian_bound: gb,
                uniform_error: ue,
                uniform_bound: ub,
            }
        })
        .collect()
}

/// Mean error and bound per selection strategy over `n_trials` paired
/// trials.
pub fn bound_tightness_report(
    n_trials: usize,
    kind: FeatureKind,
    rng: &mut Rng,
) -> Vec<TightnessRow> {
    let trials = tightness_trials(n_trials, kind, rng);
    let nf = trials.len().max(1) as f64;
    let (mut ge, mut gb, mut ue, mut ub) = (0.0, 0.0, 0.0, 0.0);
    for t in &trials {
        ge += t.gaussian_error;
        gb += t.gaussian_bound;
        ue += t.uniform_error;
        ub += t.uniform_bound;
    }
    vec![
        TightnessRow {
            strategy: "gaussian".into(),
            mean_error: ge / nf,
            mean_bound: gb / nf,
        },
        TightnessRow {
            strategy: "uniform".into(),
            mean_error: ue / nf,
            mean_bound: ub / nf,
        },
    ]
}

/// Mean error per strategy over one batch of paired trials:
/// `(gaussian_mean, uniform_mean)`.
pub fn tightness_mean_errors(n_trials: usize, kind: FeatureKind, rng: &mut Rng) -> (f64, f64) {
    let trials = tightness_trials(n_trials, kind, rng);
    let nf = trials.len().max(1) as f64;
    let ge: f64 = trials.iter().map(|t| t.gaussian_error).sum();
    let ue: f64 = trials.iter().map(|t| t.uniform_error).sum();
    (ge / nf, ue / nf)
}

/// Number of repetitions (each a fresh batch of `trials_per_rep` paired
/// trials) in which the Gaussian-neighborhood mean error is strictly lower
/// than the uniform-random mean error.
pub fn tightness_repetition_wins(
    reps: usize,
    trials_per_rep: usize,
    kind: FeatureKind,
    rng: &mut Rng,
) -> usize {
    (0..reps)
        .filter(|_| {
            let (g, u) = tightness_mean_errors(trials_per_rep, kind, rng);
            g < u
        })
        .count()
}

/// Unit-deviation feature map, optionally blurred for spatial correlation.
fn feature_map(side: usize, d: usize, kind: FeatureKind, rng: &mut Rng) -> Vec<f64> {
    let mut m: Vec<f64> = (0..side * side * d).map(|_| standard_normal(rng)).collect();
    if kind == FeatureKind::Smooth {
        gaussian_blur(&mut m, side, d, 2.0);
    }
    // Normalize each channel to unit standard deviation so both textures
    // drive the softmax equally hard.
    for c in 0..d {
        let vals: Vec<f64> = (0..side * side).map(|i| m[i * d + c]).collect();
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
        let inv = 1.0 / var.sqrt().max(1e-9);
        for i in 0..side * side {
            m[i * d + c] = (m[i * d + c] - mean) * inv;
        }
    }
    m
}

/// Separable Gaussian blur with replicated borders.
fn gaussian_blur(m: &mut [f64], side: usize, d: usize, sigma: f64) {
    let radius = (3.0 * sigma).ceil() as isize;
    let weights: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let wsum: f64 = weights.iter().sum();
    let weights: Vec<f64> = weights.iter().map(|w| w / wsum).collect();
    let clamp = |x: isize| x.clamp(0, side as isize - 1) as usize;
    let mut tmp = vec![0.0; m.len()];
    // Horizontal pass.
    for r in 0..side {
        for c in 0..side {
            for ch in 0..d {
                let mut acc = 0.0;
                for (j, &w) in weights.iter().enumerate() {
                    let cc = clamp(c as isize + j as isize - radius);
                    acc += w * m[(r * side + cc) * d + ch];
                }
                tmp[(r * side + c) * d + ch] = acc;
            }
        }
    }
    // Vertical pass.
    for r in 0..side {
        for c in 0..side {
            for ch in 0..d {
                let mut acc = 0.0;
                for (j, &w) in weights.iter().enumerate() {
                    let rr = clamp(r as isize + j as isize - radius);
                    acc += w * tmp[(rr * side + c) * d + ch];
                }
                m[(r * side + c) * d + ch] = acc;
            }
        }
    }
}

/// The query cell plus `keep−1` distinct non-query cells drawn from the
/// Gaussian neighborhood around the query.
fn select_gaussian(q_cell: usize, keep: usize, side: usize, rng: &mut Rng) -> Vec<usize> {
    let (qr, qc) = (q_cell / side, q_cell % side);
    let mut chosen = vec![q_cell];
    let mut used = vec![false; side * side];
    used[q_cell] = true;
    while chosen.len() < keep {
        let r = (qr as f64 + TIGHTNESS_GAMMA * standard_normal(rng))
            .round()
            .clamp(0.0, side as f64 - 1.0) as usize;
        let c = (qc as f64 + TIGHTNESS_GAMMA * standard_normal(rng))
            .round()
            .clamp(0.0, side as f64 - 1.0) as usize;
        let cell = r * side + c;
        if !used[cell] {
            used[cell] = true;
            chosen.push(cell);
        }
    }
    chosen
}

/// The query cell plus `keep−1` distinct non-query cells drawn uniformly.
fn select_uniform(q_cell: usize, keep: usize, n: usize, rng: &mut Rng) -> Vec<usize> {
    let mut chosen = vec![q_cell];
    let mut used = vec![false; n];
    used[q_cell] = true;
    while chosen.len() < keep {
        let cell = rng.gen_range(0..n);
        if !used[cell] {
            used[cell] = true;
            chosen.push(cell);
        }
    }
    chosen
}
