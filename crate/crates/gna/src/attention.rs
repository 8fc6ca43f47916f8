//! Attention kernels: full attention (the quadratic oracle), Gaussian
//! neighborhood attention (single focus, multi-focus, Monte-Carlo test-time
//! averaging), and the local / uniform-random / disk-random baselines.
//!
//! Every sparse kernel runs in two steps. A sampling step builds an
//! [`AttentionPlan`] naming, for each query, one or more groups of key
//! references; a fused kernel then runs softmax attention over each group
//! independently and averages the group outputs. Keeping the plan explicit
//! makes sampled attention reproducible and introspectable, and lets the
//! autodiff tape replay the identical plan in its backward pass.
//!
//! Each group's references are canonically sorted at plan construction, so
//! any permutation of the same draws produces bit-identical output.

use crate::error::{Error, Result};
use crate::rng::{derive_rng, standard_normal, Rng};
use crate::tensor::{dims3, Tensor};
use rand::{Rng as _, RngCore as _};

// ── Configuration ────────────────────────────────────────────────────────

/// Sampling parameters for Gaussian neighborhood attention.
#[derive(Clone, Debug, PartialEq)]
pub struct GnaConfig {
    /// Focus standard deviations, in cells of the attended grid.
    pub gammas: Vec<f64>,
    /// Points sampled per focus per query.
    pub samples_per_focus: usize,
    /// Independent evaluations averaged at test time.
    pub test_repeats: usize,
    /// Base seed for sampling streams.
    pub seed: u64,
}

impl Default for GnaConfig {
    fn default() -> Self {
        Self { gammas: vec![3.0, 5.0, 10.0], samples_per_focus: 32, test_repeats: 3, seed: 0 }
    }
}

impl GnaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.gammas.is_empty() {
            return Err(Error::validation("gammas must be non-empty"));
        }
        for &g in &self.gammas {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::validation(format!("gamma {g} must be positive and finite")));
            }
        }
        if self.samples_per_focus == 0 {
            return Err(Error::validation("samples_per_focus must be at least 1"));
        }
        if self.test_repeats == 0 {
            return Err(Error::validation("test_repeats must be at least 1"));
        }
        Ok(())
    }

    /// Number of focuses F.
    pub fn focuses(&self) -> usize {
        self.gammas.len()
    }
}

/// One query's sampled neighborhood for one focus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleDraw {
    pub query: (usize, usize),
    pub keys: Vec<(usize, usize)>,
    pub focus: usize,
}

// ── Vector-level attention ───────────────────────────────────────────────

/// Softmax attention of one query over `n = keys.len()/d` key/value rows,
/// with scores `q·kᵢ/√d`. Slices hold row-major `[n, d]` matrices.
pub fn scaled_dot_attention(q: &[f64], keys: &[f64], values: &[f64], d: usize) -> Result<Vec<f64>> {
    let w = scaled_dot_weights(q, keys, d)?;
    if values.len() != keys.len() {
        return Err(Error::shape(format!(
            "values length {} differs from keys length {}",
            values.len(),
            keys.len()
        )));
    }
    let mut out = vec![0.0; d];
    for (wi, row) in w.iter().zip(values.chunks_exact(d)) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o += wi * v;
        }
    }
    Ok(out)
}

/// The softmax weights used by [`scaled_dot_attention`].
pub fn scaled_dot_weights(q: &[f64], keys: &[f64], d: usize) -> Result<Vec<f64>> {
    if d == 0 || q.len() != d {
        return Err(Error::shape(format!("query length {} does not match d={d}", q.len())));
    }
    if keys.len() % d != 0 {
        return Err(Error::shape(format!("keys length {} not a multiple of d={d}", keys.len())));
    }
    let n = keys.len() / d;
    if n == 0 {
        return Err(Error::EmptyKeys);
    }
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let mut scores: Vec<f64> = keys
        .chunks_exact(d)
        .map(|row| q.iter().zip(row).map(|(&a, &b)| a * b).sum::<f64>() * inv_sqrt_d)
        .collect();
    softmax_in_place(&mut scores);
    Ok(scores)
}

/// Numerically stable in-place softmax.
fn softmax_in_place(s: &mut [f64]) {
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in s.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in s.iter_mut() {
        *v /= sum;
    }
}

// ── Sampling plans ───────────────────────────────────────────────────────

/// One sampled key: which source map and which cell of it.
///
/// The derived ordering (source, then row, then column) is the canonical
/// order groups are stored in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct KeyRef {
    pub source: u32,
    pub row: u32,
    pub col: u32,
}

/// A complete sampling plan: for every query position, `groups_per_query`
/// groups of key references. The fused kernel attends within each group
/// separately and averages the group outputs.
#[derive(Clone, Debug)]
pub struct AttentionPlan {
    query_h: usize,
    query_w: usize,
    key_h: usize,
    key_w: usize,
    groups_per_query: usize,
    sources: usize,
    /// `offsets[i]..offsets[i+1]` indexes `refs` for flat group `i`
    /// (query-major, then group).
    offsets: Vec<usize>,
    refs: Vec<KeyRef>,
}

impl AttentionPlan {
    /// Build a plan from explicit per-group references, `query_h·query_w·
    /// groups_per_query` groups in query-major order. Each group is sorted
    /// into canonical order; duplicates are retained.
    pub fn from_group_refs(
        query_dims: (usize, usize),
        key_dims: (usize, usize),
        groups_per_query: usize,
        mut groups: Vec<Vec<KeyRef>>,
    ) -> Result<Self> {
        let (query_h, query_w) = query_dims;
        let (key_h, key_w) = key_dims;
        if query_h == 0 || query_w == 0 || key_h == 0 || key_w == 0 {
            return Err(Error::shape("plan dimensions must be positive"));
        }
        if groups_per_query == 0 {
            return Err(Error::shape("groups_per_query must be at least 1"));
        }
        let expect = query_h * query_w * groups_per_query;
        if groups.len() != expect {
            return Err(Error::shape(format!(
                "expected {expect} groups, got {}",
                groups.len()
            )));
        }
        let mut sources = 0usize;
        for group in &mut groups {
            if group.is_empty() {
                return Err(Error::EmptyKeys);
            }
            for r in group.iter() {
                if r.row as usize >= key_h || r.col as usize >= key_w {
                    return Err(Error::index(format!(
                        "key ({},{}) outside {key_h}x{key_w} map",
                        r.row, r.col
                    )));
                }
                sources = sources.max(r.source as usize + 1);
            }
            group.sort_unstable();
        }
        let mut offsets = Vec::with_capacity(groups.len() + 1);
        let mut refs = Vec::with_capacity(groups.iter().map(Vec::len).sum());
        offsets.push(0);
        for group in groups {
            refs.extend(group);
            offsets.push(refs.len());
        }
        Ok(Self { query_h, query_w, key_h, key_w, groups_per_query, sources, offsets, refs })
    }

    pub fn query_dims(&self) -> (usize, usize) {
        (self.query_h, self.query_w)
    }

    pub fn key_dims(&self) -> (usize, usize) {
        (self.key_h, self.key_w)
    }

    pub fn groups_per_query(&self) -> usize {
        self.groups_per_query
    }

    /// Number of distinct source maps the plan references (max index + 1).
    pub fn sources(&self) -> usize {
        self.sources
    }

    pub fn n_queries(&self) -> usize {
        self.query_h * self.query_w
    }

    /// Total sampled references over all queries and groups.
    pub fn total_refs(&self) -> usize {
        self.refs.len()
    }

    /// References of one group, in canonical order.
    pub fn group(&self, query: usize, g: usize) -> &[KeyRef] {
        let i = query * self.groups_per_query + g;
        &self.refs[self.offsets[i]..self.offsets[i + 1]]
    }
}

// ── Fused plan execution ─────────────────────────────────────────────────

fn check_plan_inputs(
    q: &Tensor,
    keys: &[&Tensor],
    values: &[&Tensor],
    plan: &AttentionPlan,
) -> Result<usize> {
    let (qh, qw, d) = dims3(q)?;
    if (qh, qw) != (plan.query_h, plan.query_w) {
        return Err(Error::shape(format!(
            "query map {qh}x{qw} does not match plan {}x{}",
            plan.query_h, plan.query_w
        )));
    }
    if keys.len() != values.len() {
        return Err(Error::shape(format!(
            "{} key maps vs {} value maps",
            keys.len(),
            values.len()
        )));
    }
    if keys.len() < plan.sources {
        return Err(Error::shape(format!(
            "plan references {} sources, got {} maps",
            plan.sources,
            keys.len()
        )));
    }
    for t in keys.iter().chain(values.iter()) {
        let (kh, kw, kd) = dims3(t)?;
        if (kh, kw) != (plan.key_h, plan.key_w) || kd != d {
            return Err(Error::shape(format!(
                "key/value map {kh}x{kw}x{kd} does not match plan {}x{}x{d}",
                plan.key_h, plan.key_w
            )));
        }
    }
    Ok(d)
}

/// Run the plan: each query's output is the average over its groups of
/// softmax attention (scores `q·k/√d`) across that group's references.
pub(crate) fn fused_attention_forward(
    q: &Tensor,
    keys: &[&Tensor],
    values: &[&Tensor],
    plan: &AttentionPlan,
) -> Result<Tensor> {
    let d = check_plan_inputs(q, keys, values, plan)?;
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let kw = plan.key_w;
    let qd = q.data();
    let mut out = vec![0.0; plan.n_queries() * d];
    let mut weights = Vec::new();
    let mut acc = vec![0.0; d];
    let mut group_out = vec![0.0; d];
    for qi in 0..plan.n_queries() {
        let qrow = &qd[qi * d..(qi + 1) * d];
        acc.iter_mut().for_each(|v| *v = 0.0);
        for g in 0..plan.groups_per_query {
            let refs = plan.group(qi, g);
            weights.clear();
            weights.extend(refs.iter().map(|r| {
                let krow = key_row(keys[r.source as usize], r, kw, d);
                dot(qrow, krow) * inv_sqrt_d
            }));
            softmax_in_place(&mut weights);
            // Each group's output is finished before it joins the average,
            // so the result decomposes exactly into per-group outputs.
            group_out.iter_mut().for_each(|v| *v = 0.0);
            for (wi, r) in weights.iter().zip(refs) {
                let vrow = key_row(values[r.source as usize], r, kw, d);
                for (a, &v) in group_out.iter_mut().zip(vrow) {
                    *a += wi * v;
                }
            }
            for (a, &v) in acc.iter_mut().zip(&group_out) {
                *a += v;
            }
        }
        let g_count = plan.groups_per_query as f64;
        for (o, &a) in out[qi * d..(qi + 1) * d].iter_mut().zip(&acc) {
            *o = a / g_count;
        }
    }
    Tensor::from_vec(&[plan.query_h, plan.query_w, d], out)
}

/// Gradients of the fused kernel w.r.t. the query map and every key/value
/// map. Weights are recomputed rather than saved.
pub(crate) fn fused_attention_backward(
    q: &Tensor,
    keys: &[&Tensor],
    values: &[&Tensor],
    plan: &AttentionPlan,
    gout: &[f64],
) -> (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let d = check_plan_inputs(q, keys, values, plan).expect("checked in forward");
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let kw = plan.key_w;
    let qd = q.data();
    let mut gq = vec![0.0; qd.len()];
    let mut gks: Vec<Vec<f64>> = keys.iter().map(|t| vec![0.0; t.numel()]).collect();
    let mut gvs: Vec<Vec<f64>> = values.iter().map(|t| vec![0.0; t.numel()]).collect();
    let g_count = plan.groups_per_query as f64;
    let mut weights = Vec::new();
    let mut upstream = Vec::new();
    let mut gvec = vec![0.0; d];
    for qi in 0..plan.n_queries() {
        let qrow = &qd[qi * d..(qi + 1) * d];
        for (gv, &go) in gvec.iter_mut().zip(&gout[qi * d..(qi + 1) * d]) {
            *gv = go / g_count;
        }
        for g in 0..plan.groups_per_query {
            let refs = plan.group(qi, g);
            weights.clear();
            weights.extend(refs.iter().map(|r| {
                let krow = key_row(keys[r.source as usize], r, kw, d);
                dot(qrow, krow) * inv_sqrt_d
            }));
            softmax_in_place(&mut weights);
            // dL/d(weight_i) = gvec · v_i
            upstream.clear();
            upstream.extend(refs.iter().map(|r| {
                let vrow = key_row(values[r.source as usize], r, kw, d);
                dot(&gvec, vrow)
            }));
            let mix: f64 = weights.iter().zip(&upstream).map(|(&w, &u)| w * u).sum();
            for ((&w, &u), r) in weights.iter().zip(&upstream).zip(refs) {
                let ds = w * (u - mix) * inv_sqrt_d;
                let krow = key_row(keys[r.source as usize], r, kw, d);
                for (gq_c, &k) in gq[qi * d..(qi + 1) * d].iter_mut().zip(krow) {
                    *gq_c += ds * k;
                }
                let koff = ref_offset(r, kw, d);
                let gk = &mut gks[r.source as usize][koff..koff + d];
                for (gk_c, &qc) in gk.iter_mut().zip(qrow) {
                    *gk_c += ds * qc;
                }
                let gv = &mut gvs[r.source as usize][koff..koff + d];
                for (gv_c, &gvec_c) in gv.iter_mut().zip(&gvec) {
                    *gv_c += w * gvec_c;
                }
            }
        }
    }
    (gq, gks, gvs)
}

fn ref_offset(r: &KeyRef, key_w: usize, d: usize) -> usize {
    (r.row as usize * key_w + r.col as usize) * d
}

fn key_row<'a>(map: &'a Tensor, r: &KeyRef, key_w: usize, d: usize) -> &'a [f64] {
    let off = ref_offset(r, key_w, d);
    &map.data()[off..off + d]
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Public entry to run an explicit plan over arbitrary source maps.
pub fn attention_with_plan(
    q: &Tensor,
    keys: &[&Tensor],
    values: &[&Tensor],
    plan: &AttentionPlan,
) -> Result<Tensor> {
    fused_attention_forward(q, keys, values, plan)
}

/// Softmax weights for every reference of the plan, concatenated in plan
/// order; each group's slice sums to one.
pub fn attention_weights_with_plan(
    q: &Tensor,
    keys: &[&Tensor],
    plan: &AttentionPlan,
) -> Result<Vec<f64>> {
    let d = check_plan_inputs(q, keys, keys, plan)?;
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let kw = plan.key_w;
    let qd = q.data();
    let mut all = Vec::with_capacity(plan.total_refs());
    for qi in 0..plan.n_queries() {
        let qrow = &qd[qi * d..(qi + 1) * d];
        for g in 0..plan.groups_per_query {
            let refs = plan.group(qi, g);
            let mut w: Vec<f64> = refs
                .iter()
                .map(|r| dot(qrow, key_row(keys[r.source as usize], r, kw, d)) * inv_sqrt_d)
                .collect();
            softmax_in_place(&mut w);
            all.extend(w);
        }
    }
    Ok(all)
}

// ── Neighborhood samplers ────────────────────────────────────────────────

fn clamp_cell(row: f64, col: f64, bounds: (usize, usize)) -> (usize, usize) {
    let r = row.round().clamp(0.0, (bounds.0 - 1) as f64) as usize;
    let c = col.round().clamp(0.0, (bounds.1 - 1) as f64) as usize;
    (r, c)
}

/// Draw `n` key positions from an isotropic 2D Gaussian centered on the
/// query cell with per-axis standard deviation `gamma`, rounded to the
/// nearest cell and clamped into bounds. Duplicates are retained.
pub fn sample_gaussian_neighborhood(
    center: (usize, usize),
    gamma: f64,
    n: usize,
    bounds: (usize, usize),
    rng: &mut Rng,
) -> SampleDraw {
    assert!(gamma > 0.0, "gamma must be positive");
    let keys = (0..n)
        .map(|_| {
            let row = center.0 as f64 + gamma * standard_normal(rng);
            let col = center.1 as f64 + gamma * standard_normal(rng);
            clamp_cell(row, col, bounds)
        })
        .collect();
    SampleDraw { query: center, keys, focus: 0 }
}

fn refs_from_cells(cells: &[(usize, usize)], source: u32) -> Vec<KeyRef> {
    cells
        .iter()
        .map(|&(r, c)| KeyRef { source, row: r as u32, col: c as u32 })
        .collect()
}

/// Gaussian sampling plan over one source map: for every query,
/// `repeats × F` groups of `samples_per_focus` draws. Group order is
/// repeat-major, then focus. Per-query streams are derived from
/// `(salt, repeat, focus, query index)`, so draws are independent of
/// iteration order.
pub fn multi_focus_plan(
    query_dims: (usize, usize),
    key_dims: (usize, usize),
    config: &GnaConfig,
    repeats: usize,
    salt: u64,
) -> Result<AttentionPlan> {
    config.validate()?;
    if repeats == 0 {
        return Err(Error::validation("repeats must be at least 1"));
    }
    let (h, w) = query_dims;
    let mut groups = Vec::with_capacity(h * w * repeats * config.focuses());
    for r in 0..h {
        for c in 0..w {
            let qid = (r * w + c) as u64;
            for t in 0..repeats {
                for (f, &gamma) in config.gammas.iter().enumerate() {
                    let mut rng = derive_rng(&[salt, t as u64, f as u64, qid]);
                    let draw = sample_gaussian_neighborhood(
                        (r, c),
                        gamma,
                        config.samples_per_focus,
                        key_dims,
                        &mut rng,
                    );
                    groups.push(refs_from_cells(&draw.keys, 0));
                }
            }
        }
    }
    AttentionPlan::from_group_refs(query_dims, key_dims, repeats * config.focuses(), groups)
}

/// Gaussian sampling plan across `n_frames` source maps: each group is the
/// union, over all frames, of `samples_per_focus` draws (one joint softmax
/// per focus). Streams are derived from `(salt, repeat, focus, query,
/// frame)`.
pub fn temporal_union_plan(
    query_dims: (usize, usize),
    key_dims: (usize, usize),
    n_frames: usize,
    config: &GnaConfig,
    repeats: usize,
    salt: u64,
) -> Result<AttentionPlan> {
    config.validate()?;
    if repeats == 0 || n_frames == 0 {
        return Err(Error::validation("repeats and n_frames must be at least 1"));
    }
    let (h, w) = query_dims;
    let mut groups = Vec::with_capacity(h * w * repeats * config.focuses());
    for r in 0..h {
        for c in 0..w {
            let qid = (r * w + c) as u64;
            for t in 0..repeats {
                for (f, &gamma) in config.gammas.iter().enumerate() {
                    let mut group = Vec::with_capacity(n_frames * config.samples_per_focus);
                    for frame in 0..n_frames {
                        let mut rng =
                            derive_rng(&[salt, t as u64, f as u64, qid, frame as u64]);
                        let draw = sample_gaussian_neighborhood(
                            (r, c),
                            gamma,
                            config.samples_per_focus,
                            key_dims,
                            &mut rng,
                        );
                        group.extend(refs_from_cells(&draw.keys, frame as u32));
                    }
                    groups.push(group);
                }
            }
        }
    }
    AttentionPlan::from_group_refs(query_dims, key_dims, repeats * config.focuses(), groups)
}

/// Deterministic plan attending to every in-bounds cell of the
/// `window × window` patch centered at each query.
pub fn local_plan(
    query_dims: (usize, usize),
    key_dims: (usize, usize),
    window: usize,
) -> Result<AttentionPlan> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::validation(format!("window must be odd and positive, got {window}")));
    }
    let half = (window / 2) as isize;
    let (h, w) = query_dims;
    let (kh, kw) = key_dims;
    let mut groups = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let mut cells = Vec::new();
            for dy in -half..=half {
                let row = r as isize + dy;
                if row < 0 || row >= kh as isize {
                    continue;
                }
                for dx in -half..=half {
                    let col = c as isize + dx;
                    if col < 0 || col >= kw as isize {
                        continue;
                    }
                    cells.push((row as usize, col as usize));
                }
            }
            groups.push(refs_from_cells(&cells, 0));
        }
    }
    AttentionPlan::from_group_refs(query_dims, key_dims, 1, groups)
}

/// Plan with `n` draws per query, uniform over the whole key map.
pub fn uniform_plan(
    query_dims: (usize, usize),
    key_dims: (usize, usize),
    n: usize,
    salt: u64,
) -> Result<AttentionPlan> {
    if n == 0 {
        return Err(Error::validation("n must be at least 1"));
    }
    let (h, w) = query_dims;
    let mut groups = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let qid = (r * w + c) as u64;
            let mut rng = derive_rng(&[salt, 0, 0, qid]);
            let cells: Vec<(usize, usize)> = (0..n)
                .map(|_| (rng.gen_range(0..key_dims.0), rng.gen_range(0..key_dims.1)))
                .collect();
            groups.push(refs_from_cells(&cells, 0));
        }
    }
    AttentionPlan::from_group_refs(query_dims, key_dims, 1, groups)
}

/// Plan with `n` draws per query, uniform over the disk of radius `3·gamma`
/// centered at the query, rounded and clamped into bounds.
pub fn disk_plan(
    query_dims: (usize, usize),
    key_dims: (usize, usize),
    gamma: f64,
    n: usize,
    salt: u64,
) -> Result<AttentionPlan> {
    if !(gamma > 0.0) {
        return Err(Error::validation(format!("gamma {gamma} must be positive")));
    }
    if n == 0 {
        return Err(Error::validation("n must be at least 1"));
    }
    let radius = 3.0 * gamma;
    let (h, w) = query_dims;
    let mut groups = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            let qid = (r * w + c) as u64;
            let mut rng = derive_rng(&[salt, 0, 0, qid]);
            let cells: Vec<(usize, usize)> = (0..n)
                .map(|_| {
                    let rad = radius * rng.gen::<f64>().sqrt();
                    let theta = 2.0 * std::f64::consts::PI * rng.gen::<f64>();
                    clamp_cell(
                        r as f64 + rad * theta.sin(),
                        c as f64 + rad * theta.cos(),
                        key_dims,
                    )
                })
                .collect();
            groups.push(refs_from_cells(&cells, 0));
        }
    }
    AttentionPlan::from_group_refs(query_dims, key_dims, 1, groups)
}

// ── Map-level kernels ────────────────────────────────────────────────────

fn aligned_dims(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(usize, usize)> {
    let (h, w, _) = dims3(q)?;
    if q.shape() != k.shape() || q.shape() != v.shape() {
        return Err(Error::shape(format!(
            "query {:?}, key {:?}, value {:?} maps must be aligned",
            q.shape(),
            k.shape(),
            v.shape()
        )));
    }
    Ok((h, w))
}

/// Single-draw Gaussian neighborhood attention: one sampled neighborhood of
/// `n` keys per query, softmax over those keys only.
pub fn gna_single(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    gamma: f64,
    n: usize,
    rng: &mut Rng,
) -> Result<Tensor> {
    let config =
        GnaConfig { gammas: vec![gamma], samples_per_focus: n, test_repeats: 1, seed: 0 };
    let dims = aligned_dims(q, k, v)?;
    let salt = rng.next_u64();
    let plan = multi_focus_plan(dims, dims, &config, 1, salt)?;
    fused_attention_forward(q, &[k], &[v], &plan)
}

/// Multi-focus Gaussian neighborhood attention: the arithmetic mean over
/// focuses of per-focus sampled attention, one draw per focus per query.
pub fn multi_focus_gna(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    config: &GnaConfig,
    rng: &mut Rng,
) -> Result<Tensor> {
    let dims = aligned_dims(q, k, v)?;
    let salt = rng.next_u64();
    let plan = multi_focus_plan(dims, dims, config, 1, salt)?;
    fused_attention_forward(q, &[k], &[v], &plan)
}

/// Monte-Carlo test-time estimator: the mean of `test_repeats` independent
/// multi-focus evaluations. With `test_repeats == 1` this is bit-identical
/// to [`multi_focus_gna`].
pub fn gna_test(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    config: &GnaConfig,
    rng: &mut Rng,
) -> Result<Tensor> {
    let dims = aligned_dims(q, k, v)?;
    let salt = rng.next_u64();
    let plan = multi_focus_plan(dims, dims, config, config.test_repeats, salt)?;
    fused_attention_forward(q, &[k], &[v], &plan)
}

/// Full attention: every query attends to all `H·W` keys. Quadratic in the
/// number of cells; this is the oracle the sparse kernels approximate.
pub fn full_attention_2d(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    aligned_dims(q, k, v)?;
    let (h, w, d) = dims3(q)?;
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    let mut out = vec![0.0; qd.len()];
    for qi in 0..h * w {
        let row = scaled_dot_attention(&qd[qi * d..(qi + 1) * d], kd, vd, d)?;
        out[qi * d..(qi + 1) * d].copy_from_slice(&row);
    }
    Tensor::from_vec(&[h, w, d], out)
}

/// Windowed local attention over the `window × window` patch at each query.
pub fn local_attention(q: &Tensor, k: &Tensor, v: &Tensor, window: usize) -> Result<Tensor> {
    let dims = aligned_dims(q, k, v)?;
    let plan = local_plan(dims, dims, window)?;
    fused_attention_forward(q, &[k], &[v], &plan)
}

/// Sparse attention over `n` keys drawn uniformly from the whole map.
pub fn uniform_random_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    n: usize,
    rng: &mut Rng,
) -> Result<Tensor> {
    let dims = aligned_dims(q, k, v)?;
    let salt = rng.next_u64();
    let plan = uniform_plan(dims, dims, n, salt)?;
    fused_attention_forward(q, &[k], &[v], &plan)
}

/// Sparse attention over `n` keys drawn uniformly from the disk of radius
/// `3·gamma` around each query.
pub fn disk_random_attention(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    gamma: f64,
    n: usize,
    rng: &mut Rng,
) -> Result<Tensor> {
    let dims = aligned_dims(q, k, v)?;
    let salt = rng.next_u64();
    let plan = disk_plan(dims, dims, gamma, n, salt)?;
    fused_attention_forward(q, &[k], &[v], &plan)
}
