//! GNANet (video) and S-GNANet (single frame) at desk scale.
//!
//! GNANet: a shared convolutional backbone reduces each frame to 1/8
//! resolution; scene modeling aggregates the clip by convolution, refines
//! the aggregate with multi-focus Gaussian-neighborhood self-attention, and
//! fuses the two by concat + conv; context cross-attention reads from all
//! frames (one joint softmax over the union of each frame's sampled keys)
//! and from the objective frame, summing both with the objective feature;
//! the localization head upsamples back to full resolution and emits a
//! sigmoid probability map. S-GNANet keeps only backbone, self-attention
//! combined by elementwise sum, and the head.

use std::collections::BTreeMap;
use std::io::{Read as _, Write as _};
use std::path::Path;
use std::sync::Arc;

use rand::{Rng as _, RngCore as _};
use sha2::{Digest as _, Sha256};

use crate::attention::{multi_focus_plan, temporal_union_plan, GnaConfig};
use crate::rng::{rng_from_seed, standard_normal, Rng};
use crate::tensor::gradcheck::max_rel_err;
use crate::tensor::tape::{Tape, Var};
use crate::tensor::{dims3, Tensor};
use crate::{Error, Result};

/// Spatial reduction of the backbone: three halvings.
pub const DOWNSAMPLE: usize = 8;

// ── Configuration ────────────────────────────────────────────────────────

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Frames per clip (odd; the middle frame is the objective).
    pub clip_length: usize,
    /// Backbone output channels; the head schedule is d, d/2, d/4.
    pub feature_channels: usize,
    pub gna: GnaConfig,
    /// Replace every attention site with an identity pass-through.
    pub identity_attention: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            clip_length: 3,
            feature_channels: 64,
            gna: GnaConfig::default(),
            identity_attention: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.clip_length == 0 || self.clip_length % 2 == 0 {
            return Err(Error::validation(format!(
                "clip_length must be odd and positive, got {}",
                self.clip_length
            )));
        }
        if self.feature_channels < 4 || self.feature_channels % 4 != 0 {
            return Err(Error::validation(format!(
                "feature_channels must be a positive multiple of 4, got {}",
                self.feature_channels
            )));
        }
        self.gna.validate()
    }

    /// Index of the objective frame within a clip.
    pub fn objective_index(&self) -> usize {
        self.clip_length / 2
    }
}

/// Sampling behavior of the attention sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// One draw per focus.
    Train,
    /// Average `test_repeats` independent draws per focus.
    Test,
}

fn mode_repeats(config: &ModelConfig, mode: Mode) -> usize {
    match mode {
        Mode::Train => 1,
        Mode::Test => config.gna.test_repeats,
    }
}

// ── Parameters ───────────────────────────────────────────────────────────

/// Named parameter tensors; the name order is the serialization order.
pub type Parameters = BTreeMap<String, Tensor>;

/// He fan-in initialization for a conv kernel, zero bias.
fn insert_conv(
    params: &mut Parameters,
    rng: &mut Rng,
    name: &str,
    kh: usize,
    kw: usize,
    cin: usize,
    cout: usize,
) {
    let std = (2.0 / (kh * kw * cin) as f64).sqrt();
    let data: Vec<f64> = (0..kh * kw * cin * cout).map(|_| std * standard_normal(rng)).collect();
    let mut w = Tensor::from_vec(&[kh, kw, cin, cout], data).expect("positive extents");
    w.set_requires_grad(true);
    params.insert(format!("{name}.w"), w);
    let mut b = Tensor::zeros(&[cout]);
    b.set_requires_grad(true);
    params.insert(format!("{name}.b"), b);
}

fn insert_backbone(params: &mut Parameters, rng: &mut Rng, d: usize) {
    let widths = [3, 16, 16, 32, 32, d, d];
    for block in 0..3 {
        for conv in 0..2 {
            let cin = widths[block * 2 + conv];
            let cout = widths[block * 2 + conv + 1];
            insert_conv(params, rng, &format!("backbone.b{}.c{}", block + 1, conv + 1), 3, 3, cin, cout);
        }
    }
}

fn insert_head(params: &mut Parameters, rng: &mut Rng, d: usize) {
    for i in 1..=3 {
        insert_conv(params, rng, &format!("head.dil{i}"), 3, 3, d, d);
    }
    let schedule = [d, d, d / 2, d / 4];
    for i in 1..=3 {
        let (cin, cout) = (schedule[i - 1], schedule[i]);
        insert_conv(params, rng, &format!("head.up{i}.deconv"), 3, 3, cin, cout);
        insert_conv(params, rng, &format!("head.up{i}.conv"), 3, 3, cout, cout);
    }
    insert_conv(params, rng, "head.out", 1, 1, d / 4, 1);
}

/// Initialize all GNANet parameters.
pub fn init_gnanet_params(config: &ModelConfig, rng: &mut Rng) -> Result<Parameters> {
    config.validate()?;
    let d = config.feature_channels;
    let mut params = Parameters::new();
    insert_backbone(&mut params, rng, d);
    insert_conv(&mut params, rng, "scene.agg", 3, 3, config.clip_length * d, d);
    insert_conv(&mut params, rng, "scene.fuse", 3, 3, 2 * d, d);
    insert_head(&mut params, rng, d);
    Ok(params)
}

/// Initialize all S-GNANet parameters (backbone + head only).
pub fn init_s_gnanet_params(config: &ModelConfig, rng: &mut Rng) -> Result<Parameters> {
    config.validate()?;
    let d = config.feature_channels;
    let mut params = Parameters::new();
    insert_backbone(&mut params, rng, d);
    insert_head(&mut params, rng, d);
    Ok(params)
}

/// Total scalar count across all parameter tensors.
pub fn param_count(params: &Parameters) -> usize {
    params.values().map(Tensor::numel).sum()
}

/// Parameters staged as differentiable leaves on a tape.
pub struct TapedParams {
    vars: BTreeMap<String, Var>,
}

impl TapedParams {
    pub fn stage(tape: &mut Tape, params: &Parameters) -> Self {
        let vars = params
            .iter()
            .map(|(name, tensor)| (name.clone(), tape.leaf(tensor.clone(), true)))
            .collect();
        Self { vars }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::contract(format!("missing parameter {name}")))
    }

    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }
}

// ── Forward pieces ───────────────────────────────────────────────────────

fn conv_layer(
    tape: &mut Tape,
    p: &TapedParams,
    name: &str,
    x: Var,
    dilation: usize,
    padding: usize,
) -> Result<Var> {
    let w = p.var(&format!("{name}.w"))?;
    let b = p.var(&format!("{name}.b"))?;
    tape.conv2d(x, w, Some(b), 1, dilation, padding)
}

fn conv_relu(
    tape: &mut Tape,
    p: &TapedParams,
    name: &str,
    x: Var,
    dilation: usize,
    padding: usize,
) -> Result<Var> {
    let y = conv_layer(tape, p, name, x, dilation, padding)?;
    tape.relu(y)
}

fn spatial_dims(tape: &Tape, v: Var) -> Result<(usize, usize)> {
    let (h, w, _) = dims3(tape.value(v))?;
    Ok((h, w))
}

/// Frame `[H, W, 3]` → feature map `[H/8, W/8, d]`.
pub fn backbone_forward(
    tape: &mut Tape,
    p: &TapedParams,
    frame: Var,
    config: &ModelConfig,
) -> Result<Var> {
    let (h, w, c) = dims3(tape.value(frame))?;
    if c != 3 {
        return Err(Error::shape(format!("backbone expects 3 input channels, got {c}")));
    }
    if h % DOWNSAMPLE != 0 || w % DOWNSAMPLE != 0 {
        return Err(Error::shape(format!(
            "frame extents {h}x{w} must be divisible by {DOWNSAMPLE}"
        )));
    }
    let _ = config;
    let mut x = frame;
    for block in 1..=3 {
        x = conv_relu(tape, p, &format!("backbone.b{block}.c1"), x, 1, 1)?;
        x = conv_relu(tape, p, &format!("backbone.b{block}.c2"), x, 1, 1)?;
        x = tape.avg_pool2(x)?;
    }
    Ok(x)
}

/// Multi-focus self-attention over one map (identity under ablation).
fn self_attention_site(
    tape: &mut Tape,
    map: Var,
    config: &ModelConfig,
    repeats: usize,
    rng: &mut Rng,
) -> Result<Var> {
    if config.identity_attention {
        return Ok(map);
    }
    let dims = spatial_dims(tape, map)?;
    let plan = multi_focus_plan(dims, dims, &config.gna, repeats, rng.next_u64())?;
    tape.attention(map, &[map], &[map], Arc::new(plan))
}

/// Aggregate the clip's features into the scene context `M`.
pub fn scene_modeling(
    tape: &mut Tape,
    p: &TapedParams,
    features: &[Var],
    config: &ModelConfig,
    repeats: usize,
    rng: &mut Rng,
) -> Result<Var> {
    if features.is_empty() {
        return Err(Error::contract("scene modeling needs at least one feature map"));
    }
    let cat = if features.len() == 1 { features[0] } else { tape.concat(features, 2)? };
    let f = conv_relu(tape, p, "scene.agg", cat, 1, 1)?;
    let attended = self_attention_site(tape, f, config, repeats, rng)?;
    let fused = tape.concat(&[attended, f], 2)?;
    conv_relu(tape, p, "scene.fuse", fused, 1, 1)
}

/// Temporal attention over all frames plus objective-frame attention,
/// summed with the objective feature.
pub fn context_cross_attention(
    tape: &mut Tape,
    scene: Var,
    features: &[Var],
    objective: Var,
    config: &ModelConfig,
    repeats: usize,
    rng: &mut Rng,
) -> Result<Var> {
    if features.is_empty() {
        return Err(Error::contract("cross attention needs at least one feature map"));
    }
    let (temporal, focused) = if config.identity_attention {
        (scene, scene)
    } else {
        let q_dims = spatial_dims(tape, scene)?;
        let k_dims = spatial_dims(tape, features[0])?;
        let t_plan = temporal_union_plan(
            q_dims,
            k_dims,
            features.len(),
            &config.gna,
            repeats,
            rng.next_u64(),
        )?;
        let temporal = tape.attention(scene, features, features, Arc::new(t_plan))?;
        let o_dims = spatial_dims(tape, objective)?;
        let o_plan = multi_focus_plan(q_dims, o_dims, &config.gna, repeats, rng.next_u64())?;
        let focused = tape.attention(scene, &[objective], &[objective], Arc::new(o_plan))?;
        (temporal, focused)
    };
    let sum = tape.add(temporal, focused)?;
    tape.add(sum, objective)
}

/// Decode a 1/8-resolution map to a full-resolution probability map.
pub fn localization_head(
    tape: &mut Tape,
    p: &TapedParams,
    x: Var,
    config: &ModelConfig,
) -> Result<Var> {
    let _ = config;
    let mut x = x;
    for i in 1..=3 {
        x = conv_relu(tape, p, &format!("head.dil{i}"), x, 2, 2)?;
    }
    for i in 1..=3 {
        let w = p.var(&format!("head.up{i}.deconv.w"))?;
        let b = p.var(&format!("head.up{i}.deconv.b"))?;
        x = tape.deconv2d(x, w, Some(b))?;
        x = tape.relu(x)?;
        x = conv_relu(tape, p, &format!("head.up{i}.conv"), x, 2, 2)?;
    }
    let logits = conv_layer(tape, p, "head.out", x, 1, 0)?;
    let probs = tape.sigmoid(logits)?;
    let (h, w, _) = dims3(tape.value(probs))?;
    tape.reshape(probs, &[h, w])
}

/// Full video pipeline: clip of `m` frames → localization map of the
/// objective frame.
pub fn gnanet_forward(
    tape: &mut Tape,
    p: &TapedParams,
    frames: &[Tensor],
    config: &ModelConfig,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Var> {
    config.validate()?;
    if frames.len() != config.clip_length {
        return Err(Error::contract(format!(
            "clip has {} frames, model expects {}",
            frames.len(),
            config.clip_length
        )));
    }
    let repeats = mode_repeats(config, mode);
    let frame_vars: Vec<Var> = frames.iter().map(|f| tape.constant(f.clone())).collect();
    let mut features = Vec::with_capacity(frames.len());
    for &fv in &frame_vars {
        features.push(backbone_forward(tape, p, fv, config)?);
    }
    let scene = scene_modeling(tape, p, &features, config, repeats, rng)?;
    let objective = features[config.objective_index()];
    let context =
        context_cross_attention(tape, scene, &features, objective, config, repeats, rng)?;
    localization_head(tape, p, context, config)
}

/// Single-frame pipeline: backbone → self-attention → sum → head.
pub fn s_gnanet_forward(
    tape: &mut Tape,
    p: &TapedParams,
    frame: &Tensor,
    config: &ModelConfig,
    mode: Mode,
    rng: &mut Rng,
) -> Result<Var> {
    config.validate()?;
    let repeats = mode_repeats(config, mode);
    let fv = tape.constant(frame.clone());
    let feature = backbone_forward(tape, p, fv, config)?;
    let attended = self_attention_site(tape, feature, config, repeats, rng)?;
    let combined = tape.add(attended, feature)?;
    localization_head(tape, p, combined, config)
}

// ── Gradient probing ─────────────────────────────────────────────────────

/// Selects between the video pipeline and the single-frame pipeline.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Architecture {
    #[default]
    GnaNet,
    SGnaNet,
}

/// Worst floor-protected relative error between analytic gradients of the
/// weighted cross-entropy loss and central finite differences, probing
/// `probes_per_tensor` random coordinates of every parameter tensor.
///
/// Finite differences are measured on a ladder of step sizes and the
/// best-agreeing rung is kept per coordinate: wide steps straddle ReLU
/// kinks while narrow steps drown small derivatives in evaluation
/// roundoff, so no single step serves both regimes. A wrong analytic
/// gradient still fails — every rung converges toward the true derivative,
/// not toward the claim.
///
/// Probe at a generic parameter point. Structured points sit exactly on
/// activation kinks — with zero biases, a unit whose input window is all
/// dead has pre-activation exactly zero — and there the loss is one-sided:
/// no finite difference can match either directional derivative. Jittering
/// every parameter before probing restores a smooth neighborhood.
pub fn gradient_probe(
    arch: Architecture,
    config: &ModelConfig,
    params: &Parameters,
    frames: &[Tensor],
    target: &Arc<Tensor>,
    w_pos: f64,
    draw_seed: u64,
    probes_per_tensor: usize,
    probe_rng: &mut Rng,
) -> Result<f64> {
    let build = |params: &Parameters| -> Result<(Tape, TapedParams, Var)> {
        let mut tape = Tape::new();
        let p = TapedParams::stage(&mut tape, params);
        let mut draw_rng = rng_from_seed(draw_seed);
        let out = match arch {
            Architecture::GnaNet => {
                gnanet_forward(&mut tape, &p, frames, config, Mode::Train, &mut draw_rng)?
            }
            Architecture::SGnaNet => {
                s_gnanet_forward(&mut tape, &p, &frames[0], config, Mode::Train, &mut draw_rng)?
            }
        };
        let loss = tape.weighted_bce(out, target.clone(), w_pos)?;
        Ok((tape, p, loss))
    };
    let (mut tape, p, root) = build(params)?;
    tape.backward(root)?;
    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (name, &var) in p.vars() {
        let grads = tape
            .grad(var)
            .ok_or_else(|| Error::contract(format!("no gradient for {name}")))?;
        let n = params[name].numel();
        for _ in 0..probes_per_tensor {
            let coord = probe_rng.gen_range(0..n);
            let eval = |delta: f64| -> Result<f64> {
                let mut perturbed = params.clone();
                perturbed.get_mut(name).expect("staged name").data_mut()[coord] += delta;
                let (t, _, l) = build(&perturbed)?;
                t.value(l).item()
            };
            let a = grads[coord];
            let mut best = f64::INFINITY;
            for h in [1e-4, 1e-5, 3e-6] {
                let est = (eval(h)? - eval(-h)?) / (2.0 * h);
                if (est - a).abs() < (best - a).abs() {
                    best = est;
                }
            }
            analytic.push(a);
            numeric.push(best);
        }
    }
    Ok(max_rel_err(&analytic, &numeric))
}

// ── Checkpoints ──────────────────────────────────────────────────────────

const CHECKPOINT_MAGIC: &[u8; 4] = b"GNAC";
const CHECKPOINT_VERSION: u32 = 1;

/// Digest of the architecture-relevant configuration; a checkpoint loads
/// only into a matching config (the sampling seed is excluded).
pub fn config_digest(config: &ModelConfig) -> u64 {
    let canonical = format!(
        "clip_length={}\nfeature_channels={}\ngammas={:?}\nsamples_per_focus={}\ntest_repeats={}\nidentity_attention={}\n",
        config.clip_length,
        config.feature_channels,
        config.gna.gammas,
        config.gna.samples_per_focus,
        config.gna.test_repeats,
        config.identity_attention,
    );
    let hash = Sha256::digest(canonical.as_bytes());
    u64::from_le_bytes(hash[..8].try_into().expect("8 bytes"))
}

/// Write parameters with a header binding them to `config`.
pub fn save_checkpoint(path: &Path, params: &Parameters, config: &ModelConfig) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&config_digest(config).to_le_bytes())?;
    w.write_all(&(params.len() as u32).to_le_bytes())?;
    for (name, tensor) in params {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        tensor.write_to(&mut w)?;
    }
    Ok(())
}

/// Read a checkpoint written by [`save_checkpoint`], verifying the header.
pub fn load_checkpoint(path: &Path, config: &ModelConfig) -> Result<Parameters> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::format(0, "not a checkpoint file"));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    if u32::from_le_bytes(word) != CHECKPOINT_VERSION {
        return Err(Error::format(0, "unsupported checkpoint version"));
    }
    let mut digest = [0u8; 8];
    r.read_exact(&mut digest)?;
    if u64::from_le_bytes(digest) != config_digest(config) {
        return Err(Error::validation(
            "checkpoint was written for a different model configuration",
        ));
    }
    r.read_exact(&mut word)?;
    let count = u32::from_le_bytes(word) as usize;
    let mut params = Parameters::new();
    for _ in 0..count {
        r.read_exact(&mut word)?;
        let len = u32::from_le_bytes(word) as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::format(0, "bad tensor name"))?;
        let mut tensor = Tensor::read_from(&mut r)?;
        tensor.set_requires_grad(true);
        params.insert(name, tensor);
    }
    Ok(params)
}
