//! Synthetic crowd videos, annotation I/O, and clip slicing.
//!
//! The generator renders moving heads as anti-aliased Gaussian blobs over a
//! smooth textured background, with perspective-dependent head size,
//! optional occluding rectangles, per-frame box blur, and pixel noise.
//! Annotations store the true continuous head centers, so localization
//! metrics are measured against exact ground truth.

use std::fs;
use std::io::{BufWriter, Read as _, Write as _};
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rayon::prelude::*;

use crate::rng::{derive_rng, standard_normal, Rng};
use crate::tensor::{dims3, Tensor};
use crate::{Error, Result};

// ── Domain types ─────────────────────────────────────────────────────────

/// One annotated head: continuous center, stable id, optional box.
#[derive(Clone, Debug, PartialEq)]
pub struct Head {
    pub x: f64,
    pub y: f64,
    pub id: u32,
    /// Optional head–shoulder box `(x0, y0, x1, y1)` containing the center.
    pub bbox: Option<[f64; 4]>,
}

/// Heads of one frame.
pub type FrameHeads = Vec<Head>;

/// A generated or loaded video: frames are `[H, W, 3]` tensors in `[0,1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub height: usize,
    pub width: usize,
    pub frames: Vec<Tensor>,
    pub annotations: Vec<FrameHeads>,
    /// Per frame: ids of heads covered by an occluder in that frame.
    pub occluded: Vec<Vec<u32>>,
}

/// A sliding window of `m` frames; the middle frame is the objective.
#[derive(Clone, Debug, PartialEq)]
pub struct Clip {
    pub frames: Vec<Tensor>,
    pub annotations: Vec<FrameHeads>,
    pub occluded: Vec<Vec<u32>>,
    pub objective: usize,
}

impl Clip {
    /// The frame whose localization map the model predicts.
    pub fn objective_frame(&self) -> &Tensor {
        &self.frames[self.objective]
    }

    /// Ground-truth heads of the objective frame.
    pub fn objective_heads(&self) -> &[Head] {
        &self.annotations[self.objective]
    }

    /// True when any objective-frame head is occluded in that frame.
    pub fn has_occlusion(&self) -> bool {
        !self.occluded[self.objective].is_empty()
    }
}

/// Scene, motion, and degradation parameters for the synthetic generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub height: usize,
    pub width: usize,
    pub frames_per_video: usize,
    pub people_min: usize,
    pub people_max: usize,
    /// Head radius at the top of the frame (pixels).
    pub r_min: f64,
    /// Head radius at the bottom of the frame (pixels).
    pub r_max: f64,
    /// Standard deviation of each head's constant velocity (px/frame).
    pub velocity_std: f64,
    /// Standard deviation of per-frame Brownian jitter (px).
    pub jitter_std: f64,
    /// Probability that a head is occluded in a given frame.
    pub occlusion_prob: f64,
    /// Probability that a frame is blurred with a 3×3 box filter.
    pub blur_prob: f64,
    /// Standard deviation of additive per-pixel noise.
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 64,
            frames_per_video: 12,
            people_min: 3,
            people_max: 10,
            r_min: 2.0,
            r_max: 5.0,
            velocity_std: 0.8,
            jitter_std: 0.3,
            occlusion_prob: 0.3,
            blur_prob: 0.2,
            noise_std: 0.02,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Check field invariants.
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || self.frames_per_video == 0 {
            return Err(Error::validation("scene dimensions and frame count must be positive"));
        }
        if self.people_min > self.people_max {
            return Err(Error::validation("people_min exceeds people_max"));
        }
        if self.r_min < 1.0 || self.r_max < self.r_min {
            return Err(Error::validation("head radii must satisfy 1 <= r_min <= r_max"));
        }
        for (name, p) in
            [("occlusion_prob", self.occlusion_prob), ("blur_prob", self.blur_prob)]
        {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::validation(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.velocity_std < 0.0 || self.jitter_std < 0.0 || self.noise_std < 0.0 {
            return Err(Error::validation("deviations must be non-negative"));
        }
        Ok(())
    }

    /// Perspective law: head radius at vertical position `y`.
    pub fn head_radius(&self, y: f64) -> f64 {
        self.r_min + (self.r_max - self.r_min) * y / self.height as f64
    }
}

/// The corpus recipe used by the end-to-end acceptance checks: 64×64
/// frames, at most 10 heads, occlusion probability 0.3.
pub fn standard_corpus_config(seed: u64) -> SynthConfig {
    SynthConfig { seed, ..SynthConfig::default() }
}

// ── Annotation I/O ───────────────────────────────────────────────────────

/// Validate one frame's heads against the frame bounds.
fn validate_heads(heads: &[Head], height: usize, width: usize, frame: usize) -> Result<()> {
    let (h, w) = (height as f64, width as f64);
    let mut seen = std::collections::BTreeSet::new();
    for head in heads {
        if !head.x.is_finite() || !head.y.is_finite() || head.x < 0.0 || head.x >= w
            || head.y < 0.0 || head.y >= h
        {
            return Err(Error::validation(format!(
                "frame {frame}: head {} at ({}, {}) is outside the {w}x{h} frame",
                head.id, head.x, head.y
            )));
        }
        if !seen.insert(head.id) {
            return Err(Error::validation(format!("frame {frame}: duplicate head id {}", head.id)));
        }
        if let Some([x0, y0, x1, y1]) = head.bbox {
            if !(x0 <= head.x && head.x <= x1 && y0 <= head.y && head.y <= y1) {
                return Err(Error::validation(format!(
                    "frame {frame}: bbox of head {} does not contain its center",
                    head.id
                )));
            }
        }
    }
    Ok(())
}

/// Load one video's annotations: one head per line,
/// `frame_index x y id [x0 y0 x1 y1]`, `#` comments.
pub fn load_annotations(path: &Path, height: usize, width: usize) -> Result<Vec<FrameHeads>> {
    let text = fs::read_to_string(path)?;
    let mut frames: Vec<FrameHeads> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 4 && toks.len() != 8 {
            return Err(Error::format(lineno + 1, "expected 4 or 8 fields"));
        }
        let frame: usize = toks[0]
            .parse()
            .map_err(|_| Error::format(lineno + 1, "bad frame index"))?;
        let num = |i: usize| -> Result<f64> {
            toks[i].parse().map_err(|_| Error::format(lineno + 1, format!("bad number {:?}", toks[i])))
        };
        let (x, y) = (num(1)?, num(2)?);
        let id: u32 = toks[3]
            .parse()
            .map_err(|_| Error::format(lineno + 1, "bad head id"))?;
        let bbox = if toks.len() == 8 {
            Some([num(4)?, num(5)?, num(6)?, num(7)?])
        } else {
            None
        };
        if frames.len() <= frame {
            frames.resize_with(frame + 1, Vec::new);
        }
        frames[frame].push(Head { x, y, id, bbox });
    }
    for (i, heads) in frames.iter().enumerate() {
        validate_heads(heads, height, width, i)?;
    }
    Ok(frames)
}

/// Write annotations in the format read by [`load_annotations`].
pub fn write_annotations(path: &Path, frames: &[FrameHeads], seed: u64) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "# seed = {seed}")?;
    for (i, heads) in frames.iter().enumerate() {
        for h in heads {
            match h.bbox {
                Some([x0, y0, x1, y1]) => {
                    writeln!(w, "{i} {} {} {} {x0} {y0} {x1} {y1}", h.x, h.y, h.id)?
                }
                None => writeln!(w, "{i} {} {} {}", h.x, h.y, h.id)?,
            }
        }
    }
    Ok(())
}

/// Load per-frame occluded head ids: one `frame_index id` pair per line.
pub fn load_occlusions(path: &Path, n_frames: usize) -> Result<Vec<Vec<u32>>> {
    let text = fs::read_to_string(path)?;
    let mut frames = vec![Vec::new(); n_frames];
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(Error::format(lineno + 1, "expected `frame_index id`"));
        }
        let frame: usize = toks[0]
            .parse()
            .map_err(|_| Error::format(lineno + 1, "bad frame index"))?;
        let id: u32 = toks[1]
            .parse()
            .map_err(|_| Error::format(lineno + 1, "bad head id"))?;
        if frame >= n_frames {
            return Err(Error::validation(format!(
                "occlusion references frame {frame} of a {n_frames}-frame video"
            )));
        }
        frames[frame].push(id);
    }
    Ok(frames)
}

/// Write occlusions in the format read by [`load_occlusions`].
pub fn write_occlusions(path: &Path, frames: &[Vec<u32>], seed: u64) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "# seed = {seed}")?;
    for (i, ids) in frames.iter().enumerate() {
        for id in ids {
            writeln!(w, "{i} {id}")?;
        }
    }
    Ok(())
}

// ── Target rendering ─────────────────────────────────────────────────────

/// Binary `[H, W]` map: 1 within Chebyshev `radius` of each rounded center.
pub fn render_target(points: &[(f64, f64)], height: usize, width: usize, radius: usize) -> Tensor {
    let mut map = vec![0.0; height * width];
    let r = radius as isize;
    for &(x, y) in points {
        let cx = x.round() as isize;
        let cy = y.round() as isize;
        for row in (cy - r).max(0)..=(cy + r).min(height as isize - 1) {
            for col in (cx - r).max(0)..=(cx + r).min(width as isize - 1) {
                map[row as usize * width + col as usize] = 1.0;
            }
        }
    }
    Tensor::from_vec(&[height, width], map).expect("target extents are positive")
}

// ── Synthetic scene generation ───────────────────────────────────────────

struct Actor {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
    id: u32,
}

/// Occluding rectangle (row/col bounds, inclusive) for a head at `(x, y)`.
fn occluder_rect(
    x: f64,
    y: f64,
    sigma: f64,
    height: usize,
    width: usize,
) -> (usize, usize, usize, usize) {
    let half = 1.5 * sigma;
    let cy = y + sigma; // centered below the head center: partial coverage
    let r0 = (cy - half).round().max(0.0) as usize;
    let r1 = ((cy + half).round() as usize).min(height - 1);
    let c0 = (x - half).round().max(0.0) as usize;
    let c1 = ((x + half).round() as usize).min(width - 1);
    (r0, r1.max(r0), c0, c1.max(c0))
}

/// Smooth background texture in `[0, 1]`: bilinear upsampling of a coarse
/// random grid.
fn smooth_texture(height: usize, width: usize, rng: &mut Rng) -> Vec<f64> {
    let cell = 8.0;
    let gh = (height as f64 / cell).ceil() as usize + 2;
    let gw = (width as f64 / cell).ceil() as usize + 2;
    let grid: Vec<f64> = (0..gh * gw).map(|_| rng.gen_range(0.0..1.0)).collect();
    let mut out = vec![0.0; height * width];
    for r in 0..height {
        for c in 0..width {
            let fy = r as f64 / cell;
            let fx = c as f64 / cell;
            let (gy, gx) = (fy.floor() as usize, fx.floor() as usize);
            let (ty, tx) = (fy - gy as f64, fx - gx as f64);
            let at = |r: usize, c: usize| grid[r * gw + c];
            out[r * width + c] = at(gy, gx) * (1.0 - ty) * (1.0 - tx)
                + at(gy, gx + 1) * (1.0 - ty) * tx
                + at(gy + 1, gx) * ty * (1.0 - tx)
                + at(gy + 1, gx + 1) * ty * tx;
        }
    }
    out
}

/// 3×3 box blur with replicated borders, applied per channel.
fn box_blur3(frame: &mut [f64], height: usize, width: usize, channels: usize) {
    let src = frame.to_vec();
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    for r in 0..height {
        for c in 0..width {
            for ch in 0..channels {
                let mut acc = 0.0;
                for dr in -1..=1isize {
                    for dc in -1..=1isize {
                        let rr = clamp(r as isize + dr, height);
                        let cc = clamp(c as isize + dc, width);
                        acc += src[(rr * width + cc) * channels + ch];
                    }
                }
                frame[(r * width + c) * channels + ch] = acc / 9.0;
            }
        }
    }
}

/// Generate one video: textured background, Gaussian-blob heads moving
/// under constant velocity plus Brownian jitter, occluders, blur, noise.
pub fn synth_scene(config: &SynthConfig) -> Result<Video> {
    config.validate()?;
    let (h, w) = (config.height, config.width);
    let mut rng = derive_rng(&[config.seed]);
    let background = smooth_texture(h, w, &mut rng);

    let count = if config.people_min == config.people_max {
        config.people_min
    } else {
        rng.gen_range(config.people_min..=config.people_max)
    };
    let mut actors: Vec<Actor> = (0..count)
        .map(|id| Actor {
            x: if w > 1 { rng.gen_range(0.0..w as f64 - 1.0) } else { 0.0 },
            y: if h > 1 { rng.gen_range(0.0..h as f64 - 1.0) } else { 0.0 },
            vx: config.velocity_std * standard_normal(&mut rng),
            vy: config.velocity_std * standard_normal(&mut rng),
            id: id as u32,
        })
        .collect();

    let mut frames = Vec::with_capacity(config.frames_per_video);
    let mut annotations = Vec::with_capacity(config.frames_per_video);
    let mut occluded = Vec::with_capacity(config.frames_per_video);
    for frame_idx in 0..config.frames_per_video {
        if frame_idx > 0 {
            for a in actors.iter_mut() {
                a.x = (a.x + a.vx + config.jitter_std * standard_normal(&mut rng))
                    .clamp(0.0, w as f64 - 1.0);
                a.y = (a.y + a.vy + config.jitter_std * standard_normal(&mut rng))
                    .clamp(0.0, h as f64 - 1.0);
            }
        }

        let mut intensity: Vec<f64> =
            background.iter().map(|&b| 0.15 + 0.25 * b).collect();
        // Heads: additive anti-aliased Gaussian blobs.
        for a in &actors {
            let sigma = config.head_radius(a.y) / 2.0;
            let reach = (3.0 * sigma).ceil() as isize;
            let (cx, cy) = (a.x, a.y);
            let r0 = (cy as isize - reach).max(0);
            let r1 = (cy as isize + reach).min(h as isize - 1);
            let c0 = (cx as isize - reach).max(0);
            let c1 = (cx as isize + reach).min(w as isize - 1);
            for row in r0..=r1 {
                for col in c0..=c1 {
                    let d2 = (row as f64 - cy).powi(2) + (col as f64 - cx).powi(2);
                    intensity[row as usize * w + col as usize] +=
                        0.55 * (-d2 / (2.0 * sigma * sigma)).exp();
                }
            }
        }
        // Occluders: opaque dark squares over the lower part of a head.
        let mut frame_occluded = Vec::new();
        for a in &actors {
            if rng.gen_range(0.0..1.0) < config.occlusion_prob {
                let sigma = config.head_radius(a.y) / 2.0;
                let (r0, r1, c0, c1) = occluder_rect(a.x, a.y, sigma, h, w);
                for row in r0..=r1 {
                    for col in c0..=c1 {
                        intensity[row * w + col] = 0.1;
                    }
                }
                frame_occluded.push(a.id);
            }
        }

        let mut pixels = vec![0.0; h * w * 3];
        for (i, &v) in intensity.iter().enumerate() {
            let noisy = v + config.noise_std * standard_normal(&mut rng);
            for ch in 0..3 {
                pixels[i * 3 + ch] = noisy;
            }
        }
        if rng.gen_range(0.0..1.0) < config.blur_prob {
            box_blur3(&mut pixels, h, w, 3);
        }
        for p in pixels.iter_mut() {
            *p = p.clamp(0.0, 1.0);
        }

        let heads: FrameHeads = actors
            .iter()
            .map(|a| {
                let half = 1.5 * config.head_radius(a.y) / 2.0;
                Head {
                    x: a.x,
                    y: a.y,
                    id: a.id,
                    bbox: Some([a.x - half, a.y - half, a.x + half, a.y + half]),
                }
            })
            .collect();
        frames.push(Tensor::from_vec(&[h, w, 3], pixels)?);
        annotations.push(heads);
        occluded.push(frame_occluded);
    }
    Ok(Video { height: h, width: w, frames, annotations, occluded })
}

/// Slice a video into sliding clips of length `m` at the given stride.
pub fn make_clips(video: &Video, m: usize, stride: usize) -> Result<Vec<Clip>> {
    if m == 0 || stride == 0 {
        return Err(Error::contract("clip length and stride must be positive"));
    }
    if video.frames.len() < m {
        return Err(Error::contract(format!(
            "video has {} frames, need at least {m}",
            video.frames.len()
        )));
    }
    let mut clips = Vec::new();
    let mut start = 0;
    while start + m <= video.frames.len() {
        clips.push(Clip {
            frames: video.frames[start..start + m].to_vec(),
            annotations: video.annotations[start..start + m].to_vec(),
            occluded: video.occluded[start..start + m].to_vec(),
            objective: m / 2,
        });
        start += stride;
    }
    Ok(clips)
}

// ── PPM I/O ──────────────────────────────────────────────────────────────

/// Write an `[H, W, 3]` tensor as an 8-bit binary PPM.
pub fn write_ppm(path: &Path, frame: &Tensor, seed: u64) -> Result<()> {
    let (h, w, c) = dims3(frame)?;
    if c != 3 {
        return Err(Error::shape(format!("PPM frames need 3 channels, got {c}")));
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    write!(out, "P6\n# seed = {seed}\n{w} {h}\n255\n")?;
    let bytes: Vec<u8> = frame
        .data()
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    out.write_all(&bytes)?;
    Ok(())
}

/// Read an 8-bit binary PPM into an `[H, W, 3]` tensor scaled to `[0, 1]`.
pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    // Header: P6, width, height, maxval — whitespace-separated with
    // optional `#` comments — then one whitespace byte and binary data.
    let mut pos = 0;
    let mut fields = Vec::new();
    while fields.len() < 4 {
        if pos >= bytes.len() {
            return Err(Error::format(1, "truncated PPM header"));
        }
        let b = bytes[pos];
        if b == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else if b.is_ascii_whitespace() {
            pos += 1;
        } else {
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).unwrap_or("").to_string());
        }
    }
    pos += 1; // single whitespace after maxval
    if fields[0] != "P6" {
        return Err(Error::format(1, "not a binary PPM (want P6)"));
    }
    let w: usize = fields[1].parse().map_err(|_| Error::format(1, "bad width"))?;
    let h: usize = fields[2].parse().map_err(|_| Error::format(1, "bad height"))?;
    if fields[3] != "255" {
        return Err(Error::format(1, "unsupported maxval (want 255)"));
    }
    let need = h * w * 3;
    if bytes.len() < pos + need {
        return Err(Error::format(1, "truncated PPM payload"));
    }
    let data: Vec<f64> = bytes[pos..pos + need].iter().map(|&b| b as f64 / 255.0).collect();
    Tensor::from_vec(&[h, w, 3], data)
}

// ── Corpus output ────────────────────────────────────────────────────────

fn video_dir_name(index: usize) -> String {
    format!("video_{index:04}")
}

/// Generate `n_videos` videos (parallel, per-video seed `seed ^ index`) and
/// write frames, annotations, occlusions, and a manifest under `dir`.
pub fn write_corpus(dir: &Path, config: &SynthConfig, n_videos: usize) -> Result<()> {
    config.validate()?;
    fs::create_dir_all(dir)?;
    let videos: Vec<Video> = (0..n_videos)
        .into_par_iter()
        .map(|i| {
            let cfg = SynthConfig { seed: config.seed ^ i as u64, ..config.clone() };
            synth_scene(&cfg)
        })
        .collect::<Result<_>>()?;
    let mut manifest = BufWriter::new(fs::File::create(dir.join("manifest.txt"))?);
    writeln!(manifest, "# seed = {}", config.seed)?;
    writeln!(manifest, "# video n_frames total_heads")?;
    for (i, video) in videos.iter().enumerate() {
        let vdir = dir.join(video_dir_name(i));
        fs::create_dir_all(&vdir)?;
        for (f, frame) in video.frames.iter().enumerate() {
            write_ppm(&vdir.join(format!("frame_{f:06}.ppm")), frame, config.seed)?;
        }
        write_annotations(&vdir.join("annotations.txt"), &video.annotations, config.seed)?;
        write_occlusions(&vdir.join("occlusions.txt"), &video.occluded, config.seed)?;
        let total: usize = video.annotations.iter().map(Vec::len).sum();
        writeln!(manifest, "{} {} {}", video_dir_name(i), video.frames.len(), total)?;
    }
    Ok(())
}

/// One manifest row.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub dir: String,
    pub n_frames: usize,
    pub total_heads: usize,
}

/// Read `manifest.txt` rows.
pub fn load_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(dir.join("manifest.txt"))?;
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 3 {
            return Err(Error::format(lineno + 1, "expected `video n_frames total_heads`"));
        }
        entries.push(ManifestEntry {
            dir: toks[0].to_string(),
            n_frames: toks[1]
                .parse()
                .map_err(|_| Error::format(lineno + 1, "bad frame count"))?,
            total_heads: toks[2]
                .parse()
                .map_err(|_| Error::format(lineno + 1, "bad head total"))?,
        });
    }
    Ok(entries)
}

/// Load one video directory written by [`write_corpus`].
pub fn load_video(dir: &Path, n_frames: usize) -> Result<Video> {
    let mut frames = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        frames.push(read_ppm(&dir.join(format!("frame_{f:06}.ppm")))?);
    }
    if frames.is_empty() {
        return Err(Error::validation(format!("video {} has no frames", dir.display())));
    }
    let (h, w, _) = dims3(&frames[0])?;
    let mut annotations = load_annotations(&dir.join("annotations.txt"), h, w)?;
    if annotations.len() > n_frames {
        return Err(Error::validation("annotations reference more frames than exist"));
    }
    annotations.resize_with(n_frames, Vec::new);
    let occluded = load_occlusions(&dir.join("occlusions.txt"), n_frames)?;
    Ok(Video { height: h, width: w, frames, annotations, occluded })
}

/// Load every video listed in a corpus manifest.
pub fn load_corpus(dir: &Path) -> Result<Vec<Video>> {
    load_manifest(dir)?
        .iter()
        .map(|e| load_video(&dir.join(&e.dir), e.n_frames))
        .collect()
}

/// Corpus directory layout helper: path to a video directory.
pub fn corpus_video_dir(dir: &Path, index: usize) -> PathBuf {
    dir.join(video_dir_name(index))
}
