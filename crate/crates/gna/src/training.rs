//! Weighted cross-entropy training with plain mini-batch SGD.
//!
//! Each epoch shuffles the clip order, accumulates gradients over fixed-order
//! batches, applies one SGD step per batch, and writes a checkpoint. A NaN
//! batch loss aborts training while the last completed epoch's checkpoint
//! stays on disk.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom as _;

use crate::data::{render_target, Clip};
use crate::model::{
    gnanet_forward, init_gnanet_params, init_s_gnanet_params, s_gnanet_forward, save_checkpoint,
    Architecture, Mode, ModelConfig, Parameters, TapedParams,
};
use crate::rng::{derive_rng, rng_from_seed};
use crate::tensor::{dims3, Tensor};
use crate::tensor::tape::Tape;
use crate::{Error, Result};

/// Learning rate tuned for the full-scale pipeline (pretrained VGG16
/// backbone, large real-video corpora). Desk-scale synthetic training
/// starts from scratch, where such a small step barely moves the loss, so
/// [`TrainConfig::default`] uses `1e-3` instead; either value can be set in
/// the config file.
pub const FULL_SCALE_LR: f64 = 2e-6;

/// Mini-batch size of the full-scale recipe; desk defaults use 4.
pub const FULL_SCALE_BATCH: usize = 16;

/// Chebyshev radius of the rendered ground-truth discs, in pixels.
pub const TARGET_RADIUS: usize = 2;

/// Optimization hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Weight multiplying the positive (head) pixels in the loss.
    pub w_pos: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 30, learning_rate: 1e-3, batch_size: 4, w_pos: 50.0, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::validation("epochs and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0) || !(self.w_pos > 0.0) {
            return Err(Error::validation("learning_rate and w_pos must be positive"));
        }
        Ok(())
    }
}

/// Accumulated gradients keyed by parameter name.
pub type GradMap = BTreeMap<String, Vec<f64>>;

/// One completed epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub seconds: f64,
}

/// Apply `p ← p − lr·g` to every parameter, then clear the accumulator.
pub fn sgd_step(params: &mut Parameters, grads: &mut GradMap, lr: f64) -> Result<()> {
    for (name, tensor) in params.iter_mut() {
        let g = grads
            .get(name)
            .ok_or_else(|| Error::contract(format!("no gradient accumulated for {name}")))?;
        if g.len() != tensor.numel() {
            return Err(Error::shape(format!(
                "gradient for {name} has {} entries, parameter has {}",
                g.len(),
                tensor.numel()
            )));
        }
        for (p, &gi) in tensor.data_mut().iter_mut().zip(g) {
            *p -= lr * gi;
        }
    }
    grads.clear();
    Ok(())
}

fn add_scaled(acc: &mut GradMap, name: &str, grad: Vec<f64>) {
    match acc.get_mut(name) {
        Some(slot) => {
            for (a, g) in slot.iter_mut().zip(grad) {
                *a += g;
            }
        }
        None => {
            acc.insert(name.to_string(), grad);
        }
    }
}

/// Binary ground-truth map for a clip's objective frame.
pub fn clip_target(clip: &Clip) -> Result<Tensor> {
    let (h, w, _) = dims3(clip.objective_frame())?;
    let points: Vec<(f64, f64)> =
        clip.objective_heads().iter().map(|head| (head.x, head.y)).collect();
    Ok(render_target(&points, h, w, TARGET_RADIUS))
}

/// One forward/backward pass over a single clip; returns the loss and adds
/// parameter gradients into `acc`.
fn clip_pass(
    arch: Architecture,
    params: &Parameters,
    clip: &Clip,
    target: &Arc<Tensor>,
    model_cfg: &ModelConfig,
    w_pos: f64,
    draw_salt: &[u64],
    acc: &mut GradMap,
) -> Result<f64> {
    let mut tape = Tape::new();
    let taped = TapedParams::stage(&mut tape, params);
    let mut draw_rng = derive_rng(draw_salt);
    let out = match arch {
        Architecture::GnaNet => {
            gnanet_forward(&mut tape, &taped, &clip.frames, model_cfg, Mode::Train, &mut draw_rng)?
        }
        Architecture::SGnaNet => s_gnanet_forward(
            &mut tape,
            &taped,
            clip.objective_frame(),
            model_cfg,
            Mode::Train,
            &mut draw_rng,
        )?,
    };
    let loss = tape.weighted_bce(out, target.clone(), w_pos)?;
    let value = tape.value(loss).item()?;
    tape.backward(loss)?;
    for (name, &var) in taped.vars() {
        let grad = tape
            .take_grad(var)
            .ok_or_else(|| Error::contract(format!("missing gradient for {name}")))?;
        add_scaled(acc, name, grad);
    }
    Ok(value)
}

/// Train `arch` from scratch on `clips`, checkpointing after every epoch.
///
/// Returns the final parameters with one record per completed epoch. A NaN
/// loss aborts with [`Error::Divergence`]; the checkpoint of the last
/// completed epoch is left on disk.
pub fn train_loop(
    arch: Architecture,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    clips: &[Clip],
    checkpoint_path: &Path,
) -> Result<(Parameters, Vec<TrainRecord>)> {
    model_cfg.validate()?;
    train_cfg.validate()?;
    if clips.is_empty() {
        return Err(Error::contract("training needs at least one clip"));
    }
    let mut rng = rng_from_seed(train_cfg.seed);
    let mut params = match arch {
        Architecture::GnaNet => init_gnanet_params(model_cfg, &mut rng)?,
        Architecture::SGnaNet => init_s_gnanet_params(model_cfg, &mut rng)?,
    };
    let targets: Vec<Arc<Tensor>> = clips
        .iter()
        .map(|clip| clip_target(clip).map(Arc::new))
        .collect::<Result<_>>()?;
    let mut log = Vec::with_capacity(train_cfg.epochs);
    let mut order: Vec<usize> = (0..clips.len()).collect();
    for epoch in 1..=train_cfg.epochs {
        let start = Instant::now();
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(train_cfg.batch_size) {
            let mut grads = GradMap::new();
            for &idx in batch {
                let loss = clip_pass(
                    arch,
                    &params,
                    &clips[idx],
                    &targets[idx],
                    model_cfg,
                    train_cfg.w_pos,
                    &[train_cfg.seed, epoch as u64, idx as u64],
                    &mut grads,
                )?;
                if loss.is_nan() {
                    return Err(Error::Divergence(format!(
                        "loss became NaN in epoch {epoch}"
                    )));
                }
                loss_sum += loss;
            }
            let scale = 1.0 / batch.len() as f64;
            for grad in grads.values_mut() {
                for g in grad.iter_mut() {
                    *g *= scale;
                }
            }
            sgd_step(&mut params, &mut grads, train_cfg.learning_rate)?;
            // The loss clamp keeps even a saturated network's loss finite,
            // so exploding parameters must be caught at the step itself.
            if !params.values().all(Tensor::is_finite) {
                return Err(Error::Divergence(format!(
                    "parameters became non-finite in epoch {epoch}"
                )));
            }
        }
        save_checkpoint(checkpoint_path, &params, model_cfg)?;
        log.push(TrainRecord {
            epoch,
            mean_loss: loss_sum / clips.len() as f64,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((params, log))
}

/// CSV with a seed header and columns `epoch,mean_loss,seconds`.
pub fn write_train_log(path: &Path, records: &[TrainRecord], seed: u64) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "# seed = {seed}")?;
    writeln!(w, "epoch,mean_loss,seconds")?;
    for r in records {
        writeln!(w, "{},{},{}", r.epoch, r.mean_loss, r.seconds)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::GnaConfig;
    use crate::data::{synth_scene, make_clips, SynthConfig};
    use crate::model::load_checkpoint;
    use crate::tensor::gradcheck::{finite_diff, max_rel_err, FD_REL_TOL, FD_STEP};
    use rand::Rng as _;

    fn tiny_model() -> ModelConfig {
        ModelConfig {
            clip_length: 3,
            feature_channels: 8,
            gna: GnaConfig { gammas: vec![1.0], samples_per_focus: 2, test_repeats: 2, seed: 0 },
            identity_attention: false,
        }
    }

    fn tiny_clips(n_videos: usize, seed: u64) -> Vec<Clip> {
        let config = SynthConfig {
            height: 16,
            width: 16,
            frames_per_video: 3,
            people_min: 1,
            people_max: 3,
            occlusion_prob: 0.0,
            blur_prob: 0.0,
            seed,
            ..SynthConfig::default()
        };
        let mut clips = Vec::new();
        for i in 0..n_videos {
            let video =
                synth_scene(&SynthConfig { seed: seed + i as u64, ..config.clone() }).unwrap();
            clips.extend(make_clips(&video, 3, 1).unwrap());
        }
        clips
    }

    fn bce_loss(pred: &[f64], target: &[f64], w_pos: f64) -> f64 {
        let shape = [pred.len()];
        let mut tape = Tape::new();
        let p = tape.constant(Tensor::from_vec(&shape, pred.to_vec()).unwrap());
        let t = Arc::new(Tensor::from_vec(&shape, target.to_vec()).unwrap());
        let loss = tape.weighted_bce(p, t, w_pos).unwrap();
        tape.value(loss).item().unwrap()
    }

    #[test]
    fn bce_closed_forms() {
        let half = vec![0.5; 12];
        let zeros = vec![0.0; 12];
        let ones = vec![1.0; 12];
        assert!((bce_loss(&half, &zeros, 50.0) - 2f64.ln()).abs() < 1e-12);
        assert!((bce_loss(&half, &ones, 50.0) - 50.0 * 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn bce_matches_per_pixel_oracle() {
        let mut rng = rng_from_seed(21);
        let pred: Vec<f64> = (0..16).map(|_| rng.gen_range(0.01..0.99)).collect();
        let target: Vec<f64> = (0..16).map(|_| f64::from(rng.gen_range(0..2) == 1)).collect();
        let w = 50.0;
        let oracle: f64 = pred
            .iter()
            .zip(&target)
            .map(|(&p, &t)| -(w * t * p.ln() + (1.0 - t) * (1.0 - p).ln()))
            .sum::<f64>()
            / 16.0;
        assert!((bce_loss(&pred, &target, w) - oracle).abs() < 1e-12);
    }

    #[test]
    fn bce_is_nonnegative_and_small_when_matched() {
        let mut rng = rng_from_seed(22);
        for _ in 0..50 {
            let pred: Vec<f64> = (0..9).map(|_| rng.gen_range(0.001..0.999)).collect();
            let target: Vec<f64> = (0..9).map(|_| f64::from(rng.gen_range(0..2) == 1)).collect();
            assert!(bce_loss(&pred, &target, 50.0) >= 0.0);
        }
        let matched: Vec<f64> = vec![1.0 - 1e-7; 9];
        let ones = vec![1.0; 9];
        assert!(bce_loss(&matched, &ones, 50.0) < 1e-5);
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let mut rng = rng_from_seed(23);
        let pred: Vec<f64> = (0..12).map(|_| rng.gen_range(0.05..0.95)).collect();
        let target: Vec<f64> = (0..12).map(|_| f64::from(rng.gen_range(0..2) == 1)).collect();
        let shape = [12];
        let analytic = {
            let mut tape = Tape::new();
            let mut pt = Tensor::from_vec(&shape, pred.clone()).unwrap();
            pt.set_requires_grad(true);
            let p = tape.leaf(pt, true);
            let t = Arc::new(Tensor::from_vec(&shape, target.clone()).unwrap());
            let loss = tape.weighted_bce(p, t, 50.0).unwrap();
            tape.backward(loss).unwrap();
            tape.take_grad(p).unwrap()
        };
        let numeric = finite_diff(|x| bce_loss(x, &target, 50.0), &pred, FD_STEP);
        assert!(max_rel_err(&analytic, &numeric) < FD_REL_TOL);
    }

    #[test]
    fn sgd_step_applies_update_and_clears() {
        let mut params = Parameters::new();
        params.insert("p".into(), Tensor::from_vec(&[1], vec![1.0]).unwrap());
        let mut grads = GradMap::new();
        grads.insert("p".into(), vec![2.0]);
        sgd_step(&mut params, &mut grads, 0.1).unwrap();
        assert!((params["p"].data()[0] - 0.8).abs() < 1e-15);
        assert!(grads.is_empty());
    }

    #[test]
    fn sgd_step_zero_lr_is_identity() {
        let mut rng = rng_from_seed(24);
        let mut params = Parameters::new();
        params.insert("w".into(), Tensor::rand_uniform(&[3, 3], -1.0, 1.0, &mut rng));
        let before = params["w"].clone();
        let mut grads = GradMap::new();
        grads.insert("w".into(), vec![5.0; 9]);
        sgd_step(&mut params, &mut grads, 0.0).unwrap();
        assert_eq!(params["w"], before);
    }

    #[test]
    fn sgd_step_descends_quadratic() {
        // f(p) = p² from p = 1 with lr 0.1: p ← 1 − 0.1·2 = 0.8.
        let mut params = Parameters::new();
        params.insert("p".into(), Tensor::from_vec(&[1], vec![1.0]).unwrap());
        let f = |p: f64| p * p;
        let before = f(params["p"].data()[0]);
        let mut grads = GradMap::new();
        grads.insert("p".into(), vec![2.0 * params["p"].data()[0]]);
        sgd_step(&mut params, &mut grads, 0.1).unwrap();
        let after = f(params["p"].data()[0]);
        assert!((params["p"].data()[0] - 0.8).abs() < 1e-15);
        assert!(after < before);
    }

    #[test]
    fn sgd_step_requires_all_gradients() {
        let mut params = Parameters::new();
        params.insert("p".into(), Tensor::zeros(&[2]));
        let mut grads = GradMap::new();
        assert!(matches!(
            sgd_step(&mut params, &mut grads, 0.1),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn one_clip_one_epoch_gives_one_record() {
        let clips = tiny_clips(1, 31);
        let tmp = tempfile::tempdir().unwrap();
        let ckpt = tmp.path().join("model.gnac");
        let cfg = TrainConfig { epochs: 1, ..TrainConfig::default() };
        let (_, log) =
            train_loop(Architecture::GnaNet, &tiny_model(), &cfg, &clips[..1], &ckpt).unwrap();
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].epoch, 1);
        assert!(log[0].mean_loss.is_finite());
        assert!(ckpt.exists());
    }

    #[test]
    fn fixed_seed_reproduces_epoch_losses() {
        let clips = tiny_clips(2, 32);
        let tmp = tempfile::tempdir().unwrap();
        let cfg = TrainConfig { epochs: 2, seed: 7, ..TrainConfig::default() };
        let run = |name: &str| {
            let ckpt = tmp.path().join(name);
            let (_, log) =
                train_loop(Architecture::SGnaNet, &tiny_model(), &cfg, &clips, &ckpt).unwrap();
            log.iter().map(|r| r.mean_loss).collect::<Vec<_>>()
        };
        assert_eq!(run("a.gnac"), run("b.gnac"));
    }

    #[test]
    fn divergence_keeps_last_good_checkpoint() {
        let clips = tiny_clips(1, 33);
        let tmp = tempfile::tempdir().unwrap();
        let ckpt = tmp.path().join("model.gnac");
        let model_cfg = tiny_model();
        // Large enough that the first step overflows activations to ±inf,
        // whose mixed-sign sums produce NaN on the next pass.
        let cfg = TrainConfig { epochs: 4, learning_rate: 1e40, ..TrainConfig::default() };
        let err = train_loop(Architecture::GnaNet, &model_cfg, &cfg, &clips[..1], &ckpt)
            .unwrap_err();
        assert!(matches!(err, Error::Divergence(_)), "got {err:?}");
        let saved = load_checkpoint(&ckpt, &model_cfg).unwrap();
        for tensor in saved.values() {
            assert!(tensor.is_finite());
        }
    }

    #[test]
    fn loss_decreases_on_tiny_problem() {
        let clips = tiny_clips(2, 34);
        let tmp = tempfile::tempdir().unwrap();
        let ckpt = tmp.path().join("model.gnac");
        let cfg = TrainConfig { epochs: 8, seed: 3, ..TrainConfig::default() };
        let (_, log) =
            train_loop(Architecture::SGnaNet, &tiny_model(), &cfg, &clips, &ckpt).unwrap();
        let first = log.first().unwrap().mean_loss;
        let last = log.last().unwrap().mean_loss;
        assert!(last < first, "loss went {first} -> {last}");
    }

    #[test]
    fn train_log_csv_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("log.csv");
        let records = vec![
            TrainRecord { epoch: 1, mean_loss: 0.75, seconds: 1.5 },
            TrainRecord { epoch: 2, mean_loss: 0.5, seconds: 1.25 },
        ];
        write_train_log(&path, &records, 9).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# seed = 9");
        assert_eq!(lines[1], "epoch,mean_loss,seconds");
        assert_eq!(lines[2], "1,0.75,1.5");
        assert_eq!(lines[3], "2,0.5,1.25");
    }

    #[test]
    fn invalid_train_configs_are_rejected() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig { epochs: 0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..ok.clone() }.validate().is_err());
        assert!(TrainConfig { w_pos: -1.0, ..ok }.validate().is_err());
    }
}
