//! Diagnostic: per-tensor gradient scales for one training pass at init.
//!
//! Usage: `cargo run --release --example grad_scale -- <corpus-dir>`

use gna::data::{load_corpus, make_clips};
use gna::model::{gnanet_forward, init_gnanet_params, Mode, ModelConfig, TapedParams};
use gna::rng::{derive_rng, rng_from_seed};
use gna::tensor::tape::Tape;
use gna::training::clip_target;

fn main() {
    let dir = std::env::args().nth(1).expect("corpus dir");
    let videos = load_corpus(std::path::Path::new(&dir).join("train").as_path()).unwrap();
    let model_cfg = ModelConfig { feature_channels: 32, ..ModelConfig::default() };
    let clips = make_clips(&videos[0], model_cfg.clip_length, 1).unwrap();
    let clip = &clips[0];
    let target = clip_target(clip).unwrap();

    let mut rng = rng_from_seed(42);
    let params = init_gnanet_params(&model_cfg, &mut rng).unwrap();

    let mut tape = Tape::new();
    let taped = TapedParams::stage(&mut tape, &params);
    let mut draw_rng = derive_rng(&[42, 1, 0]);
    let out = gnanet_forward(&mut tape, &taped, &clip.frames, &model_cfg, Mode::Train, &mut draw_rng)
        .unwrap();
    let loss = tape.weighted_bce(out, std::sync::Arc::new(target), 50.0).unwrap();
    println!("loss at init: {:.6}", tape.value(loss).item().unwrap());

    // Print the prediction spread too.
    let pred = tape.value(out);
    let lo = pred.data().iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = pred.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = pred.data().iter().sum::<f64>() / pred.data().len() as f64;
    println!("pred min/mean/max: {lo:.4} / {mean:.4} / {hi:.4}");

    tape.backward(loss).unwrap();
    println!("{:<34} {:>12} {:>12} {:>12}", "tensor", "|theta|rms", "|g|rms", "lr*g/theta@.01");
    for (name, &var) in taped.vars() {
        let g = tape.take_grad(var).unwrap();
        let p = params.get(name).unwrap();
        let rms = |v: &[f64]| (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt();
        let gr = rms(&g);
        let pr = rms(p.data());
        let ratio = if pr > 0.0 { 0.01 * gr / pr } else { f64::NAN };
        println!("{name:<34} {pr:>12.3e} {gr:>12.3e} {ratio:>12.3e}");
    }
}
