//! Compare sparse Gaussian-neighborhood attention against full attention.
//!
//! Builds a smooth 16×16 feature map, runs full attention as the reference,
//! then a multi-focus GNA pass with a small sampling budget, and reports the
//! relative error together with two structural identities:
//! exhaustive sampling reproduces full attention exactly, and the fused
//! multi-focus output equals the mean of its per-focus plans.
//!
//! Run with: `cargo run --release --example sparse_vs_full`

use gna::attention::{
    full_attention_2d, multi_focus_gna, multi_focus_plan, AttentionPlan, GnaConfig, KeyRef,
};
use gna::rng::rng_from_seed;
use gna::tensor::Tensor;

fn rel_err(a: &Tensor, b: &Tensor) -> f64 {
    let num: f64 =
        a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let den: f64 = b.data().iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

fn main() {
    let (side, d) = (16usize, 8usize);
    let mut rng = rng_from_seed(7);

    // A coarse random field upsampled to the full grid: spatially smooth,
    // the regime Gaussian-neighborhood sampling is designed for.
    let coarse = Tensor::rand_uniform(&[4, 4, d], 0.0, 2.0, &mut rng);
    let mut data = vec![0.0; side * side * d];
    for y in 0..side {
        for x in 0..side {
            let (fy, fx) = (y as f64 * 3.0 / 15.0, x as f64 * 3.0 / 15.0);
            let (y0, x0) = (fy.floor().min(2.0) as usize, fx.floor().min(2.0) as usize);
            let (ty, tx) = (fy - y0 as f64, fx - x0 as f64);
            for c in 0..d {
                let at = |yy: usize, xx: usize| coarse.data()[(yy * 4 + xx) * d + c];
                data[(y * side + x) * d + c] = at(y0, x0) * (1.0 - ty) * (1.0 - tx)
                    + at(y0, x0 + 1) * (1.0 - ty) * tx
                    + at(y0 + 1, x0) * ty * (1.0 - tx)
                    + at(y0 + 1, x0 + 1) * ty * tx;
            }
        }
    }
    let map = Tensor::from_vec(&[side, side, d], data).unwrap();

    let full = full_attention_2d(&map, &map, &map).unwrap();

    let config = GnaConfig { gammas: vec![2.0, 4.0], samples_per_focus: 12, ..GnaConfig::default() };
    let sparse = multi_focus_gna(&map, &map, &map, &config, &mut rng).unwrap();
    let budget = config.gammas.len() * config.samples_per_focus;
    println!(
        "full attention keys/query: {}   GNA keys/query: {}   rel error: {:.4}",
        side * side,
        budget,
        rel_err(&sparse, &full)
    );

    // Exhaustive draw: a plan whose single group lists every cell reproduces
    // full attention to machine precision.
    let all: Vec<KeyRef> = (0..side * side).map(|c| KeyRef { source: 0, cell: c }).collect();
    let groups: Vec<Vec<Vec<KeyRef>>> = (0..side * side).map(|_| vec![all.clone()]).collect();
    let plan = AttentionPlan::from_group_refs((side, side), (side, side), 1, groups).unwrap();
    let exhaustive = gna::attention::attention_with_plan(&map, &[&map], &[&map], &plan).unwrap();
    let dev = exhaustive
        .data()
        .iter()
        .zip(full.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!("exhaustive-draw deviation from full attention: {dev:.2e}");

    // Multi-focus decomposition: the fused two-focus output equals the mean
    // of the two single-focus plans rebuilt from the same draws.
    let fused_plan = multi_focus_plan((side, side), (side, side), &config, 1, 99).unwrap();
    let fused =
        gna::attention::fused_attention_forward(&map, &[&map], &[&map], &fused_plan).unwrap();
    let mut mean = vec![0.0; side * side * d];
    for g in 0..fused_plan.groups_per_query() {
        let groups: Vec<Vec<Vec<KeyRef>>> =
            (0..side * side).map(|q| vec![fused_plan.group(q, g).to_vec()]).collect();
        let single = AttentionPlan::from_group_refs((side, side), (side, side), 1, groups).unwrap();
        let out = gna::attention::attention_with_plan(&map, &[&map], &[&map], &single).unwrap();
        for (m, o) in mean.iter_mut().zip(out.data()) {
            *m += o;
        }
    }
    for m in &mut mean {
        *m /= fused_plan.groups_per_query() as f64;
    }
    println!(
        "fused multi-focus equals mean of per-focus plans: {}",
        if mean == fused.data() { "exact" } else { "MISMATCH" }
    );
}
