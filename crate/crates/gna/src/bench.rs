//! Wall-clock and accuracy comparison of the attention kernels.
//!
//! Every kernel is timed on the same random query/key/value maps at several
//! grid sizes and scored against exact full attention. Timings use an
//! auto-calibrated repetition count so fast kernels are averaged over many
//! calls while slow ones are not over-sampled.

use std::path::Path;
use std::time::Instant;

use crate::attention::{
    disk_random_attention, full_attention_2d, local_attention, multi_focus_gna,
    uniform_random_attention, GnaConfig,
};
use crate::error::Result;
use crate::rng::derive_rng;
use crate::tensor::Tensor;

/// Grid sides benchmarked by [`run_bench`], smallest first.
pub const BENCH_SIDES: [usize; 3] = [8, 16, 32];

/// Channel width of the benchmark maps.
pub const BENCH_D: usize = 16;

/// Window of the local-attention baseline (81 keys per query, comparable to
/// the Gaussian kernel's sample budget).
pub const BENCH_LOCAL_WINDOW: usize = 9;

/// Kernel names in report order. `full` is the oracle the others are
/// scored against.
pub const BENCH_KERNELS: [&str; 5] = ["full", "gna", "local", "uniform", "disk"];

/// One timed kernel measurement at one grid size.
#[derive(Clone, Debug)]
pub struct BenchRow {
    pub kernel: &'static str,
    /// Grid side; the map has `side × side` queries.
    pub side: usize,
    /// Mean wall-clock seconds per forward call.
    pub seconds: f64,
    /// Relative Frobenius error against full attention (zero for `full`).
    pub rel_error: f64,
}

impl BenchRow {
    /// Queries processed per call.
    pub fn queries(&self) -> usize {
        self.side * self.side
    }

    /// Mean seconds spent per query.
    pub fn seconds_per_query(&self) -> f64 {
        self.seconds / self.queries() as f64
    }
}

/// Time `f`, returning its output and the mean seconds per call. The first
/// call warms caches and calibrates how many repetitions fit a ~50 ms
/// budget; the reported time is the mean over those repetitions (never
/// above the warm-up time).
fn time_kernel<F: FnMut() -> Result<Tensor>>(mut f: F) -> Result<(Tensor, f64)> {
    let start = Instant::now();
    let out = f()?;
    let first = start.elapsed().as_secs_f64();
    let reps = ((0.05 / first.max(1e-9)) as usize).clamp(1, 200);
    let start = Instant::now();
    for _ in 0..reps {
        f()?;
    }
    let mean = start.elapsed().as_secs_f64() / reps as f64;
    Ok((out, mean.min(first)))
}

fn rel_frobenius(out: &Tensor, oracle: &Tensor) -> f64 {
    let num: f64 =
        out.data().iter().zip(oracle.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    let den: f64 = oracle.data().iter().map(|v| v * v).sum::<f64>();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// Bilinearly upsample a coarse random grid to `side × side`. Values sit
/// in `[0, 2]`: zero-mean maps make full attention average everything to
/// nearly zero, and relative error against a near-zero oracle loses
/// meaning. Smooth, positive-mean maps keep the oracle's norm healthy and
/// let neighborhood-aware kernels show their advantage.
fn smooth_map(side: usize, d: usize, rng: &mut crate::rng::Rng) -> Tensor {
    const COARSE: usize = 4;
    let coarse = Tensor::rand_uniform(&[COARSE, COARSE, d], 0.0, 2.0, rng);
    let cdat = coarse.data();
    let scale = (COARSE - 1) as f64 / (side.max(2) - 1) as f64;
    let mut out = vec![0.0; side * side * d];
    for r in 0..side {
        let fr = r as f64 * scale;
        let r0 = fr.floor() as usize;
        let r1 = (r0 + 1).min(COARSE - 1);
        let tr = fr - r0 as f64;
        for c in 0..side {
            let fc = c as f64 * scale;
            let c0 = fc.floor() as usize;
            let c1 = (c0 + 1).min(COARSE - 1);
            let tc = fc - c0 as f64;
            for ch in 0..d {
                let g = |rr: usize, cc: usize| cdat[(rr * COARSE + cc) * d + ch];
                let top = g(r0, c0) * (1.0 - tc) + g(r0, c1) * tc;
                let bot = g(r1, c0) * (1.0 - tc) + g(r1, c1) * tc;
                out[(r * side + c) * d + ch] = top * (1.0 - tr) + bot * tr;
            }
        }
    }
    Tensor::from_vec(&[side, side, d], out).expect("consistent by construction")
}

/// Benchmark every kernel in [`BENCH_KERNELS`] at every side in
/// [`BENCH_SIDES`]. Sparse kernels draw from seeded streams, so everything
/// except the `seconds` column is reproducible for a given `seed` and
/// `config`. The sampled kernels share the Gaussian kernel's key budget
/// (`gammas.len() × samples_per_focus` keys per query).
pub fn run_bench(config: &GnaConfig, seed: u64) -> Result<Vec<BenchRow>> {
    config.validate()?;
    let budget = config.gammas.len() * config.samples_per_focus;
    let widest = config.gammas.iter().fold(f64::MIN, |a, &g| a.max(g));
    let mut rows = Vec::with_capacity(BENCH_SIDES.len() * BENCH_KERNELS.len());
    for (i, &side) in BENCH_SIDES.iter().enumerate() {
        // Self-attention over one smooth map per grid size: with q = k,
        // the high-weight keys of a query are its self-similar neighbors,
        // the oracle output varies per query, and relative errors measure
        // how well each sparse kernel finds that neighborhood.
        let mut map_rng = derive_rng(&[seed, i as u64]);
        let map = smooth_map(side, BENCH_D, &mut map_rng);
        let (q, k, v) = (&map, &map, &map);

        let (oracle, seconds) = time_kernel(|| full_attention_2d(q, k, v))?;
        rows.push(BenchRow { kernel: "full", side, seconds, rel_error: 0.0 });

        // Each timed call clones a frozen stream so repetitions draw the
        // same neighborhoods and the call cost stays comparable.
        let base = derive_rng(&[seed, i as u64, 1]);
        let (out, seconds) = time_kernel(|| {
            let mut rng = base.clone();
            multi_focus_gna(q, k, v, config, &mut rng)
        })?;
        rows.push(BenchRow {
            kernel: "gna",
            side,
            seconds,
            rel_error: rel_frobenius(&out, &oracle),
        });

        let (out, seconds) = time_kernel(|| local_attention(q, k, v, BENCH_LOCAL_WINDOW))?;
        rows.push(BenchRow {
            kernel: "local",
            side,
            seconds,
            rel_error: rel_frobenius(&out, &oracle),
        });

        let base = derive_rng(&[seed, i as u64, 2]);
        let (out, seconds) = time_kernel(|| {
            let mut rng = base.clone();
            uniform_random_attention(q, k, v, budget, &mut rng)
        })?;
        rows.push(BenchRow {
            kernel: "uniform",
            side,
            seconds,
            rel_error: rel_frobenius(&out, &oracle),
        });

        let base = derive_rng(&[seed, i as u64, 3]);
        let (out, seconds) = time_kernel(|| {
            let mut rng = base.clone();
            disk_random_attention(q, k, v, widest, budget, &mut rng)
        })?;
        rows.push(BenchRow {
            kernel: "disk",
            side,
            seconds,
            rel_error: rel_frobenius(&out, &oracle),
        });
    }
    Ok(rows)
}

fn write_wide(
    w: &mut impl std::io::Write,
    rows: &[BenchRow],
    seed: u64,
    value: impl Fn(&BenchRow) -> f64,
) -> Result<()> {
    writeln!(w, "# seed = {seed}")?;
    writeln!(w, "grid,{}", BENCH_KERNELS.join(","))?;
    for &side in &BENCH_SIDES {
        let mut line = side.to_string();
        for kernel in BENCH_KERNELS {
            let row = rows
                .iter()
                .find(|r| r.kernel == kernel && r.side == side)
                .ok_or_else(|| crate::error::Error::contract("missing benchmark row"))?;
            line.push(',');
            line.push_str(&value(row).to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

/// Write per-call timings as a wide CSV (`grid` column plus one column per
/// kernel), ready for plotting.
pub fn write_bench_seconds_csv(path: &Path, rows: &[BenchRow], seed: u64) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_wide(&mut w, rows, seed, |r| r.seconds)
}

/// Write relative errors against full attention as a wide CSV with the same
/// shape as [`write_bench_seconds_csv`].
pub fn write_bench_error_csv(path: &Path, rows: &[BenchRow], seed: u64) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_wide(&mut w, rows, seed, |r| r.rel_error)
}
