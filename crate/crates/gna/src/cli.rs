//! Command-line interface.
//!
//! Subcommands: `gen-data`, `train`, `eval`, `bench-attn`, `verify-bound`,
//! and `plot`, each taking `--config PATH [--seed N] [--out DIR]` (`plot`
//! additionally takes the CSV to render as a positional argument and its
//! `--config` is optional). Exit codes: 0 success, 1 usage error, 2 invalid
//! configuration or input, 3 runtime failure. `GNA_THREADS` caps worker
//! parallelism. Every data file written starts with a `# seed = N` header;
//! re-running a command with the same inputs reproduces every output byte
//! except wall-clock timing columns.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::bench::{run_bench, write_bench_error_csv, write_bench_seconds_csv};
use crate::bounds::{bound_tightness_report, run_verification, FeatureKind, TightnessRow};
use crate::config::{load_config, FileConfig};
use crate::data::{load_corpus, make_clips, write_corpus, Clip, SynthConfig, Video};
use crate::error::{Error, Result};
use crate::evaluation::{find_peaks, metric_report, DetectionSet, MetricReport};
use crate::model::{
    gnanet_forward, load_checkpoint, s_gnanet_forward, Architecture, Mode, TapedParams,
};
use crate::plot::plot_csv_to_svg;
use crate::rng::{derive_rng, rng_from_seed};
use crate::tensor::tape::Tape;
use crate::training::{train_loop, write_train_log};

/// Exit code of a successful run.
pub const EXIT_OK: i32 = 0;
/// Exit code for command-line usage errors.
pub const EXIT_USAGE: i32 = 1;
/// Exit code for invalid configuration or input data.
pub const EXIT_VALIDATION: i32 = 2;
/// Exit code for runtime failures, including a failed bound verification.
pub const EXIT_RUNTIME: i32 = 3;

/// Seed offset separating the test split's generator stream from the
/// training split's.
const TEST_SPLIT_SALT: u64 = 0x7357_5EED;

#[derive(Parser)]
#[command(
    name = "gna",
    version,
    about = "Gaussian neighborhood attention: data, training, evaluation, benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic crowd-video corpus (train and test splits).
    GenData(CommonArgs),
    /// Train a model on the corpus's training split.
    Train(CommonArgs),
    /// Evaluate a checkpoint on the corpus's test split.
    Eval(CommonArgs),
    /// Benchmark the attention kernels across grid sizes.
    BenchAttn(CommonArgs),
    /// Numerically verify the sparse-attention error bound.
    VerifyBound(CommonArgs),
    /// Render a CSV table to an SVG chart.
    Plot(PlotArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Configuration file (`key = value` lines under bracketed sections).
    #[arg(long)]
    config: PathBuf,
    /// Override every seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    /// CSV file to render.
    csv: PathBuf,
    /// Configuration file; optional because plotting only reads the CSV.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Accepted for interface uniformity; plotting draws no random numbers.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

/// A fully resolved invocation: validated file configuration (with any seed
/// override applied) plus the output directory, already created.
pub struct RunConfig {
    pub config: FileConfig,
    pub out: PathBuf,
}

impl RunConfig {
    /// Load `config_path`, apply `seed`, and create `out`.
    pub fn prepare(config_path: &Path, seed: Option<u64>, out: &Path) -> Result<Self> {
        let mut config = load_config(config_path)?;
        if let Some(seed) = seed {
            config.override_seed(seed);
        }
        fs::create_dir_all(out)?;
        Ok(Self { config, out: out.to_path_buf() })
    }

    /// Resolve a configured path against the output directory.
    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.out.join(path)
        }
    }

    fn corpus_root(&self) -> PathBuf {
        self.resolve(&self.config.data.dir)
    }
}

/// Parse arguments from the process environment, run the selected command,
/// and return the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = if err.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = err.print();
            return code;
        }
    };
    init_thread_pool();
    let result = match &cli.command {
        Command::GenData(a) => common(a).and_then(|run| cmd_gen_data(&run)),
        Command::Train(a) => common(a).and_then(|run| cmd_train(&run)),
        Command::Eval(a) => common(a).and_then(|run| cmd_eval(&run)),
        Command::BenchAttn(a) => common(a).and_then(|run| cmd_bench_attn(&run)),
        Command::VerifyBound(a) => common(a).and_then(|run| cmd_verify_bound(&run)),
        Command::Plot(a) => cmd_plot(a),
    };
    match result {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn common(args: &CommonArgs) -> Result<RunConfig> {
    RunConfig::prepare(&args.config, args.seed, &args.out)
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Format { .. } | Error::Validation(_) => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

/// Apply `GNA_THREADS` to the global worker pool. Unset means the default
/// (one worker per core); invalid values are reported and ignored.
fn init_thread_pool() {
    if let Ok(raw) = std::env::var("GNA_THREADS") {
        match raw.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => eprintln!("warning: ignoring invalid GNA_THREADS value {raw:?}"),
        }
    }
}

fn checkpoint_name(arch: Architecture) -> &'static str {
    match arch {
        Architecture::GnaNet => "gnanet.gnac",
        Architecture::SGnaNet => "s_gnanet.gnac",
    }
}

/// Cut every video into overlapping clips of `m` frames (stride 1).
fn corpus_clips(videos: &[Video], m: usize) -> Result<Vec<Clip>> {
    let mut clips = Vec::new();
    for video in videos {
        clips.extend(make_clips(video, m, 1)?);
    }
    if clips.is_empty() {
        return Err(Error::validation(format!("corpus yields no clips of {m} frames")));
    }
    Ok(clips)
}

// ── gen-data ─────────────────────────────────────────────────────────────

fn cmd_gen_data(run: &RunConfig) -> Result<i32> {
    let data = &run.config.data;
    let root = run.corpus_root();
    write_corpus(&root.join("train"), &data.synth, data.train_videos)?;
    let test_synth = SynthConfig { seed: data.synth.seed ^ TEST_SPLIT_SALT, ..data.synth.clone() };
    write_corpus(&root.join("test"), &test_synth, data.test_videos)?;
    println!(
        "wrote {} train + {} test videos ({} frames each) under {}",
        data.train_videos,
        data.test_videos,
        data.synth.frames_per_video,
        root.display()
    );
    Ok(EXIT_OK)
}

// ── train ────────────────────────────────────────────────────────────────

fn cmd_train(run: &RunConfig) -> Result<i32> {
    let cfg = &run.config;
    let videos = load_corpus(&run.corpus_root().join("train"))?;
    let clips = corpus_clips(&videos, cfg.model.clip_length)?;
    let arch = cfg.train_arch;
    let checkpoint = run.out.join(checkpoint_name(arch));
    let (_params, records) = train_loop(arch, &cfg.model, &cfg.train, &clips, &checkpoint)?;
    write_train_log(&run.out.join("train_log.csv"), &records, cfg.train.seed)?;
    let last = records.last().expect("at least one epoch");
    println!(
        "trained {:?} for {} epochs on {} clips; final mean loss {:.6}",
        arch,
        records.len(),
        clips.len(),
        last.mean_loss
    );
    println!("checkpoint: {}", checkpoint.display());
    Ok(EXIT_OK)
}

// ── eval ─────────────────────────────────────────────────────────────────

/// Forward one clip in test mode and extract peak detections.
fn detect_clip(
    arch: Architecture,
    params: &crate::model::Parameters,
    run: &RunConfig,
    clip: &Clip,
    clip_index: u64,
) -> Result<DetectionSet> {
    let cfg = &run.config;
    let mut rng = derive_rng(&[cfg.eval.seed, clip_index]);
    let mut tape = Tape::new();
    let staged = TapedParams::stage(&mut tape, params);
    let var = match arch {
        Architecture::GnaNet => {
            gnanet_forward(&mut tape, &staged, &clip.frames, &cfg.model, Mode::Test, &mut rng)?
        }
        Architecture::SGnaNet => s_gnanet_forward(
            &mut tape,
            &staged,
            clip.objective_frame(),
            &cfg.model,
            Mode::Test,
            &mut rng,
        )?,
    };
    find_peaks(tape.value(var), cfg.eval.threshold, cfg.eval.window)
}

fn write_metrics_csv(path: &Path, report: &MetricReport, seed: u64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# seed = {seed}")?;
    report.write_csv(&mut w)?;
    Ok(())
}

fn split_report(
    indices: &[usize],
    dets: &[DetectionSet],
    gts: &[Vec<(f64, f64)>],
) -> Result<MetricReport> {
    let d: Vec<DetectionSet> = indices.iter().map(|&i| dets[i].clone()).collect();
    let g: Vec<Vec<(f64, f64)>> = indices.iter().map(|&i| gts[i].clone()).collect();
    metric_report(&d, &g, false)
}

fn print_split(name: &str, n: usize, report: &MetricReport) {
    let (sigma, block) = &report.per_sigma[0];
    println!(
        "{name}: {n} clips, mAP@{sigma} = {:.4}, mAR@{sigma} = {:.4}, MAE = {:.3}",
        block.map, block.mar, report.mae
    );
}

fn cmd_eval(run: &RunConfig) -> Result<i32> {
    let cfg = &run.config;
    let arch = cfg.eval.arch;
    let params = load_checkpoint(&run.resolve(&cfg.eval.checkpoint), &cfg.model)?;
    let videos = load_corpus(&run.corpus_root().join("test"))?;
    let clips = corpus_clips(&videos, cfg.model.clip_length)?;

    let mut dets = Vec::with_capacity(clips.len());
    let mut gts: Vec<Vec<(f64, f64)>> = Vec::with_capacity(clips.len());
    let mut occluded = Vec::with_capacity(clips.len());
    for (i, clip) in clips.iter().enumerate() {
        dets.push(detect_clip(arch, &params, run, clip, i as u64)?);
        gts.push(clip.objective_heads().iter().map(|h| (h.x, h.y)).collect());
        occluded.push(clip.has_occlusion());
    }

    let all: Vec<usize> = (0..clips.len()).collect();
    let occ: Vec<usize> = all.iter().copied().filter(|&i| occluded[i]).collect();
    let clear: Vec<usize> = all.iter().copied().filter(|&i| !occluded[i]).collect();

    let seed = cfg.eval.seed;
    for (name, indices) in [("all", &all), ("occluded", &occ), ("clear", &clear)] {
        if indices.is_empty() {
            println!("{name}: 0 clips, skipped");
            continue;
        }
        let report = split_report(indices, &dets, &gts)?;
        write_metrics_csv(&run.out.join(format!("metrics_{name}.csv")), &report, seed)?;
        print_split(name, indices.len(), &report);
    }
    Ok(EXIT_OK)
}

// ── bench-attn ───────────────────────────────────────────────────────────

fn cmd_bench_attn(run: &RunConfig) -> Result<i32> {
    let seed = run.config.eval.seed;
    let rows = run_bench(&run.config.model.gna, seed)?;
    write_bench_seconds_csv(&run.out.join("bench_seconds.csv"), &rows, seed)?;
    write_bench_error_csv(&run.out.join("bench_error.csv"), &rows, seed)?;
    for row in &rows {
        println!(
            "{:>7} {:>2}x{:<2} {:>12.6} ms/call  rel err {:.4}",
            row.kernel,
            row.side,
            row.side,
            row.seconds * 1e3,
            row.rel_error
        );
    }
    Ok(EXIT_OK)
}

// ── verify-bound ─────────────────────────────────────────────────────────

fn write_tightness_csv(path: &Path, rows: &[TightnessRow], seed: u64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# seed = {seed}")?;
    writeln!(w, "strategy,mean_error,mean_bound")?;
    for row in rows {
        writeln!(w, "{},{},{}", row.strategy, row.mean_error, row.mean_bound)?;
    }
    Ok(())
}

fn cmd_verify_bound(run: &RunConfig) -> Result<i32> {
    let seed = run.config.eval.seed;
    let trials = run.config.eval.bound_trials;
    let mut rng = rng_from_seed(seed);
    let report = run_verification(trials, 32, 8, &mut rng);
    let mut w = BufWriter::new(File::create(run.out.join("bound_trials.csv"))?);
    writeln!(w, "# seed = {seed}")?;
    report.write_csv(&mut w)?;
    drop(w);

    let tight = bound_tightness_report(200, FeatureKind::Smooth, &mut rng);
    write_tightness_csv(&run.out.join("bound_tightness.csv"), &tight, seed)?;

    println!(
        "{} trials: {} bound violations, {} spectral violations",
        report.rows.len(),
        report.violations,
        report.spectral_violations
    );
    for row in &tight {
        println!(
            "tightness[{}]: mean error {:.6}, mean bound {:.6}",
            row.strategy, row.mean_error, row.mean_bound
        );
    }
    if report.violations == 0 && report.spectral_violations == 0 {
        Ok(EXIT_OK)
    } else {
        eprintln!("error: the sampled-attention error bound was violated");
        Ok(EXIT_RUNTIME)
    }
}

// ── plot ─────────────────────────────────────────────────────────────────

fn cmd_plot(args: &PlotArgs) -> Result<i32> {
    if let Some(config_path) = &args.config {
        load_config(config_path)?;
    }
    fs::create_dir_all(&args.out)?;
    let stem = args
        .csv
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::validation("CSV path has no usable file name"))?;
    let svg = args.out.join(format!("{stem}.svg"));
    plot_csv_to_svg(&args.csv, &svg)?;
    println!("wrote {}", svg.display());
    Ok(EXIT_OK)
}
