use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context};
use clap::{Args, CommandFactory, Parser, Subcommand};
use serde_json::json;

use segclust::bench::{
    format_table, parameter_sweep, run_comparison, segment, sweep_to_csv, validate_config,
    write_report, Algorithm, BenchOptions, SuiteItem, Sweep, SweepParam,
};
use segclust::fcm::{FcmConfig, FcmInit};
use segclust::hybrid::HybridConfig;
use segclust::io::{read_image, read_mask, write_image, write_json, write_labelmap, write_mask};
use segclust::kmeans::{KMeansConfig, KMeansInit};
use segclust::metrics::match_tumor_cluster;
use segclust::phantom::{phantom_suite_sized, Difficulty, DEFAULT_SUITE_SIZE};
use segclust::preprocess::{ClaheParams, GaussianParams, Preprocess};
use segclust::ModelConfig;

mod config;

#[derive(Debug, Parser)]
#[command(
    name = "segclust",
    version,
    about = "Clustering-based tumor segmentation for grayscale MR slices"
)]
#[command(propagate_version = true, args_override_self = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic phantoms with exact tumor masks.
    Phantom(PhantomArgs),
    /// Segment one image.
    Segment(SegmentArgs),
    /// Compare algorithms over a suite of images with ground truth.
    Benchmark(BenchmarkArgs),
    /// Repeat the benchmark over a range of `k` or `m`.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Flat `key = value` file of defaults; command-line flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PhantomArgs {
    #[arg(long, default_value_t = 20)]
    count: usize,
    #[arg(long, default_value = "blurred")]
    difficulty: Difficulty,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Side length in pixels.
    #[arg(long, default_value_t = DEFAULT_SUITE_SIZE)]
    size: usize,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Clone, Args)]
struct ModelArgs {
    /// Cluster count for K-Means (default 3); also used for `c` when `--c` is absent.
    #[arg(long)]
    k: Option<usize>,
    /// Cluster count for FCM (default 4); also used for `k` when `--k` is absent.
    #[arg(long)]
    c: Option<usize>,
    /// Fuzzifier, must exceed 1.
    #[arg(long, default_value_t = 2.0)]
    m: f64,
    /// Hybrid blend weight of the neighborhood mean.
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    /// Hybrid neighborhood half-width.
    #[arg(long, default_value_t = 1)]
    window: usize,
    /// Regularize the hybrid memberships once at the end instead of every iteration.
    #[arg(long)]
    regularize_once: bool,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// K-Means restarts; the lowest objective wins.
    #[arg(long, default_value_t = 1)]
    restarts: usize,
    /// K-Means initialization: `random` or `kmeans++`.
    #[arg(long, default_value = "random")]
    init: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Args)]
struct PreprocessArgs {
    /// Gaussian sigma in pixels.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 2.0)]
    clahe_clip: f64,
    /// CLAHE tile grid, `N` or `NxM`.
    #[arg(long, default_value = "8x8")]
    clahe_tiles: String,
    /// Skip Gaussian smoothing and CLAHE.
    #[arg(long)]
    no_preprocess: bool,
}

#[derive(Debug, Args)]
struct SegmentArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, default_value = "kmeans")]
    algo: Algorithm,
    /// Label image to write (PGM or PNG by extension).
    #[arg(long)]
    out: PathBuf,
    /// Run summary JSON; defaults to the label image path with a `.json` extension.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Ground-truth mask; adds dice to the summary.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    preprocess: PreprocessArgs,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct BenchmarkArgs {
    /// Directory of `image_*.pgm|png` files with matching `mask_*` files.
    #[arg(long, conflicts_with = "generate")]
    suite_dir: Option<PathBuf>,
    /// Generate this many phantoms (default 20 when no suite directory is given).
    #[arg(long)]
    generate: Option<usize>,
    #[arg(long, default_value = "blurred")]
    difficulty: Difficulty,
    /// Comma-separated algorithms.
    #[arg(long, default_value = "kmeans,fcm", value_delimiter = ',', action = clap::ArgAction::Set)]
    algos: Vec<Algorithm>,
    /// Process images one at a time for uncontended timing.
    #[arg(long)]
    serial: bool,
    #[arg(long)]
    out_dir: PathBuf,
    /// Skip writing per-image label images.
    #[arg(long)]
    no_label_images: bool,
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    preprocess: PreprocessArgs,
    #[command(flatten)]
    config: ConfigArg,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    param: SweepParam,
    /// Inclusive range `lo:hi`.
    #[arg(long)]
    range: String,
    /// Defaults to 1 for `k` and 0.5 for `m`.
    #[arg(long)]
    step: Option<f64>,
    #[command(flatten)]
    bench: BenchmarkArgs,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast_ref::<segclust::Error>() {
            Some(segclust::Error::Parameter(_)) => Failure::Usage(format!("{e:#}")),
            _ => Failure::Runtime(e),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn validated(e: segclust::Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn main() -> ExitCode {
    let args: Vec<OsString> = std::env::args_os().collect();
    let args = match splice_config(args) {
        Ok(a) => a,
        Err(f) => return report(f),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Phantom(a) => cmd_phantom(a),
        Command::Segment(a) => cmd_segment(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    match f {
        Failure::Usage(msg) => {
            eprintln!("error: {msg}");
            eprintln!("\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Failure::Runtime(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

/// Inserts config-file flags right after the subcommand name.
fn splice_config(args: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let Some(path) = config::find_config_path(&args) else {
        return Ok(args);
    };
    let Some(pos) = args.iter().position(|a| {
        matches!(
            a.to_str(),
            Some("phantom" | "segment" | "benchmark" | "sweep")
        )
    }) else {
        return Ok(args);
    };
    let cmd = Cli::command();
    let sub = cmd
        .find_subcommand(args[pos].to_str().unwrap_or_default())
        .ok_or_else(|| usage("unknown subcommand"))?;
    let entries = config::load(Path::new(&path)).map_err(|e| match e {
        config::ConfigError::Read(m) => Failure::Runtime(anyhow!(m)),
        config::ConfigError::Syntax(m) => Failure::Usage(m),
    })?;
    let flags = config::to_flags(&entries, sub).map_err(|e| match e {
        config::ConfigError::Read(m) => Failure::Runtime(anyhow!(m)),
        config::ConfigError::Syntax(m) => Failure::Usage(m),
    })?;
    let mut out = args[..=pos].to_vec();
    out.extend(flags);
    out.extend_from_slice(&args[pos + 1..]);
    Ok(out)
}

impl PreprocessArgs {
    fn build(&self) -> Result<Preprocess, Failure> {
        if self.no_preprocess {
            return Ok(Preprocess::disabled());
        }
        let (tiles_x, tiles_y) = parse_tiles(&self.clahe_tiles)?;
        let p = Preprocess {
            gaussian: Some(GaussianParams::new(self.sigma).map_err(validated)?),
            clahe: Some(ClaheParams {
                tiles_x,
                tiles_y,
                clip_limit: self.clahe_clip,
                ..ClaheParams::default()
            }),
        };
        p.validate().map_err(validated)?;
        Ok(p)
    }
}

fn parse_tiles(s: &str) -> Result<(usize, usize), Failure> {
    let bad = || usage(format!("--clahe-tiles expects N or NxM, got `{s}`"));
    match s.split_once(['x', 'X']) {
        Some((a, b)) => Ok((
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        )),
        None => {
            let n = s.trim().parse().map_err(|_| bad())?;
            Ok((n, n))
        }
    }
}

impl ModelArgs {
    fn kmeans_init(&self) -> Result<KMeansInit, Failure> {
        match self.init.as_str() {
            "random" | "random-pixels" => Ok(KMeansInit::RandomPixels),
            "kmeans++" | "plusplus" => Ok(KMeansInit::PlusPlus),
            other => Err(usage(format!(
                "unknown --init `{other}` (random or kmeans++)"
            ))),
        }
    }

    fn kmeans(&self, k: usize) -> Result<KMeansConfig, Failure> {
        Ok(KMeansConfig {
            k,
            max_iter: self.max_iter,
            tol: self.tol,
            seed: self.seed,
            init: self.kmeans_init()?,
            restarts: self.restarts,
        })
    }

    fn fcm(&self, c: usize, init: FcmInit) -> FcmConfig {
        FcmConfig {
            c,
            m: self.m,
            max_iter: self.max_iter,
            tol: self.tol,
            seed: self.seed,
            init,
        }
    }

    fn build(&self, algo: Algorithm) -> Result<ModelConfig, Failure> {
        let config = match algo {
            Algorithm::KMeans => ModelConfig::KMeans(self.kmeans(self.k.or(self.c).unwrap_or(3))?),
            Algorithm::Fcm => ModelConfig::Fcm(
                self.fcm(self.c.or(self.k).unwrap_or(4), FcmInit::RandomMemberships),
            ),
            Algorithm::Hybrid => {
                let k = self.k.or(self.c).unwrap_or(4);
                let c = self.c.or(self.k).unwrap_or(4);
                ModelConfig::Hybrid(HybridConfig {
                    kmeans: self.kmeans(k)?,
                    fcm: self.fcm(c, FcmInit::CentroidsFromKmeans),
                    alpha: self.alpha,
                    window: self.window,
                    every_iteration: !self.regularize_once,
                })
            }
        };
        validate_config(&config).map_err(validated)?;
        Ok(config)
    }
}

fn cmd_phantom(a: PhantomArgs) -> Result<(), Failure> {
    if a.count == 0 {
        return Err(usage("--count must be at least 1"));
    }
    let phantoms =
        phantom_suite_sized(a.count, a.difficulty, a.seed, a.size, a.size).map_err(validated)?;
    fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("cannot create {}", a.out_dir.display()))?;
    let mut entries = Vec::with_capacity(phantoms.len());
    for (i, p) in phantoms.iter().enumerate() {
        let image = format!("image_{i:03}.pgm");
        let mask = format!("mask_{i:03}.pgm");
        write_image(&p.image, a.out_dir.join(&image)).context("writing phantom image")?;
        write_mask(&p.truth, a.out_dir.join(&mask)).context("writing phantom mask")?;
        entries.push(json!({ "image": image, "mask": mask, "spec": p.spec }));
    }
    let manifest = json!({
        "difficulty": a.difficulty,
        "seed": a.seed,
        "count": a.count,
        "width": a.size,
        "height": a.size,
        "phantoms": entries,
    });
    write_json(&manifest, a.out_dir.join("manifest.json")).context("writing manifest")?;
    println!("wrote {} phantoms to {}", a.count, a.out_dir.display());
    Ok(())
}

fn cmd_segment(a: SegmentArgs) -> Result<(), Failure> {
    let config = a.model.build(a.algo)?;
    let preprocess = a.preprocess.build()?;
    let raw = read_image(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let truth = match &a.truth {
        Some(p) => Some(read_mask(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };

    let start = Instant::now();
    let image = preprocess.apply(&raw).context("preprocessing")?;
    let preprocess_time = start.elapsed().as_secs_f64();
    let seg = segment(&image, &config).context("segmentation")?;

    write_labelmap(&seg.labels, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let dice = match &truth {
        Some(t) => Some(match_tumor_cluster(&seg.labels, t).context("scoring against truth")?),
        None => None,
    };
    let summary = json!({
        "input": a.input,
        "algorithm": a.algo,
        "config": config,
        "preprocess": preprocess.is_enabled().then_some(preprocess),
        "centroids": seg.model.centroids,
        "objective": seg.model.objective,
        "iterations": seg.model.iterations,
        "converged": seg.model.converged,
        "wall_time_s": seg.wall_time_s,
        "preprocess_wall_time_s": preprocess_time,
        "matched_cluster": dice.map(|d| d.0),
        "dice": dice.map(|d| d.1),
    });
    let summary_path = a
        .summary
        .clone()
        .unwrap_or_else(|| a.out.with_extension("json"));
    write_json(&summary, &summary_path)
        .with_context(|| format!("writing {}", summary_path.display()))?;
    println!(
        "{}: {} clusters, {} iterations, objective {:.6}, {:.4} s",
        a.algo,
        seg.model.centroids.len(),
        seg.model.iterations,
        seg.model.objective,
        seg.wall_time_s
    );
    if let Some((cluster, d)) = dice {
        println!("dice {d:.4} (cluster {cluster})");
    }
    Ok(())
}

struct Prepared {
    configs: Vec<ModelConfig>,
    options: BenchOptions,
}

impl BenchmarkArgs {
    fn prepare(&self) -> Result<Prepared, Failure> {
        if self.algos.is_empty() {
            return Err(usage("--algos needs at least one algorithm"));
        }
        let mut configs = Vec::new();
        for &algo in &self.algos {
            if configs.iter().any(|c| Algorithm::of(c) == algo) {
                return Err(usage(format!("algorithm `{algo}` listed twice")));
            }
            configs.push(self.model.build(algo)?);
        }
        if self.generate == Some(0) {
            return Err(usage("--generate must be at least 1"));
        }
        Ok(Prepared {
            configs,
            options: BenchOptions {
                preprocess: self.preprocess.build()?,
                serial: self.serial,
            },
        })
    }

    fn suite(&self) -> Result<Vec<SuiteItem>, Failure> {
        match &self.suite_dir {
            Some(dir) => load_suite(dir),
            None => {
                let n = self.generate.unwrap_or(20);
                let phantoms = phantom_suite_sized(
                    n,
                    self.difficulty,
                    self.model.seed,
                    DEFAULT_SUITE_SIZE,
                    DEFAULT_SUITE_SIZE,
                )
                .map_err(validated)?;
                Ok(SuiteItem::from_phantoms(phantoms))
            }
        }
    }
}

/// Pairs every `image_<id>.<ext>` with `mask_<id>.<ext>` (PGM or PNG).
fn load_suite(dir: &Path) -> Result<Vec<SuiteItem>, Failure> {
    let listing =
        fs::read_dir(dir).with_context(|| format!("reading suite directory {}", dir.display()))?;
    let mut images: Vec<PathBuf> = Vec::new();
    for entry in listing {
        let path = entry.context("listing suite directory")?.path();
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if name.starts_with("image_") && (name.ends_with(".pgm") || name.ends_with(".png")) {
            images.push(path);
        }
    }
    images.sort();
    if images.is_empty() {
        return Err(Failure::Runtime(anyhow!(
            "no image_* files in {}",
            dir.display()
        )));
    }
    images
        .into_iter()
        .map(|path| {
            let file = path
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default();
            let mask_path = path.with_file_name(file.replacen("image_", "mask_", 1));
            let stem = path
                .file_stem()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            Ok(SuiteItem {
                name: stem,
                image: read_image(&path).with_context(|| format!("reading {}", path.display()))?,
                truth: read_mask(&mask_path)
                    .with_context(|| format!("reading {}", mask_path.display()))?,
            })
        })
        .collect()
}

fn cmd_benchmark(a: BenchmarkArgs) -> Result<(), Failure> {
    let prepared = a.prepare()?;
    let suite = a.suite()?;
    let comparison =
        run_comparison(&suite, &prepared.configs, &prepared.options).context("benchmark")?;
    write_report(&comparison, &a.out_dir, !a.no_label_images)
        .with_context(|| format!("writing report to {}", a.out_dir.display()))?;
    print!("{}", format_table(&comparison));
    if let Some(r) = comparison.speed_ratio {
        println!("fcm/kmeans time ratio: {r:.2}");
    }
    for f in &comparison.failures {
        eprintln!(
            "warning: {} on {}: {}",
            f.algorithm.map_or("preprocess".into(), |a| a.to_string()),
            f.input,
            f.error
        );
    }
    if comparison.records.is_empty() {
        return Err(Failure::Runtime(anyhow!("every run failed")));
    }
    Ok(())
}

fn parse_range(s: &str) -> Result<(f64, f64), Failure> {
    let bad = || usage(format!("--range expects lo:hi, got `{s}`"));
    let (lo, hi) = s.split_once(':').ok_or_else(bad)?;
    Ok((
        lo.trim().parse().map_err(|_| bad())?,
        hi.trim().parse().map_err(|_| bad())?,
    ))
}

fn cmd_sweep(a: SweepArgs) -> Result<(), Failure> {
    let (lo, hi) = parse_range(&a.range)?;
    let step = a.step.unwrap_or(match a.param {
        SweepParam::K => 1.0,
        SweepParam::M => 0.5,
    });
    let sweep = Sweep::range(a.param, lo, hi, step).map_err(validated)?;
    let prepared = a.bench.prepare()?;
    let suite = a.bench.suite()?;
    let points = parameter_sweep(&suite, &prepared.configs, &sweep, &prepared.options).map_err(
        |e| match e {
            segclust::Error::Parameter(_) => validated(e),
            other => Failure::Runtime(anyhow::Error::new(other).context("sweep")),
        },
    )?;
    let out = &a.bench.out_dir;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    for p in &points {
        let dir = out.join(format!("{}_{}", p.param, p.value));
        write_report(&p.comparison, &dir, false)
            .with_context(|| format!("writing {}", dir.display()))?;
    }
    let csv = sweep_to_csv(&points);
    fs::write(out.join("sweep.csv"), &csv).context("writing sweep.csv")?;
    print!("{csv}");
    Ok(())
}
