//! Comparative evaluation: run several clustering configurations over a
//! suite of images with ground truth, time each clustering call, and
//! aggregate dice and runtime per algorithm.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fcm::{defuzzify, fcm_run, MembershipMatrix};
use crate::hybrid::hybrid_run;
use crate::image::{BinaryMask, GrayImage, LabelMap};
use crate::io::{records_to_csv, records_to_json, write_json, write_labelmap, RunRecord};
use crate::kmeans::kmeans_run;
use crate::metrics::{compactness, match_tumor_cluster, separation, EvalReport};
use crate::model::{ClusterModel, ModelConfig};
use crate::phantom::Phantom;
use crate::preprocess::Preprocess;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    KMeans,
    Fcm,
    Hybrid,
}

impl Algorithm {
    pub fn of(config: &ModelConfig) -> Self {
        match config {
            ModelConfig::KMeans(_) => Algorithm::KMeans,
            ModelConfig::Fcm(_) => Algorithm::Fcm,
            ModelConfig::Hybrid(_) => Algorithm::Hybrid,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::KMeans => "kmeans",
            Algorithm::Fcm => "fcm",
            Algorithm::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans" => Ok(Algorithm::KMeans),
            "fcm" => Ok(Algorithm::Fcm),
            "hybrid" => Ok(Algorithm::Hybrid),
            other => Err(Error::param(format!("unknown algorithm `{other}`"))),
        }
    }
}

pub fn validate_config(config: &ModelConfig) -> Result<()> {
    match config {
        ModelConfig::KMeans(c) => c.validate(),
        ModelConfig::Fcm(c) => c.validate(),
        ModelConfig::Hybrid(c) => c.validate(),
    }
}

/// Output of one timed clustering call.
#[derive(Debug, Clone)]
pub struct Segmentation {
    pub model: ClusterModel,
    pub labels: LabelMap,
    pub memberships: Option<MembershipMatrix>,
    /// Seconds spent in the clustering call (and defuzzification for FCM).
    pub wall_time_s: f64,
}

pub fn segment(img: &GrayImage, config: &ModelConfig) -> Result<Segmentation> {
    let start = Instant::now();
    let (model, labels, memberships) = match config {
        ModelConfig::KMeans(c) => {
            let (model, labels) = kmeans_run(img, c)?;
            (model, labels, None)
        }
        ModelConfig::Fcm(c) => {
            let (model, u) = fcm_run(img, c)?;
            let labels = defuzzify(&u, img.width(), img.height())?;
            (model, labels, Some(u))
        }
        ModelConfig::Hybrid(c) => {
            let (model, u, labels) = hybrid_run(img, c)?;
            (model, labels, Some(u))
        }
    };
    let wall_time_s = start.elapsed().as_secs_f64();
    Ok(Segmentation {
        model,
        labels,
        memberships,
        wall_time_s,
    })
}

/// Scores a segmentation against ground truth.
pub fn evaluate(img: &GrayImage, truth: &BinaryMask, seg: &Segmentation) -> Result<EvalReport> {
    let (matched_cluster, dice) = match_tumor_cluster(&seg.labels, truth)?;
    Ok(EvalReport {
        dice,
        matched_cluster,
        compactness: compactness(img, &seg.labels, &seg.model.centroids)?,
        separation: separation(&seg.model.centroids).ok(),
        wall_time_s: seg.wall_time_s,
        iterations: seg.model.iterations,
    })
}

#[derive(Debug, Clone)]
pub struct SuiteItem {
    pub name: String,
    pub image: GrayImage,
    pub truth: BinaryMask,
}

impl SuiteItem {
    pub fn from_phantoms(phantoms: Vec<Phantom>) -> Vec<SuiteItem> {
        phantoms
            .into_iter()
            .enumerate()
            .map(|(i, p)| SuiteItem {
                name: format!("image_{i:03}"),
                image: p.image,
                truth: p.truth,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub preprocess: Preprocess,
    /// Process images one at a time so timings are uncontended.
    pub serial: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            preprocess: Preprocess::default(),
            serial: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    /// Population standard deviation.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mid = sorted.len() / 2;
        let median = if sorted.len().is_multiple_of(2) {
            (sorted[mid - 1] + sorted[mid]) / 2.0
        } else {
            sorted[mid]
        };
        Some(Stats {
            count: values.len(),
            mean,
            median,
            std: var.sqrt(),
            min: sorted[0],
            max: sorted[sorted.len() - 1],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    pub runs: usize,
    pub failures: usize,
    pub dice: Option<Stats>,
    pub wall_time_s: Option<Stats>,
    pub compactness: Option<Stats>,
    pub mean_iterations: Option<f64>,
    /// Mean over runs of the per-pixel largest membership (fuzzy algorithms only).
    pub mean_max_membership: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub input: String,
    pub algorithm: Option<Algorithm>,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Comparison {
    pub summaries: Vec<AlgorithmSummary>,
    /// Mean FCM time over mean K-Means time, when both ran.
    pub speed_ratio: Option<f64>,
    pub preprocess_wall_time_s: Option<Stats>,
    pub failures: Vec<Failure>,
    pub records: Vec<RunRecord>,
    /// Label map per record, in record order.
    #[serde(skip)]
    pub label_maps: Vec<LabelMap>,
}

impl Comparison {
    pub fn summary(&self, algorithm: Algorithm) -> Option<&AlgorithmSummary> {
        self.summaries.iter().find(|s| s.algorithm == algorithm)
    }

    pub fn mean_dice(&self, algorithm: Algorithm) -> Option<f64> {
        self.summary(algorithm)?.dice.map(|s| s.mean)
    }

    pub fn mean_wall_time(&self, algorithm: Algorithm) -> Option<f64> {
        self.summary(algorithm)?.wall_time_s.map(|s| s.mean)
    }
}

/// Record, labels and mean max-membership (fuzzy algorithms only) of one run.
type RunOutput = (RunRecord, LabelMap, Option<f64>);

struct ImageOutcome {
    preprocess_time: Option<f64>,
    runs: Vec<std::result::Result<RunOutput, Failure>>,
}

fn process_image(
    item: &SuiteItem,
    configs: &[ModelConfig],
    options: &BenchOptions,
) -> ImageOutcome {
    let start = Instant::now();
    let prepared = if options.preprocess.is_enabled() {
        options.preprocess.apply(&item.image)
    } else {
        Ok(item.image.clone())
    };
    let preprocess_time = start.elapsed().as_secs_f64();
    let image = match prepared {
        Ok(img) => img,
        Err(e) => {
            return ImageOutcome {
                preprocess_time: None,
                runs: configs
                    .iter()
                    .map(|c| {
                        Err(Failure {
                            input: item.name.clone(),
                            algorithm: Some(Algorithm::of(c)),
                            error: format!("preprocessing: {e}"),
                        })
                    })
                    .collect(),
            }
        }
    };
    let runs = configs
        .iter()
        .map(|config| {
            let run = || -> Result<RunOutput> {
                let seg = segment(&image, config)?;
                let report = evaluate(&image, &item.truth, &seg)?;
                let fuzziness = seg.memberships.as_ref().map(|u| u.mean_max_membership());
                Ok((
                    RunRecord::new(&item.name, config.clone(), &report),
                    seg.labels,
                    fuzziness,
                ))
            };
            run().map_err(|e| Failure {
                input: item.name.clone(),
                algorithm: Some(Algorithm::of(config)),
                error: e.to_string(),
            })
        })
        .collect();
    ImageOutcome {
        preprocess_time: options.preprocess.is_enabled().then_some(preprocess_time),
        runs,
    }
}

fn summarize(
    algorithm: Algorithm,
    records: &[&RunRecord],
    fuzziness: &[f64],
    failures: usize,
) -> AlgorithmSummary {
    let dice: Vec<f64> = records.iter().map(|r| r.dice).collect();
    let time: Vec<f64> = records.iter().map(|r| r.wall_time_s).collect();
    let comp: Vec<f64> = records.iter().map(|r| r.compactness).collect();
    let iters: Vec<f64> = records.iter().map(|r| r.iterations as f64).collect();
    AlgorithmSummary {
        algorithm,
        runs: records.len(),
        failures,
        dice: Stats::of(&dice),
        wall_time_s: Stats::of(&time),
        compactness: Stats::of(&comp),
        mean_iterations: Stats::of(&iters).map(|s| s.mean),
        mean_max_membership: Stats::of(fuzziness).map(|s| s.mean),
    }
}

/// Runs every configuration on every image and aggregates per algorithm.
///
/// Per-image failures are recorded in [`Comparison::failures`] and left out of
/// the aggregates. Records are ordered by image, then by configuration.
pub fn run_comparison(
    suite: &[SuiteItem],
    configs: &[ModelConfig],
    options: &BenchOptions,
) -> Result<Comparison> {
    if suite.is_empty() {
        return Err(Error::param("benchmark suite is empty"));
    }
    if configs.is_empty() {
        return Err(Error::param("no algorithms selected"));
    }
    for c in configs {
        validate_config(c)?;
    }
    options.preprocess.validate()?;

    let outcomes: Vec<ImageOutcome> = if options.serial {
        suite
            .iter()
            .map(|item| process_image(item, configs, options))
            .collect()
    } else {
        suite
            .par_iter()
            .map(|item| process_image(item, configs, options))
            .collect()
    };

    let mut records = Vec::new();
    let mut label_maps = Vec::new();
    let mut fuzziness: Vec<(Algorithm, f64)> = Vec::new();
    let mut failures = Vec::new();
    let mut preprocess_times = Vec::new();
    for outcome in outcomes {
        preprocess_times.extend(outcome.preprocess_time);
        for run in outcome.runs {
            match run {
                Ok((record, labels, fuzz)) => {
                    if let Some(f) = fuzz {
                        fuzziness.push((record.algorithm, f));
                    }
                    records.push(record);
                    label_maps.push(labels);
                }
                Err(f) => failures.push(f),
            }
        }
    }

    let mut algorithms: Vec<Algorithm> = Vec::new();
    for c in configs {
        let a = Algorithm::of(c);
        if !algorithms.contains(&a) {
            algorithms.push(a);
        }
    }
    let summaries: Vec<AlgorithmSummary> = algorithms
        .iter()
        .map(|&a| {
            let rs: Vec<&RunRecord> = records.iter().filter(|r| r.algorithm == a).collect();
            let fz: Vec<f64> = fuzziness.iter().filter(|f| f.0 == a).map(|f| f.1).collect();
            let failed = failures.iter().filter(|f| f.algorithm == Some(a)).count();
            summarize(a, &rs, &fz, failed)
        })
        .collect();

    let mean_time = |a: Algorithm| {
        summaries
            .iter()
            .find(|s| s.algorithm == a)
            .and_then(|s| s.wall_time_s)
            .map(|s| s.mean)
    };
    let speed_ratio = match (mean_time(Algorithm::Fcm), mean_time(Algorithm::KMeans)) {
        (Some(f), Some(k)) if k > 0.0 => Some(f / k),
        _ => None,
    };

    Ok(Comparison {
        summaries,
        speed_ratio,
        preprocess_wall_time_s: Stats::of(&preprocess_times),
        failures,
        records,
        label_maps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParam {
    /// Cluster count (`k` for K-Means, `c` for the fuzzy algorithms).
    K,
    /// Fuzzifier of the fuzzy algorithms.
    M,
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(SweepParam::K),
            "m" => Ok(SweepParam::M),
            other => Err(Error::param(format!("unknown sweep parameter `{other}`"))),
        }
    }
}

impl fmt::Display for SweepParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepParam::K => "k",
            SweepParam::M => "m",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl Sweep {
    /// `lo, lo + step, ...` up to and including `hi`.
    pub fn range(param: SweepParam, lo: f64, hi: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !lo.is_finite() || !hi.is_finite() || hi < lo {
            return Err(Error::param(format!(
                "invalid sweep range {lo}:{hi} step {step}"
            )));
        }
        let count = ((hi - lo) / step + 1e-9).floor() as usize + 1;
        let values: Vec<f64> = (0..count).map(|i| lo + i as f64 * step).collect();
        let sweep = Sweep { param, values };
        sweep.validate()?;
        Ok(sweep)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::param("sweep has no settings"));
        }
        for &v in &self.values {
            match self.param {
                SweepParam::K => {
                    if v < 1.0 || v.fract() != 0.0 {
                        return Err(Error::param(format!(
                            "cluster count {v} is not a positive integer"
                        )));
                    }
                }
                SweepParam::M => crate::fcm::check_fuzzifier(v)?,
            }
        }
        Ok(())
    }

    /// Returns `config` with the swept parameter set, or `None` when it does not apply.
    pub fn apply(&self, config: &ModelConfig, value: f64) -> Option<ModelConfig> {
        let mut config = config.clone();
        match (self.param, &mut config) {
            (SweepParam::K, ModelConfig::KMeans(c)) => c.k = value as usize,
            (SweepParam::K, ModelConfig::Fcm(c)) => c.c = value as usize,
            (SweepParam::K, ModelConfig::Hybrid(c)) => {
                c.kmeans.k = value as usize;
                c.fcm.c = value as usize;
            }
            (SweepParam::M, ModelConfig::KMeans(_)) => return None,
            (SweepParam::M, ModelConfig::Fcm(c)) => c.m = value,
            (SweepParam::M, ModelConfig::Hybrid(c)) => c.fcm.m = value,
        }
        Some(config)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: SweepParam,
    pub value: f64,
    pub comparison: Comparison,
}

/// One comparison per swept setting. Configurations the parameter does not
/// apply to (K-Means under an `m` sweep) are dropped.
pub fn parameter_sweep(
    suite: &[SuiteItem],
    configs: &[ModelConfig],
    sweep: &Sweep,
    options: &BenchOptions,
) -> Result<Vec<SweepPoint>> {
    sweep.validate()?;
    sweep
        .values
        .iter()
        .map(|&value| {
            let applied: Vec<ModelConfig> = configs
                .iter()
                .filter_map(|c| sweep.apply(c, value))
                .collect();
            if applied.is_empty() {
                return Err(Error::param(format!(
                    "no selected algorithm takes sweep parameter {}",
                    sweep.param
                )));
            }
            Ok(SweepPoint {
                param: sweep.param,
                value,
                comparison: run_comparison(suite, &applied, options)?,
            })
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const SWEEP_CSV_HEADER: &str =
    "param,value,algorithm,runs,mean_dice,median_dice,std_dice,mean_wall_time_s,mean_iterations,mean_max_membership";

pub fn sweep_to_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for p in points {
        for s in &p.comparison.summaries {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                p.param,
                p.value,
                s.algorithm,
                s.runs,
                opt(s.dice.map(|d| d.mean)),
                opt(s.dice.map(|d| d.median)),
                opt(s.dice.map(|d| d.std)),
                opt(s.wall_time_s.map(|t| t.mean)),
                opt(s.mean_iterations),
                opt(s.mean_max_membership),
            );
        }
    }
    out
}

pub const SUMMARY_CSV_HEADER: &str =
    "algorithm,runs,failures,mean_dice,median_dice,std_dice,mean_wall_time_s,median_wall_time_s,std_wall_time_s";

pub fn summary_to_csv(comparison: &Comparison) -> String {
    let mut out = String::from(SUMMARY_CSV_HEADER);
    out.push('\n');
    for s in &comparison.summaries {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.algorithm,
            s.runs,
            s.failures,
            opt(s.dice.map(|d| d.mean)),
            opt(s.dice.map(|d| d.median)),
            opt(s.dice.map(|d| d.std)),
            opt(s.wall_time_s.map(|t| t.mean)),
            opt(s.wall_time_s.map(|t| t.median)),
            opt(s.wall_time_s.map(|t| t.std)),
        );
    }
    out
}

/// Plain-text table: one row per algorithm with mean dice and mean time.
pub fn format_table(comparison: &Comparison) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<10} {:>34} {:>32}",
        "Algorithm", "Dice Similarity Coefficient (DSC)", "Avg. Processing Time (s/image)"
    );
    for s in &comparison.summaries {
        let dice = s
            .dice
            .map_or("n/a".to_string(), |d| format!("{:.6}", d.mean));
        let time = s
            .wall_time_s
            .map_or("n/a".to_string(), |t| format!("{:.6}", t.mean));
        let _ = writeln!(out, "{:<10} {:>34} {:>32}", s.algorithm.name(), dice, time);
    }
    out
}

const CHART_WIDTH: f64 = 480.0;
const CHART_HEIGHT: f64 = 320.0;
const PLOT_TOP: f64 = 40.0;
const PLOT_HEIGHT: f64 = 230.0;

/// Height in SVG units of a bar for `value` on an axis topping out at `axis_max`.
pub fn bar_height(value: f64, axis_max: f64) -> f64 {
    if axis_max > 0.0 {
        PLOT_HEIGHT * value / axis_max
    } else {
        0.0
    }
}

fn bar_chart(title: &str, unit: &str, bars: &[(String, f64)], axis_max: f64) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CHART_WIDTH}" height="{CHART_HEIGHT}" viewBox="0 0 {CHART_WIDTH} {CHART_HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{title}</text>"#,
        CHART_WIDTH / 2.0
    );
    let baseline = PLOT_TOP + PLOT_HEIGHT;
    let _ = writeln!(
        svg,
        r#"<line x1="40" y1="{baseline}" x2="{}" y2="{baseline}" stroke="black"/>"#,
        CHART_WIDTH - 20.0
    );
    let slot = (CHART_WIDTH - 60.0) / bars.len().max(1) as f64;
    let bar_width = slot * 0.6;
    for (i, (label, value)) in bars.iter().enumerate() {
        let h = bar_height(*value, axis_max);
        let x = 40.0 + slot * i as f64 + (slot - bar_width) / 2.0;
        let y = baseline - h;
        let mid = x + bar_width / 2.0;
        let _ = writeln!(
            svg,
            r#"<rect class="bar" data-label="{label}" data-value="{value}" x="{x:.3}" y="{y:.3}" width="{bar_width:.3}" height="{h:.3}" fill="steelblue"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{mid:.3}" y="{:.3}" font-family="sans-serif" font-size="12" text-anchor="middle">{value:.4}{unit}</text>"#,
            y - 6.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{mid:.3}" y="{:.3}" font-family="sans-serif" font-size="12" text-anchor="middle">{label}</text>"#,
            baseline + 18.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `runtime.svg`, `dice.svg` and the `summary.csv` they are drawn from.
pub fn emit_charts(comparison: &Comparison, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let runtime: Vec<(String, f64)> = comparison
        .summaries
        .iter()
        .filter_map(|s| s.wall_time_s.map(|t| (s.algorithm.to_string(), t.mean)))
        .collect();
    let dice: Vec<(String, f64)> = comparison
        .summaries
        .iter()
        .filter_map(|s| s.dice.map(|d| (s.algorithm.to_string(), d.mean)))
        .collect();
    if runtime.is_empty() {
        return Err(Error::param("comparison has no successful runs to chart"));
    }
    let time_max = runtime.iter().map(|b| b.1).fold(0.0, f64::max);
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join("runtime.svg"),
        bar_chart("Runtime Comparison", " s", &runtime, time_max),
    )?;
    fs::write(
        dir.join("dice.svg"),
        bar_chart("DSC Comparison", "", &dice, 1.0),
    )?;
    fs::write(dir.join("summary.csv"), summary_to_csv(comparison))?;
    Ok(())
}

/// Writes the full report set for a comparison into `dir`.
pub fn write_report(
    comparison: &Comparison,
    dir: impl AsRef<Path>,
    label_images: bool,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("records.csv"), records_to_csv(&comparison.records))?;
    fs::write(
        dir.join("records.json"),
        records_to_json(&comparison.records)?,
    )?;
    write_json(comparison, dir.join("comparison.json"))?;
    fs::write(dir.join("table.txt"), format_table(comparison))?;
    emit_charts(comparison, dir)?;
    if label_images {
        let labels_dir = dir.join("labels");
        fs::create_dir_all(&labels_dir)?;
        for (record, labels) in comparison.records.iter().zip(&comparison.label_maps) {
            write_labelmap(
                labels,
                labels_dir.join(format!("{}_{}.png", record.input, record.algorithm)),
            )?;
        }
    }
    Ok(())
}
