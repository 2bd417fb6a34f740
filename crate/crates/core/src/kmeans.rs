//! Hard clustering of pixel intensities (Lloyd iterations).

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, LabelMap};
use crate::model::{ClusterModel, ModelConfig};

/// Slack tolerated when checking that the objective never increases.
pub(crate) const MONOTONE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KMeansInit {
    /// `k` distinct pixel values drawn uniformly.
    RandomPixels,
    /// Distance-squared weighted seeding.
    #[serde(rename = "kmeans++")]
    PlusPlus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves by `tol` or more.
    pub tol: f64,
    pub seed: u64,
    pub init: KMeansInit,
    /// Independent runs; the one with the lowest final objective wins.
    pub restarts: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 3,
            max_iter: 100,
            tol: 1e-5,
            seed: 0,
            init: KMeansInit::RandomPixels,
            restarts: 1,
        }
    }
}

impl KMeansConfig {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::param("k must be >= 1"));
        }
        if self.max_iter < 1 {
            return Err(Error::param("max_iter must be >= 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::param(format!("tol must be >= 0, got {}", self.tol)));
        }
        if self.restarts < 1 {
            return Err(Error::param("restarts must be >= 1"));
        }
        Ok(())
    }

    fn validate_for(&self, img: &GrayImage) -> Result<()> {
        self.validate()?;
        if self.k > img.len() {
            return Err(Error::param(format!(
                "k = {} exceeds the pixel count {}",
                self.k,
                img.len()
            )));
        }
        Ok(())
    }
}

fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// Initial centroids for the first restart of `config`.
pub fn kmeans_init(img: &GrayImage, config: &KMeansConfig) -> Result<Vec<f64>> {
    config.validate_for(img)?;
    Ok(init_centroids(
        img,
        config,
        &mut restart_rng(config.seed, 0),
    ))
}

fn init_centroids(img: &GrayImage, config: &KMeansConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let px = img.pixels();
    let k = config.k;
    match config.init {
        KMeansInit::RandomPixels => {
            let mut distinct = px.to_vec();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            if distinct.len() >= k {
                index::sample(rng, distinct.len(), k)
                    .into_iter()
                    .map(|i| distinct[i])
                    .collect()
            } else {
                index::sample(rng, px.len(), k)
                    .into_iter()
                    .map(|i| px[i])
                    .collect()
            }
        }
        KMeansInit::PlusPlus => {
            let mut centroids = vec![px[rng.random_range(0..px.len())]];
            let mut nearest: Vec<f64> = px.iter().map(|&x| (x - centroids[0]).powi(2)).collect();
            while centroids.len() < k {
                let total: f64 = nearest.iter().sum();
                let pick = if total > 0.0 {
                    let target = rng.random::<f64>() * total;
                    let mut acc = 0.0;
                    nearest
                        .iter()
                        .position(|&d| {
                            acc += d;
                            acc > target
                        })
                        .unwrap_or_else(|| nearest.iter().rposition(|&d| d > 0.0).unwrap_or(0))
                } else {
                    rng.random_range(0..px.len())
                };
                let c = px[pick];
                centroids.push(c);
                for (d, &x) in nearest.iter_mut().zip(px) {
                    *d = d.min((x - c).powi(2));
                }
            }
            centroids
        }
    }
}

/// Index of the nearest centroid, ties toward the lowest index.
#[inline]
pub(crate) fn nearest_centroid(x: f64, centroids: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = (x - centroids[0]).powi(2);
    for (j, &c) in centroids.iter().enumerate().skip(1) {
        let d = (x - c).powi(2);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

pub fn kmeans_assign(img: &GrayImage, centroids: &[f64]) -> Result<LabelMap> {
    if centroids.is_empty() {
        return Err(Error::param("centroid list is empty"));
    }
    let labels = img
        .pixels()
        .iter()
        .map(|&x| nearest_centroid(x, centroids))
        .collect();
    Ok(LabelMap::from_parts(
        img.width(),
        img.height(),
        centroids.len(),
        labels,
    ))
}

/// Recomputes each centroid as the mean of its pixels.
///
/// A cluster left without pixels is moved to the pixel farthest from its
/// previous centroid (lowest pixel index on ties).
pub fn kmeans_update(img: &GrayImage, labels: &LabelMap, previous: &[f64]) -> Result<Vec<f64>> {
    let k = labels.clusters();
    if previous.len() != k {
        return Err(Error::Shape(format!(
            "{} previous centroids for {k} clusters",
            previous.len()
        )));
    }
    check_same_shape(img, labels)?;
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (&x, &l) in img.pixels().iter().zip(labels.labels()) {
        sums[l] += x;
        counts[l] += 1;
    }
    let px = img.pixels();
    Ok((0..k)
        .map(|j| {
            if counts[j] > 0 {
                sums[j] / counts[j] as f64
            } else {
                farthest_pixel(px, previous[j])
            }
        })
        .collect())
}

fn farthest_pixel(px: &[f64], from: f64) -> f64 {
    let mut best = px[0];
    let mut best_d = (px[0] - from).abs();
    for &x in &px[1..] {
        let d = (x - from).abs();
        if d > best_d {
            best = x;
            best_d = d;
        }
    }
    best
}

pub(crate) fn check_same_shape(img: &GrayImage, labels: &LabelMap) -> Result<()> {
    if img.width() != labels.width() || img.height() != labels.height() {
        return Err(Error::Shape(format!(
            "image is {}x{}, labels are {}x{}",
            img.width(),
            img.height(),
            labels.width(),
            labels.height()
        )));
    }
    Ok(())
}

/// `J = sum_i ||x_i - mu_{label(i)}||^2`.
pub fn kmeans_objective(img: &GrayImage, labels: &LabelMap, centroids: &[f64]) -> Result<f64> {
    check_same_shape(img, labels)?;
    if centroids.len() != labels.clusters() {
        return Err(Error::Shape(format!(
            "{} centroids for {} clusters",
            centroids.len(),
            labels.clusters()
        )));
    }
    Ok(img
        .pixels()
        .iter()
        .zip(labels.labels())
        .map(|(&x, &l)| (x - centroids[l]).powi(2))
        .sum())
}

fn max_shift(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn single_run(img: &GrayImage, config: &KMeansConfig, restart: usize) -> (ClusterModel, LabelMap) {
    let mut rng = restart_rng(config.seed, restart);
    let mut centroids = init_centroids(img, config, &mut rng);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        let labels = kmeans_assign(img, &centroids).expect("nonempty centroids");
        let j = kmeans_objective(img, &labels, &centroids).expect("consistent shapes");
        push_monotone(&mut trace, j);
        let next = kmeans_update(img, &labels, &centroids).expect("consistent shapes");
        let shift = max_shift(&centroids, &next);
        centroids = next;
        iterations += 1;
        if shift < config.tol || shift == 0.0 {
            converged = true;
            break;
        }
    }

    let labels = kmeans_assign(img, &centroids).expect("nonempty centroids");
    let objective = kmeans_objective(img, &labels, &centroids).expect("consistent shapes");
    push_monotone(&mut trace, objective);
    let model = ClusterModel {
        centroids,
        objective,
        iterations,
        converged,
        objective_trace: trace,
        config: ModelConfig::KMeans(config.clone()),
    };
    (model, labels)
}

pub(crate) fn push_monotone(trace: &mut Vec<f64>, value: f64) {
    if let Some(&prev) = trace.last() {
        debug_assert!(
            value <= prev + MONOTONE_SLACK * prev.max(1.0),
            "objective increased from {prev} to {value}"
        );
    }
    trace.push(value);
}

/// Runs `restarts` independent Lloyd iterations and keeps the lowest objective.
pub fn kmeans_run(img: &GrayImage, config: &KMeansConfig) -> Result<(ClusterModel, LabelMap)> {
    config.validate_for(img)?;
    let mut best = single_run(img, config, 0);
    for restart in 1..config.restarts {
        let candidate = single_run(img, config, restart);
        if candidate.0.objective < best.0.objective {
            best = candidate;
        }
    }
    Ok(best)
}
