//! Fuzzy C-Means: alternating membership and weighted-centroid updates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{GrayImage, LabelMap};
use crate::kmeans::{kmeans_run, push_monotone, KMeansConfig};
use crate::model::{ClusterModel, ModelConfig};

/// Row sums must stay within this distance of 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FcmInit {
    /// Random row-stochastic memberships from the seeded RNG.
    RandomMemberships,
    /// Centroids of a K-Means run with `k = c` and the same seed.
    CentroidsFromKmeans,
    GivenCentroids(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FcmConfig {
    pub c: usize,
    /// Fuzzifier, strictly greater than 1.
    pub m: f64,
    pub max_iter: usize,
    /// Stop once no membership changes by `tol` or more between iterations.
    pub tol: f64,
    pub seed: u64,
    pub init: FcmInit,
}

impl Default for FcmConfig {
    fn default() -> Self {
        Self {
            c: 4,
            m: 2.0,
            max_iter: 100,
            tol: 1e-5,
            seed: 0,
            init: FcmInit::RandomMemberships,
        }
    }
}

pub(crate) fn check_fuzzifier(m: f64) -> Result<()> {
    if !(m > 1.0) || !m.is_finite() {
        return Err(Error::param(format!("fuzzifier m must be > 1, got {m}")));
    }
    Ok(())
}

impl FcmConfig {
    pub fn with_c(c: usize) -> Self {
        Self {
            c,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c < 1 {
            return Err(Error::param("c must be >= 1"));
        }
        check_fuzzifier(self.m)?;
        if self.max_iter < 1 {
            return Err(Error::param("max_iter must be >= 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::param(format!("tol must be >= 0, got {}", self.tol)));
        }
        if let FcmInit::GivenCentroids(c) = &self.init {
            if c.len() != self.c {
                return Err(Error::param(format!(
                    "{} initial centroids given for c = {}",
                    c.len(),
                    self.c
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("initial centroids must be finite"));
            }
        }
        Ok(())
    }
}

/// Row-major `N x c` matrix of memberships `u_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipMatrix {
    n: usize,
    c: usize,
    values: Vec<f64>,
}

impl MembershipMatrix {
    /// Validates shape, entry range and row sums.
    pub fn new(n: usize, c: usize, values: Vec<f64>) -> Result<Self> {
        let matrix = Self::from_parts(n, c, values)?;
        if let Some(i) = matrix.first_invalid_row(ROW_SUM_TOLERANCE) {
            return Err(Error::param(format!(
                "membership row {i} is not stochastic"
            )));
        }
        Ok(matrix)
    }

    pub(crate) fn from_parts(n: usize, c: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || c == 0 {
            return Err(Error::Dimension(format!("{n}x{c} membership matrix")));
        }
        if values.len() != n * c {
            return Err(Error::Shape(format!(
                "{n}x{c} membership matrix needs {} values, got {}",
                n * c,
                values.len()
            )));
        }
        Ok(Self { n, c, values })
    }

    /// One-hot memberships from hard labels.
    pub fn crisp(labels: &LabelMap) -> Self {
        let c = labels.clusters();
        let mut values = vec![0.0; labels.len() * c];
        for (i, &l) in labels.labels().iter().enumerate() {
            values[i * c + l] = 1.0;
        }
        Self {
            n: labels.len(),
            c,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.n
    }

    pub fn clusters(&self) -> usize {
        self.c
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.c..(i + 1) * self.c]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.c + j]
    }

    /// Index of the first row with an entry outside `[0, 1]` or a sum off by more than `tol`.
    pub fn first_invalid_row(&self, tol: f64) -> Option<usize> {
        self.values.chunks_exact(self.c).position(|row| {
            row.iter().any(|u| !(0.0..=1.0).contains(u))
                || (row.iter().sum::<f64>() - 1.0).abs() > tol
        })
    }

    pub fn is_row_stochastic(&self, tol: f64) -> bool {
        self.first_invalid_row(tol).is_none()
    }

    pub fn max_abs_diff(&self, other: &MembershipMatrix) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Mean over rows of the largest membership; 1 for crisp, `1/c` for uniform.
    pub fn mean_max_membership(&self) -> f64 {
        self.values
            .chunks_exact(self.c)
            .map(|row| row.iter().copied().fold(0.0, f64::max))
            .sum::<f64>()
            / self.n as f64
    }
}

#[inline]
fn pow_m(u: f64, m: f64) -> f64 {
    if m == 2.0 {
        u * u
    } else {
        u.powf(m)
    }
}

fn membership_row(x: f64, centroids: &[f64], exponent: f64, out: &mut [f64]) {
    let mut nearest = f64::INFINITY;
    let mut coincident = 0usize;
    for &c in centroids {
        let d = (x - c).abs();
        if d == 0.0 {
            coincident += 1;
        }
        nearest = nearest.min(d);
    }
    if coincident > 0 {
        let share = 1.0 / coincident as f64;
        for (u, &c) in out.iter_mut().zip(centroids) {
            *u = if x == c { share } else { 0.0 };
        }
        return;
    }
    // Ratios against the nearest distance stay in (0, 1], so nothing overflows.
    let mut total = 0.0;
    for (u, &c) in out.iter_mut().zip(centroids) {
        let r = nearest / (x - c).abs();
        *u = if exponent == 2.0 {
            r * r
        } else {
            r.powf(exponent)
        };
        total += *u;
    }
    for u in out.iter_mut() {
        *u /= total;
    }
}

/// `u_ij = 1 / sum_k (d_ij / d_ik)^(2/(m-1))`; a pixel sitting on one or more
/// centroids splits its membership evenly among them.
pub fn fcm_memberships(img: &GrayImage, centroids: &[f64], m: f64) -> Result<MembershipMatrix> {
    check_fuzzifier(m)?;
    if centroids.is_empty() {
        return Err(Error::param("centroid list is empty"));
    }
    let c = centroids.len();
    let exponent = 2.0 / (m - 1.0);
    let mut values = vec![0.0; img.len() * c];
    for (&x, row) in img.pixels().iter().zip(values.chunks_exact_mut(c)) {
        membership_row(x, centroids, exponent, row);
    }
    Ok(MembershipMatrix {
        n: img.len(),
        c,
        values,
    })
}

fn check_rows(img: &GrayImage, u: &MembershipMatrix) -> Result<()> {
    if u.rows() != img.len() {
        return Err(Error::Shape(format!(
            "{} membership rows for {} pixels",
            u.rows(),
            img.len()
        )));
    }
    Ok(())
}

/// `mu_j = sum_i u_ij^m x_i / sum_i u_ij^m`.
pub fn fcm_centroids(img: &GrayImage, u: &MembershipMatrix, m: f64) -> Result<Vec<f64>> {
    check_fuzzifier(m)?;
    check_rows(img, u)?;
    let c = u.clusters();
    let mut num = vec![0.0; c];
    let mut den = vec![0.0; c];
    for (&x, row) in img.pixels().iter().zip(u.values.chunks_exact(c)) {
        for j in 0..c {
            let w = pow_m(row[j], m);
            num[j] += w * x;
            den[j] += w;
        }
    }
    num.iter()
        .zip(&den)
        .enumerate()
        .map(|(j, (&n, &d))| {
            if d > 0.0 {
                Ok(n / d)
            } else {
                Err(Error::Internal(format!(
                    "membership column {j} is all zero"
                )))
            }
        })
        .collect()
}

/// `J_m = sum_i sum_j u_ij^m ||x_i - mu_j||^2`.
pub fn fcm_objective(
    img: &GrayImage,
    u: &MembershipMatrix,
    centroids: &[f64],
    m: f64,
) -> Result<f64> {
    check_rows(img, u)?;
    if centroids.len() != u.clusters() {
        return Err(Error::Shape(format!(
            "{} centroids for {} membership columns",
            centroids.len(),
            u.clusters()
        )));
    }
    let c = u.clusters();
    Ok(img
        .pixels()
        .iter()
        .zip(u.values.chunks_exact(c))
        .map(|(&x, row)| {
            row.iter()
                .zip(centroids)
                .map(|(&uij, &mu)| pow_m(uij, m) * (x - mu).powi(2))
                .sum::<f64>()
        })
        .sum())
}

/// Per-row argmax, ties toward the lowest index.
pub fn defuzzify(u: &MembershipMatrix, width: usize, height: usize) -> Result<LabelMap> {
    if width * height != u.rows() {
        return Err(Error::Shape(format!(
            "{width}x{height} label map for {} membership rows",
            u.rows()
        )));
    }
    let labels = u
        .values
        .chunks_exact(u.c)
        .map(|row| {
            let mut best = 0;
            for j in 1..row.len() {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect();
    LabelMap::new(width, height, u.c, labels)
}

/// Snapshot handed to iteration observers.
#[derive(Debug)]
pub struct IterationState<'a> {
    /// 1-based iteration number.
    pub iteration: usize,
    pub memberships: &'a MembershipMatrix,
    /// Centroids recomputed from `memberships`.
    pub centroids: &'a [f64],
    /// `J_m` of `memberships` against the centroids that produced them.
    pub objective: f64,
    pub max_membership_change: f64,
}

fn random_memberships(n: usize, c: usize, rng: &mut ChaCha8Rng) -> MembershipMatrix {
    let mut values = Vec::with_capacity(n * c);
    for _ in 0..n {
        let start = values.len();
        let mut total = 0.0;
        for _ in 0..c {
            let v: f64 = rng.random();
            total += v;
            values.push(v);
        }
        let row = &mut values[start..];
        if total > 0.0 {
            for v in row.iter_mut() {
                *v /= total;
            }
        } else {
            row.fill(1.0 / c as f64);
        }
    }
    MembershipMatrix { n, c, values }
}

/// Hook applied to each fresh membership matrix before the centroid update.
pub(crate) type Refine<'r> = &'r dyn Fn(MembershipMatrix) -> MembershipMatrix;

pub(crate) struct FcmOutcome {
    pub centroids: Vec<f64>,
    pub memberships: MembershipMatrix,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
}

pub(crate) fn initial_state(
    img: &GrayImage,
    config: &FcmConfig,
) -> Result<(Vec<f64>, Option<MembershipMatrix>)> {
    match &config.init {
        FcmInit::RandomMemberships => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let u0 = random_memberships(img.len(), config.c, &mut rng);
            let centroids = fcm_centroids(img, &u0, config.m)?;
            Ok((centroids, Some(u0)))
        }
        FcmInit::CentroidsFromKmeans => {
            let km = KMeansConfig {
                k: config.c,
                seed: config.seed,
                ..KMeansConfig::default()
            };
            let (model, _) = kmeans_run(img, &km)?;
            Ok((model.centroids, None))
        }
        FcmInit::GivenCentroids(c) => Ok((c.clone(), None)),
    }
}

pub(crate) fn iterate(
    img: &GrayImage,
    config: &FcmConfig,
    mut centroids: Vec<f64>,
    mut previous: Option<MembershipMatrix>,
    refine: Option<Refine<'_>>,
    observer: &mut dyn FnMut(&IterationState<'_>),
) -> Result<FcmOutcome> {
    let m = config.m;
    let check_monotone = refine.is_none();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        let mut u = fcm_memberships(img, &centroids, m)?;
        if let Some(refine) = refine {
            u = refine(u);
        }
        let objective = fcm_objective(img, &u, &centroids, m)?;
        if check_monotone {
            push_monotone(&mut trace, objective);
        } else {
            trace.push(objective);
        }
        let change = previous
            .as_ref()
            .map_or(f64::INFINITY, |p| p.max_abs_diff(&u));
        centroids = fcm_centroids(img, &u, m)?;
        iterations += 1;
        observer(&IterationState {
            iteration: iterations,
            memberships: &u,
            centroids: &centroids,
            objective,
            max_membership_change: change,
        });
        previous = Some(u);
        if change < config.tol || change == 0.0 {
            converged = true;
            break;
        }
    }

    let memberships = previous.expect("at least one iteration runs");
    let objective = fcm_objective(img, &memberships, &centroids, m)?;
    if check_monotone {
        push_monotone(&mut trace, objective);
    } else {
        trace.push(objective);
    }
    Ok(FcmOutcome {
        centroids,
        memberships,
        objective,
        iterations,
        converged,
        trace,
    })
}

/// Alternates membership and centroid updates until memberships settle.
pub fn fcm_run(img: &GrayImage, config: &FcmConfig) -> Result<(ClusterModel, MembershipMatrix)> {
    fcm_run_observed(img, config, |_| {})
}

/// [`fcm_run`] with a callback after every iteration.
pub fn fcm_run_observed(
    img: &GrayImage,
    config: &FcmConfig,
    mut observer: impl FnMut(&IterationState<'_>),
) -> Result<(ClusterModel, MembershipMatrix)> {
    config.validate()?;
    let (centroids, previous) = initial_state(img, config)?;
    let out = iterate(img, config, centroids, previous, None, &mut observer)?;
    let model = ClusterModel {
        centroids: out.centroids,
        objective: out.objective,
        iterations: out.iterations,
        converged: out.converged,
        objective_trace: out.trace,
        config: ModelConfig::Fcm(config.clone()),
    };
    Ok((model, out.memberships))
}
