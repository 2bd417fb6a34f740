//! K-Means seeding followed by spatially regularized FCM refinement.
//!
//! Regularization blends each pixel's memberships with the mean memberships
//! of its `(2w+1)^2` neighborhood (edge replicated):
//! `u'_ij = (1 - alpha) u_ij + alpha * mean_{k in N(i)} u_kj`, then rows are
//! renormalized. With `alpha = 0` the refinement is plain FCM started from the
//! K-Means centroids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fcm::{
    defuzzify, fcm_centroids, fcm_objective, initial_state, iterate, FcmConfig, FcmInit,
    IterationState, MembershipMatrix,
};
use crate::image::{GrayImage, LabelMap};
use crate::kmeans::{kmeans_run, KMeansConfig};
use crate::model::{ClusterModel, ModelConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    pub kmeans: KMeansConfig,
    /// `init` is ignored; the K-Means centroids always seed the refinement.
    pub fcm: FcmConfig,
    pub alpha: f64,
    pub window: usize,
    /// Regularize after every membership update rather than once at the end.
    pub every_iteration: bool,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self::with_clusters(4)
    }
}

impl HybridConfig {
    pub fn with_clusters(clusters: usize) -> Self {
        Self {
            kmeans: KMeansConfig::with_k(clusters),
            fcm: FcmConfig {
                init: FcmInit::CentroidsFromKmeans,
                ..FcmConfig::with_c(clusters)
            },
            alpha: 0.3,
            window: 1,
            every_iteration: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kmeans.validate()?;
        FcmConfig {
            init: FcmInit::RandomMemberships,
            ..self.fcm.clone()
        }
        .validate()?;
        if self.kmeans.k != self.fcm.c {
            return Err(Error::param(format!(
                "hybrid needs k == c, got k = {} and c = {}",
                self.kmeans.k, self.fcm.c
            )));
        }
        check_blend(self.alpha, self.window)
    }
}

fn check_blend(alpha: f64, window: usize) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    if window < 1 {
        return Err(Error::param("window must be >= 1"));
    }
    Ok(())
}

/// Box mean of one membership channel with clamped borders.
fn neighborhood_mean(channel: &[f64], width: usize, height: usize, window: usize) -> Vec<f64> {
    let r = window as isize;
    let side = (2 * window + 1) as f64;
    let mut horizontal = vec![0.0; channel.len()];
    for row in 0..height {
        for col in 0..width {
            let mut acc = 0.0;
            for d in -r..=r {
                let c = (col as isize + d).clamp(0, width as isize - 1) as usize;
                acc += channel[row * width + c];
            }
            horizontal[row * width + col] = acc / side;
        }
    }
    let mut out = vec![0.0; channel.len()];
    for row in 0..height {
        for col in 0..width {
            let mut acc = 0.0;
            for d in -r..=r {
                let rr = (row as isize + d).clamp(0, height as isize - 1) as usize;
                acc += horizontal[rr * width + col];
            }
            out[row * width + col] = acc / side;
        }
    }
    out
}

pub fn spatial_regularize(
    u: &MembershipMatrix,
    width: usize,
    height: usize,
    alpha: f64,
    window: usize,
) -> Result<MembershipMatrix> {
    check_blend(alpha, window)?;
    if width * height != u.rows() {
        return Err(Error::Shape(format!(
            "{width}x{height} grid for {} membership rows",
            u.rows()
        )));
    }
    if alpha == 0.0 {
        return Ok(u.clone());
    }
    let c = u.clusters();
    let n = u.rows();
    let mut values = u.values().to_vec();
    let mut channel = vec![0.0; n];
    for j in 0..c {
        for (i, v) in channel.iter_mut().enumerate() {
            *v = u.get(i, j);
        }
        let mean = neighborhood_mean(&channel, width, height, window);
        for i in 0..n {
            values[i * c + j] = (1.0 - alpha) * channel[i] + alpha * mean[i];
        }
    }
    for row in values.chunks_exact_mut(c) {
        let total: f64 = row.iter().sum();
        for v in row.iter_mut() {
            *v = (*v / total).clamp(0.0, 1.0);
        }
    }
    MembershipMatrix::from_parts(n, c, values)
}

pub fn hybrid_run(
    img: &GrayImage,
    config: &HybridConfig,
) -> Result<(ClusterModel, MembershipMatrix, LabelMap)> {
    hybrid_run_observed(img, config, |_| {})
}

/// [`hybrid_run`] with a callback after every refinement iteration.
pub fn hybrid_run_observed(
    img: &GrayImage,
    config: &HybridConfig,
    mut observer: impl FnMut(&IterationState<'_>),
) -> Result<(ClusterModel, MembershipMatrix, LabelMap)> {
    config.validate()?;
    let (seed_model, _) = kmeans_run(img, &config.kmeans)?;
    let fcm = FcmConfig {
        init: FcmInit::GivenCentroids(seed_model.centroids),
        ..config.fcm.clone()
    };
    let (centroids, previous) = initial_state(img, &fcm)?;
    let (w, h) = (img.width(), img.height());
    let regularize = |u: MembershipMatrix| {
        spatial_regularize(&u, w, h, config.alpha, config.window)
            .expect("validated blend parameters and matching grid")
    };

    let mut out = if config.every_iteration {
        iterate(
            img,
            &fcm,
            centroids,
            previous,
            Some(&regularize),
            &mut observer,
        )?
    } else {
        iterate(img, &fcm, centroids, previous, None, &mut observer)?
    };
    if !config.every_iteration && config.alpha > 0.0 {
        out.memberships = regularize(out.memberships);
        out.centroids = fcm_centroids(img, &out.memberships, fcm.m)?;
        out.objective = fcm_objective(img, &out.memberships, &out.centroids, fcm.m)?;
        out.trace.push(out.objective);
    }

    let labels = defuzzify(&out.memberships, w, h)?;
    let model = ClusterModel {
        centroids: out.centroids,
        objective: out.objective,
        iterations: out.iterations,
        converged: out.converged,
        objective_trace: out.trace,
        config: ModelConfig::Hybrid(config.clone()),
    };
    Ok((model, out.memberships, labels))
}
