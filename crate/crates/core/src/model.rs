use serde::{Deserialize, Serialize};

use crate::fcm::FcmConfig;
use crate::hybrid::HybridConfig;
use crate::kmeans::KMeansConfig;

/// Configuration that produced a [`ClusterModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum ModelConfig {
    KMeans(KMeansConfig),
    Fcm(FcmConfig),
    Hybrid(HybridConfig),
}

/// Fitted centroids plus bookkeeping from the run that produced them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    /// One intensity per cluster, in `[0, 1]`.
    pub centroids: Vec<f64>,
    /// Final value of the run's objective (`J` or `J_m`).
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every iteration, ending with the final value.
    pub objective_trace: Vec<f64>,
    pub config: ModelConfig,
}

impl ClusterModel {
    pub fn clusters(&self) -> usize {
        self.centroids.len()
    }
}
