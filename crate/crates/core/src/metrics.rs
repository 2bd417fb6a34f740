//! Overlap and cluster-quality measures.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{mask_from_labels, BinaryMask, GrayImage, LabelMap};
use crate::kmeans::kmeans_objective;

/// Evaluation of one segmentation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dice: f64,
    pub matched_cluster: usize,
    pub compactness: f64,
    /// `None` when fewer than two clusters exist.
    pub separation: Option<f64>,
    pub wall_time_s: f64,
    pub iterations: usize,
}

/// `2|S ∩ G| / (|S| + |G|)`; two empty masks score 1.
pub fn dice(s: &BinaryMask, g: &BinaryMask) -> Result<f64> {
    if !s.same_shape(g) {
        return Err(Error::Shape(format!(
            "masks are {}x{} and {}x{}",
            s.width(),
            s.height(),
            g.width(),
            g.height()
        )));
    }
    let mut both = 0usize;
    let mut total = 0usize;
    for (&a, &b) in s.values().iter().zip(g.values()) {
        both += usize::from(a && b);
        total += usize::from(a) + usize::from(b);
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / total as f64)
}

/// Cluster whose mask best overlaps `truth`, with its dice; ties go to the lowest index.
pub fn match_tumor_cluster(labels: &LabelMap, truth: &BinaryMask) -> Result<(usize, f64)> {
    let mut best = (0, f64::NEG_INFINITY);
    for j in 0..labels.clusters() {
        let d = dice(&mask_from_labels(labels, j)?, truth)?;
        if d > best.1 {
            best = (j, d);
        }
    }
    Ok(best)
}

/// Mean squared distance from each pixel to its assigned centroid (`J / N`).
pub fn compactness(img: &GrayImage, labels: &LabelMap, centroids: &[f64]) -> Result<f64> {
    Ok(kmeans_objective(img, labels, centroids)? / img.len() as f64)
}

/// Smallest pairwise distance between centroids.
pub fn separation(centroids: &[f64]) -> Result<f64> {
    if centroids.len() < 2 {
        return Err(Error::param("separation needs at least two centroids"));
    }
    let mut best = f64::INFINITY;
    for (i, a) in centroids.iter().enumerate() {
        for b in &centroids[i + 1..] {
            best = best.min((a - b).abs());
        }
    }
    Ok(best)
}
