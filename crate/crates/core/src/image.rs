//! Raster types shared by every stage of the pipeline.
//!
//! All rasters are row-major and addressed as `(row, col)`. Intensities are
//! `f64` in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bit depth of an integer raster prior to normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BitDepth {
    Eight,
    Sixteen,
}

impl BitDepth {
    pub fn max_value(self) -> u16 {
        match self {
            BitDepth::Eight => u8::MAX as u16,
            BitDepth::Sixteen => u16::MAX,
        }
    }
}

fn check_dims(width: usize, height: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::Dimension(format!(
            "raster must be nonempty, got {width}x{height}"
        )));
    }
    if width.checked_mul(height) != Some(len) {
        return Err(Error::Dimension(format!(
            "{width}x{height} raster needs {} values, got {len}",
            width.saturating_mul(height)
        )));
    }
    Ok(())
}

/// Grayscale image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::param(format!(
                "intensity {v} at index {i} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image from `f(row, col)`, clamping each value into `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        check_dims(width, height, width.saturating_mul(height))?;
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(clamp_unit(f(row, col)));
            }
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::from_fn(width, height, |_, _| value)
    }

    pub(crate) fn from_clamped(width: usize, height: usize, mut data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        for v in &mut data {
            *v = clamp_unit(*v);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Pixel count `N`.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.data
    }

    pub fn into_pixels(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Population variance.
    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.data
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / self.data.len() as f64
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

pub(crate) fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// Maps an integer raster onto `[0, 1]` by dividing by `2^B - 1`.
pub fn normalize(raw: &[u16], width: usize, height: usize, depth: BitDepth) -> Result<GrayImage> {
    check_dims(width, height, raw.len())?;
    let max = depth.max_value();
    if let Some(&v) = raw.iter().find(|&&v| v > max) {
        return Err(Error::param(format!(
            "sample {v} exceeds {max} for {depth:?}-bit raster"
        )));
    }
    let scale = f64::from(max);
    let data = raw.iter().map(|&v| f64::from(v) / scale).collect();
    Ok(GrayImage {
        width,
        height,
        data,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        check_dims(width, height, data.len())?;
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn values(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    /// Number of `true` pixels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Per-pixel hard cluster assignment. Label `j` at pixel `i` encodes `r_ij = 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    width: usize,
    height: usize,
    clusters: usize,
    labels: Vec<usize>,
}

impl LabelMap {
    pub fn new(width: usize, height: usize, clusters: usize, labels: Vec<usize>) -> Result<Self> {
        check_dims(width, height, labels.len())?;
        if clusters == 0 {
            return Err(Error::param("label map needs at least one cluster"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= clusters) {
            return Err(Error::Index {
                index: bad,
                clusters,
            });
        }
        Ok(Self {
            width,
            height,
            clusters,
            labels,
        })
    }

    pub(crate) fn from_parts(
        width: usize,
        height: usize,
        clusters: usize,
        labels: Vec<usize>,
    ) -> Self {
        debug_assert!(labels.iter().all(|&l| l < clusters));
        Self {
            width,
            height,
            clusters,
            labels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Cluster count `k` the labels index into.
    pub fn clusters(&self) -> usize {
        self.clusters
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> usize {
        self.labels[row * self.width + col]
    }
}

pub fn mask_from_labels(labels: &LabelMap, cluster: usize) -> Result<BinaryMask> {
    if cluster >= labels.clusters() {
        return Err(Error::Index {
            index: cluster,
            clusters: labels.clusters(),
        });
    }
    Ok(BinaryMask {
        width: labels.width(),
        height: labels.height(),
        data: labels.labels().iter().map(|&l| l == cluster).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_endpoints_and_midpoint() {
        let img = normalize(&[255, 0, 51], 3, 1, BitDepth::Eight).unwrap();
        assert_eq!(img.pixels(), &[1.0, 0.0, 51.0 / 255.0]);
        assert!((img.pixels()[2] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn normalize_sixteen_bit() {
        let img = normalize(&[65535, 0], 2, 1, BitDepth::Sixteen).unwrap();
        assert_eq!(img.pixels(), &[1.0, 0.0]);
    }

    #[test]
    fn normalize_rejects_empty_raster() {
        assert!(matches!(
            normalize(&[], 0, 0, BitDepth::Eight),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            normalize(&[1, 2, 3], 2, 2, BitDepth::Eight),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn normalize_rejects_out_of_depth_sample() {
        assert!(normalize(&[256], 1, 1, BitDepth::Eight).is_err());
    }

    #[test]
    fn gray_image_rejects_out_of_range() {
        assert!(GrayImage::new(1, 1, vec![1.5]).is_err());
        assert!(GrayImage::new(1, 1, vec![f64::NAN]).is_err());
        assert!(GrayImage::new(2, 1, vec![0.5]).is_err());
    }

    #[test]
    fn mask_selection() {
        let all_two = LabelMap::new(2, 2, 3, vec![2; 4]).unwrap();
        assert!(mask_from_labels(&all_two, 2)
            .unwrap()
            .values()
            .iter()
            .all(|&b| b));
        assert!(mask_from_labels(&all_two, 0)
            .unwrap()
            .values()
            .iter()
            .all(|&b| !b));

        let labels = LabelMap::new(4, 1, 2, vec![0, 1, 1, 0]).unwrap();
        let mask = mask_from_labels(&labels, 1).unwrap();
        assert_eq!(mask.values(), &[false, true, true, false]);
    }

    #[test]
    fn mask_cluster_out_of_range() {
        let labels = LabelMap::new(2, 1, 2, vec![0, 1]).unwrap();
        assert!(matches!(
            mask_from_labels(&labels, 2),
            Err(Error::Index {
                index: 2,
                clusters: 2
            })
        ));
    }

    proptest! {
        #[test]
        fn normalize_is_monotone(a in 0u16..=255, b in 0u16..=255) {
            let img = normalize(&[a, b], 2, 1, BitDepth::Eight).unwrap();
            let (x, y) = (img.pixels()[0], img.pixels()[1]);
            prop_assert_eq!(a <= b, x <= y);
        }

        #[test]
        fn masks_partition_the_image(
            k in 1usize..6,
            raw in proptest::collection::vec(0usize..1000, 1..60),
        ) {
            let labels: Vec<usize> = raw.iter().map(|v| v % k).collect();
            let n = labels.len();
            let map = LabelMap::new(n, 1, k, labels).unwrap();
            let masks: Vec<BinaryMask> =
                (0..k).map(|j| mask_from_labels(&map, j).unwrap()).collect();
            for i in 0..n {
                prop_assert_eq!(masks.iter().filter(|m| m.values()[i]).count(), 1);
            }
        }
    }
}
