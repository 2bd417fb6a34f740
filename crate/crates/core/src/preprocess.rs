//! Noise suppression and local contrast enhancement.
//!
//! The pipeline is a Gaussian low-pass filter followed by contrast limited
//! adaptive histogram equalization (CLAHE). Both stages preserve image
//! dimensions and keep intensities in `[0, 1]`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub sigma: f64,
    pub radius: usize,
}

impl GaussianParams {
    /// Kernel truncated at `ceil(3 sigma)`.
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::param(format!(
                "gaussian sigma must be > 0, got {sigma}"
            )));
        }
        let radius = ((3.0 * sigma).ceil() as usize).max(1);
        Ok(Self { sigma, radius })
    }

    pub fn with_radius(sigma: f64, radius: usize) -> Result<Self> {
        let params = Self { sigma, radius };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::param(format!(
                "gaussian sigma must be > 0, got {}",
                self.sigma
            )));
        }
        if self.radius < 1 {
            return Err(Error::param("gaussian radius must be >= 1"));
        }
        Ok(())
    }
}

/// Unnormalized 2-D Gaussian density `G(x, y)`.
pub fn gaussian_density(x: f64, y: f64, sigma: f64) -> f64 {
    let two_var = 2.0 * sigma * sigma;
    (-(x * x + y * y) / two_var).exp() / (PI * two_var)
}

/// Square convolution kernel, row-major, side `2 * radius + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    radius: usize,
    weights: Vec<f64>,
}

impl Kernel {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at offset `(dx, dy)` from the center.
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius as isize;
        let side = self.side();
        self.weights[((dy + r) as usize) * side + (dx + r) as usize]
    }
}

/// Evaluates `G` on the integer grid and renormalizes so the weights sum to 1.
pub fn gaussian_kernel(params: &GaussianParams) -> Result<Kernel> {
    params.validate()?;
    let r = params.radius as isize;
    let mut weights = Vec::with_capacity((2 * params.radius + 1).pow(2));
    for dy in -r..=r {
        for dx in -r..=r {
            weights.push(gaussian_density(dx as f64, dy as f64, params.sigma));
        }
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(Kernel {
        radius: params.radius,
        weights,
    })
}

/// Normalized 1-D profile; its outer product with itself is the normalized 2-D kernel.
fn gaussian_profile(params: &GaussianParams) -> Vec<f64> {
    let r = params.radius as isize;
    let two_var = 2.0 * params.sigma * params.sigma;
    let mut taps: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / two_var).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= total;
    }
    taps
}

/// Gaussian smoothing with edge-replicated borders.
///
/// Implemented as two separable passes, which is the same linear operator
/// as the full 2-D convolution with [`gaussian_kernel`].
pub fn gaussian_filter(img: &GrayImage, params: &GaussianParams) -> Result<GrayImage> {
    params.validate()?;
    let (w, h) = (img.width(), img.height());
    let taps = gaussian_profile(params);
    let r = params.radius as isize;
    let src = img.pixels();

    let mut horizontal = vec![0.0; src.len()];
    for row in 0..h {
        let line = &src[row * w..(row + 1) * w];
        for col in 0..w {
            let mut acc = 0.0;
            for (t, &weight) in taps.iter().enumerate() {
                let c = (col as isize + t as isize - r).clamp(0, w as isize - 1) as usize;
                acc += weight * line[c];
            }
            horizontal[row * w + col] = acc;
        }
    }

    let mut out = vec![0.0; src.len()];
    for row in 0..h {
        for col in 0..w {
            let mut acc = 0.0;
            for (t, &weight) in taps.iter().enumerate() {
                let rr = (row as isize + t as isize - r).clamp(0, h as isize - 1) as usize;
                acc += weight * horizontal[rr * w + col];
            }
            out[row * w + col] = acc;
        }
    }
    Ok(GrayImage::from_clamped(w, h, out))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaheParams {
    pub tiles_x: usize,
    pub tiles_y: usize,
    /// Multiple of the mean bin count at which tile histograms are clipped.
    pub clip_limit: f64,
    pub bins: usize,
}

impl Default for ClaheParams {
    fn default() -> Self {
        Self {
            tiles_x: 8,
            tiles_y: 8,
            clip_limit: 2.0,
            bins: 256,
        }
    }
}

impl ClaheParams {
    pub fn validate(&self) -> Result<()> {
        if self.tiles_x < 1 || self.tiles_y < 1 {
            return Err(Error::param("CLAHE tile counts must be >= 1"));
        }
        if !(self.clip_limit >= 1.0) {
            return Err(Error::param(format!(
                "CLAHE clip limit must be >= 1.0, got {}",
                self.clip_limit
            )));
        }
        if self.bins < 2 {
            return Err(Error::param("CLAHE needs at least 2 histogram bins"));
        }
        Ok(())
    }

    fn validate_for(&self, img: &GrayImage) -> Result<()> {
        self.validate()?;
        if img.width() < self.tiles_x || img.height() < self.tiles_y {
            return Err(Error::param(format!(
                "{}x{} tile grid does not fit a {}x{} image",
                self.tiles_x,
                self.tiles_y,
                img.width(),
                img.height()
            )));
        }
        Ok(())
    }
}

/// Bin index of an intensity in `[0, 1]`.
pub(crate) fn bin_of(v: f64, bins: usize) -> usize {
    ((v * bins as f64) as usize).min(bins - 1)
}

/// Per-tile intensity transfer function.
#[derive(Debug, Clone)]
enum TileMapping {
    /// The tile holds a single histogram bin; pass values through.
    Identity,
    Lut(Vec<f64>),
}

impl TileMapping {
    fn apply(&self, v: f64, bins: usize) -> f64 {
        match self {
            TileMapping::Identity => v,
            TileMapping::Lut(lut) => lut[bin_of(v, bins)],
        }
    }
}

fn tile_mapping(values: impl Iterator<Item = f64>, params: &ClaheParams) -> TileMapping {
    let bins = params.bins;
    let mut hist = vec![0.0f64; bins];
    let mut total = 0.0;
    for v in values {
        hist[bin_of(v, bins)] += 1.0;
        total += 1.0;
    }
    if hist.iter().filter(|&&c| c > 0.0).count() <= 1 {
        return TileMapping::Identity;
    }

    let limit = params.clip_limit * total / bins as f64;
    let mut excess = 0.0;
    for c in &mut hist {
        if *c > limit {
            excess += *c - limit;
            *c = limit;
        }
    }
    let share = excess / bins as f64;
    if share > 0.0 {
        for c in &mut hist {
            *c += share;
        }
    }

    let mut cdf = Vec::with_capacity(bins);
    let mut running = 0.0;
    for &c in &hist {
        running += c;
        cdf.push(running);
    }
    let cdf_min = cdf.iter().copied().find(|&c| c > 0.0).unwrap_or(0.0);
    let span = total - cdf_min;
    if !(span > 0.0) {
        return TileMapping::Identity;
    }
    TileMapping::Lut(
        cdf.iter()
            .map(|&c| ((c - cdf_min) / span).clamp(0.0, 1.0))
            .collect(),
    )
}

/// Splits `[0, extent)` into `count` contiguous spans.
fn tile_bounds(extent: usize, count: usize) -> Vec<(usize, usize)> {
    (0..count)
        .map(|i| (i * extent / count, (i + 1) * extent / count))
        .collect()
}

/// Locates `pos` between tile centers: returns `(lower, upper, weight_of_upper)`.
fn bracket(pos: f64, centers: &[f64]) -> (usize, usize, f64) {
    let last = centers.len() - 1;
    if pos <= centers[0] {
        return (0, 0, 0.0);
    }
    if pos >= centers[last] {
        return (last, last, 0.0);
    }
    let upper = centers.partition_point(|&c| c <= pos);
    let lower = upper - 1;
    let t = (pos - centers[lower]) / (centers[upper] - centers[lower]);
    (lower, upper, t)
}

/// Contrast limited adaptive histogram equalization.
///
/// Each tile's histogram is clipped at `clip_limit * tile_pixels / bins`, the
/// clipped mass is spread evenly over all bins, and the tile's equalization
/// curve is `(cdf(b) - cdf_min) / (total - cdf_min)`. Output pixels blend the
/// curves of the four nearest tile centers bilinearly.
pub fn clahe(img: &GrayImage, params: &ClaheParams) -> Result<GrayImage> {
    params.validate_for(img)?;
    let (w, h) = (img.width(), img.height());
    let cols = tile_bounds(w, params.tiles_x);
    let rows = tile_bounds(h, params.tiles_y);
    let px = img.pixels();

    let mut mappings = Vec::with_capacity(params.tiles_x * params.tiles_y);
    for &(r0, r1) in &rows {
        for &(c0, c1) in &cols {
            let values = (r0..r1).flat_map(|r| px[r * w + c0..r * w + c1].iter().copied());
            mappings.push(tile_mapping(values, params));
        }
    }

    let center = |&(a, b): &(usize, usize)| (a + b - 1) as f64 / 2.0;
    let col_centers: Vec<f64> = cols.iter().map(center).collect();
    let row_centers: Vec<f64> = rows.iter().map(center).collect();
    let col_brackets: Vec<_> = (0..w).map(|c| bracket(c as f64, &col_centers)).collect();

    let tile = |ty: usize, tx: usize| &mappings[ty * params.tiles_x + tx];
    let mut out = Vec::with_capacity(px.len());
    for row in 0..h {
        let (ty0, ty1, wy) = bracket(row as f64, &row_centers);
        for (col, &(tx0, tx1, wx)) in col_brackets.iter().enumerate() {
            let v = px[row * w + col];
            let f00 = tile(ty0, tx0).apply(v, params.bins);
            let f01 = tile(ty0, tx1).apply(v, params.bins);
            let f10 = tile(ty1, tx0).apply(v, params.bins);
            let f11 = tile(ty1, tx1).apply(v, params.bins);
            let top = f00 + wx * (f01 - f00);
            let bottom = f10 + wx * (f11 - f10);
            out.push(top + wy * (bottom - top));
        }
    }
    Ok(GrayImage::from_clamped(w, h, out))
}

/// Gaussian filter then CLAHE, either stage optional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preprocess {
    pub gaussian: Option<GaussianParams>,
    pub clahe: Option<ClaheParams>,
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            gaussian: Some(GaussianParams {
                sigma: 1.0,
                radius: 3,
            }),
            clahe: Some(ClaheParams::default()),
        }
    }
}

impl Preprocess {
    pub fn disabled() -> Self {
        Self {
            gaussian: None,
            clahe: None,
        }
    }

    pub fn is_enabled(&self) -> bool {
        self.gaussian.is_some() || self.clahe.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(g) = &self.gaussian {
            g.validate()?;
        }
        if let Some(c) = &self.clahe {
            c.validate()?;
        }
        Ok(())
    }

    pub fn apply(&self, img: &GrayImage) -> Result<GrayImage> {
        let smoothed = match &self.gaussian {
            Some(g) => gaussian_filter(img, g)?,
            None => img.clone(),
        };
        match &self.clahe {
            Some(c) => clahe(&smoothed, c),
            None => Ok(smoothed),
        }
    }
}
