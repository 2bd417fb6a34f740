//! Synthetic MRI-like slices with exact tumor masks.
//!
//! A phantom has three intensity classes: background, a circular "brain"
//! of healthy tissue, and an elliptical tumor inside it. The ideal image is
//! optionally blurred (diffuse boundaries) and corrupted with Gaussian noise;
//! the ground-truth mask is the ellipse indicator and ignores both.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{BinaryMask, GrayImage};
use crate::preprocess::{gaussian_filter, GaussianParams};

pub const DEFAULT_TUMOR_INTENSITY: f64 = 0.85;
pub const DEFAULT_TISSUE_INTENSITY: f64 = 0.45;
pub const DEFAULT_BACKGROUND_INTENSITY: f64 = 0.05;
pub const DEFAULT_SUITE_SIZE: usize = 128;

/// Axis-aligned ellipse in pixel coordinates (`x` = column, `y` = row).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center_x: f64,
    pub center_y: f64,
    pub semi_x: f64,
    pub semi_y: f64,
}

impl Ellipse {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let dx = (x - self.center_x) / self.semi_x;
        let dy = (y - self.center_y) / self.semi_y;
        dx * dx + dy * dy <= 1.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub width: usize,
    pub height: usize,
    pub brain_center_x: f64,
    pub brain_center_y: f64,
    pub brain_radius: f64,
    pub tumor: Ellipse,
    pub tumor_intensity: f64,
    pub tissue_intensity: f64,
    pub background_intensity: f64,
    /// Gaussian sigma in pixels applied to the ideal image; 0 disables it.
    pub boundary_blur: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl PhantomSpec {
    /// Centered brain and tumor with the default intensities, no blur or noise.
    pub fn centered(width: usize, height: usize, tumor_semi_x: f64, tumor_semi_y: f64) -> Self {
        let cx = (width as f64 - 1.0) / 2.0;
        let cy = (height as f64 - 1.0) / 2.0;
        Self {
            width,
            height,
            brain_center_x: cx,
            brain_center_y: cy,
            brain_radius: 0.42 * width.min(height) as f64,
            tumor: Ellipse {
                center_x: cx,
                center_y: cy,
                semi_x: tumor_semi_x,
                semi_y: tumor_semi_y,
            },
            tumor_intensity: DEFAULT_TUMOR_INTENSITY,
            tissue_intensity: DEFAULT_TISSUE_INTENSITY,
            background_intensity: DEFAULT_BACKGROUND_INTENSITY,
            boundary_blur: 0.0,
            noise_std: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Dimension(format!(
                "phantom must be nonempty, got {}x{}",
                self.width, self.height
            )));
        }
        let levels = [
            self.tumor_intensity,
            self.tissue_intensity,
            self.background_intensity,
        ];
        if levels.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::param("phantom intensities must lie in [0, 1]"));
        }
        if levels[0] == levels[1] || levels[0] == levels[2] || levels[1] == levels[2] {
            return Err(Error::param(
                "phantom intensities must be pairwise distinct",
            ));
        }
        if !(self.boundary_blur >= 0.0) || !(self.noise_std >= 0.0) {
            return Err(Error::param("blur and noise must be >= 0"));
        }
        let (cx, cy, r) = (self.brain_center_x, self.brain_center_y, self.brain_radius);
        if !(r > 0.0)
            || cx - r < 0.0
            || cy - r < 0.0
            || cx + r > self.width as f64 - 1.0
            || cy + r > self.height as f64 - 1.0
        {
            return Err(Error::param("brain disk must fit inside the image"));
        }
        let t = &self.tumor;
        if !(t.semi_x > 0.0) || !(t.semi_y > 0.0) {
            return Err(Error::param("tumor semi-axes must be > 0"));
        }
        let offset = ((t.center_x - cx).powi(2) + (t.center_y - cy).powi(2)).sqrt();
        if offset + t.semi_x.max(t.semi_y) > r {
            return Err(Error::param("tumor ellipse must fit inside the brain disk"));
        }
        Ok(())
    }

    fn in_brain(&self, x: f64, y: f64) -> bool {
        (x - self.brain_center_x).powi(2) + (y - self.brain_center_y).powi(2)
            <= self.brain_radius * self.brain_radius
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    pub image: GrayImage,
    pub truth: BinaryMask,
    pub spec: PhantomSpec,
}

pub fn generate_phantom(spec: &PhantomSpec) -> Result<Phantom> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let mut ideal = Vec::with_capacity(w * h);
    let mut truth = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            let (x, y) = (col as f64, row as f64);
            let tumor = spec.tumor.contains(x, y);
            truth.push(tumor);
            ideal.push(if tumor {
                spec.tumor_intensity
            } else if spec.in_brain(x, y) {
                spec.tissue_intensity
            } else {
                spec.background_intensity
            });
        }
    }
    let mut image = GrayImage::new(w, h, ideal)?;
    if spec.boundary_blur > 0.0 {
        image = gaussian_filter(&image, &GaussianParams::new(spec.boundary_blur)?)?;
    }
    if spec.noise_std > 0.0 {
        let normal = Normal::new(0.0, spec.noise_std)
            .map_err(|e| Error::param(format!("noise distribution: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let noisy = image
            .into_pixels()
            .into_iter()
            .map(|v| v + normal.sample(&mut rng))
            .collect();
        image = GrayImage::from_clamped(w, h, noisy);
    }
    Ok(Phantom {
        image,
        truth: BinaryMask::new(w, h, truth)?,
        spec: spec.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Difficulty {
    Sharp,
    Blurred,
    NoisyBlurred,
}

impl Difficulty {
    /// Blur sigma range (inclusive) and noise level.
    fn degradation(self) -> ((f64, f64), f64) {
        match self {
            Difficulty::Sharp => ((0.0, 0.0), 0.02),
            Difficulty::Blurred => ((1.5, 3.0), 0.05),
            Difficulty::NoisyBlurred => ((2.0, 4.0), 0.10),
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Sharp => "sharp",
            Difficulty::Blurred => "blurred",
            Difficulty::NoisyBlurred => "noisy-blurred",
        })
    }
}

impl FromStr for Difficulty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sharp" => Ok(Difficulty::Sharp),
            "blurred" => Ok(Difficulty::Blurred),
            "noisy-blurred" => Ok(Difficulty::NoisyBlurred),
            other => Err(Error::param(format!("unknown difficulty `{other}`"))),
        }
    }
}

fn sample_spec(
    rng: &mut ChaCha8Rng,
    difficulty: Difficulty,
    width: usize,
    height: usize,
    seed: u64,
) -> PhantomSpec {
    let side = width.min(height) as f64;
    let brain_radius = side * rng.random_range(0.38..=0.45);
    let slack = (side / 2.0 - 1.0 - brain_radius).clamp(0.0, 2.0);
    let brain_center_x = (width as f64 - 1.0) / 2.0 + rng.random_range(-slack..=slack);
    let brain_center_y = (height as f64 - 1.0) / 2.0 + rng.random_range(-slack..=slack);

    let semi_x = side * rng.random_range(0.07..=0.16);
    let semi_y = side * rng.random_range(0.07..=0.16);
    let reach = (brain_radius - semi_x.max(semi_y) - 2.0).max(0.0);
    let offset = reach * rng.random::<f64>().sqrt();
    let angle = rng.random_range(0.0..std::f64::consts::TAU);

    let ((blur_lo, blur_hi), noise_std) = difficulty.degradation();
    let boundary_blur = if blur_hi > blur_lo {
        rng.random_range(blur_lo..=blur_hi)
    } else {
        blur_lo
    };

    PhantomSpec {
        width,
        height,
        brain_center_x,
        brain_center_y,
        brain_radius,
        tumor: Ellipse {
            center_x: brain_center_x + offset * angle.cos(),
            center_y: brain_center_y + offset * angle.sin(),
            semi_x,
            semi_y,
        },
        tumor_intensity: DEFAULT_TUMOR_INTENSITY,
        tissue_intensity: DEFAULT_TISSUE_INTENSITY,
        background_intensity: DEFAULT_BACKGROUND_INTENSITY,
        boundary_blur,
        noise_std,
        seed,
    }
}

/// `count` seeded phantoms at the default 128x128 size.
pub fn phantom_suite(count: usize, difficulty: Difficulty, seed: u64) -> Result<Vec<Phantom>> {
    phantom_suite_sized(
        count,
        difficulty,
        seed,
        DEFAULT_SUITE_SIZE,
        DEFAULT_SUITE_SIZE,
    )
}

pub fn phantom_suite_sized(
    count: usize,
    difficulty: Difficulty,
    seed: u64,
    width: usize,
    height: usize,
) -> Result<Vec<Phantom>> {
    if count < 1 {
        return Err(Error::param("suite needs at least one phantom"));
    }
    if width.min(height) < 16 {
        return Err(Error::param("suite phantoms must be at least 16x16"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(count);
    let mut specs = Vec::with_capacity(count);
    while specs.len() < count {
        let member_seed: u64 = rng.random();
        if !seen.insert(member_seed) {
            continue;
        }
        specs.push(sample_spec(
            &mut rng,
            difficulty,
            width,
            height,
            member_seed,
        ));
    }
    specs.iter().map(generate_phantom).collect()
}
