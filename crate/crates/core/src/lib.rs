//! Clustering-based tumor segmentation for grayscale MR slices.
//!
//! The crate covers the whole pipeline: Gaussian and CLAHE preprocessing
//! ([`preprocess`]), hard clustering ([`kmeans`]), fuzzy clustering ([`fcm`]),
//! a K-Means seeded, spatially regularized FCM ([`hybrid`]), evaluation
//! ([`metrics`], [`bench`]), synthetic phantoms with exact ground truth
//! ([`phantom`]) and file I/O ([`io`]).

// `!(x > 0.0)` is used on purpose so NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod fcm;
pub mod hybrid;
pub mod image;
pub mod io;
pub mod kmeans;
pub mod metrics;
pub mod model;
pub mod phantom;
pub mod preprocess;

pub use error::{Error, Result};
pub use image::{BinaryMask, GrayImage, LabelMap};
pub use model::{ClusterModel, ModelConfig};
