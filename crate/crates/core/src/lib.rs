//! Structured feature engine for knee osteoarthritis grading.
//!
//! Radiographs and externally produced joint-space masks go in; a named
//! 50-dimensional feature vector comes out:
//!
//! * joint-space narrowing (22 dims): minimum widths, width profile, narrowing
//!   rates against a KL-0 reference, medial/lateral ratio and asymmetry;
//! * osteophyte burden (10 dims): per-site OARSI grades and composites;
//! * subchondral sclerosis texture (18 dims): multi-scale LBP, GLCM statistics,
//!   fractal dimension and per-compartment intensity moments.
//!
//! On top of the vector sits a from-scratch multiclass gradient-boosted tree
//! grader, a logistic sclerosis head with a validation threshold sweep,
//! permutation/occlusion attribution and the evaluation protocols (agreement
//! metrics, bootstrap intervals, family and intervention ablations).

pub mod dataio;
pub mod error;
pub mod eval;
pub mod features;
pub mod grid;
pub mod jsn;
pub mod model;
pub mod phantom;
pub mod pipeline;
pub mod preprocess;
pub mod roi;
pub mod stats;
pub mod texture;

pub use error::{Error, Result};
pub use grid::Grid;

/// Number of KL grades (0..=4).
pub const KL_CLASSES: usize = 5;
