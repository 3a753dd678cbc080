//! Path A classifier, sclerosis head and attribution.

pub mod attribution;
pub mod cv;
pub mod gbt;
pub mod sclerosis;

pub use attribution::{occlusion_attribution, permutation_importance, Occlusion, PermutationImportance};
pub use cv::{cross_validate, stratified_kfold, CvReport};
pub use gbt::{GbtEnsemble, GbtParams};
pub use sclerosis::SclerosisHead;
