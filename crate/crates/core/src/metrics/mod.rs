//! Measurements over augmented data: per-cloud PCA diversity and
//! soft-label cross-entropy risk of externally produced predictions.

pub mod diversity;
pub mod embedding;
pub mod pca;
pub mod risk;

pub use diversity::{cloud_diversity, dataset_diversity, DiversityParams, DiversityReport};
pub use embedding::export_embedding;
pub use pca::{pca_reduce, retained_variance, PcaResult};
pub use risk::{cross_entropy_risk, PredictionRow, PredictionSet};
