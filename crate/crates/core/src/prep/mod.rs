//! Spectral reduction and sample preparation: PCA, patch cubes, flattening
//! and seeded train/test splits.

mod patches;
mod pca;
mod split;

pub use patches::{extract_patches, fill_patch, flatten_patches, Layout, PatchSet};
pub use pca::{apply_pca, covariance, fit_pca, jacobi_eigen, load_pca, save_pca, Eigen, PcaModel, PcaOptions};
pub use split::{split_indices, split_train_test, SplitSpec};
