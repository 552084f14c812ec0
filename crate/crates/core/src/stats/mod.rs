pub mod gmm;
pub mod kmeans;
pub mod ks;

pub use gmm::{fit_gmm, fit_gmm_k, sample_gmm, GmmModel};
pub use kmeans::{kmeans, ClusterAssignment};
pub use ks::{ks_matrix, ks_two_sample, KsMatrixReport, KsResult};
