//! Graph classification by rendering each graph as a stack of 2D histograms
//! of its PCA-aligned node embeddings and classifying the stacks with a
//! small multi-branch 2D CNN, alongside graphlet and Weisfeiler-Lehman
//! kernel SVM baselines and a cross-validation harness.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below pin the precisions used by the pipeline.

pub mod benchmark;
pub mod cnn;
pub mod compress;
pub mod container;
pub mod embed;
pub mod graph;
pub mod harness;
pub mod kernels;
pub mod linalg;
pub mod mnist;
pub mod raster;
pub mod rng;
pub mod scalar;
pub mod split;
pub mod svm;

pub use scalar::Scalar;

/// Precision used for embeddings, images and the CNN.
pub type Real = f32;
pub type Embeddings = embed::NodeEmbeddings<Real>;
pub type Pca = compress::PcaModel<Real>;
pub type Images = cnn::ImageSet<Real>;
pub type Cnn = cnn::CnnModel<Real>;
/// Kernel matrices and SVM duals stay in double precision.
pub type KernelGram = linalg::Matrix<f64>;
