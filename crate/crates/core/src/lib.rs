//! Road-infrastructure embeddings for hexagonal microregions.
//!
//! The crate turns road segments carrying OSM-style tags into fixed-width
//! binary feature vectors, learns segment embeddings with a small
//! fully-connected autoencoder, averages them into one embedding per
//! hexagonal cell and offers tools to inspect the resulting latent space
//! (Ward clustering, PCA, exact t-SNE and embedding arithmetic).
//!
//! Numerical modules are generic over [`Scalar`] (implemented for `f32` and
//! `f64`). The aliases at the crate root pin the scalar to [`Real`], which is
//! what the pipeline uses.

pub mod aggregate;
pub mod analysis;
pub mod autoencoder;
pub mod clustering;
pub mod fixture;
pub mod grid;
pub mod ingest;
pub mod linalg;
pub mod metrics;
pub mod scalar;
pub mod schema;

pub use scalar::Scalar;

/// Scalar type used by the pipeline.
pub type Real = f64;

pub type ModelParams = autoencoder::ModelParams<Real>;
pub type Gradients = autoencoder::ModelParams<Real>;
pub type TrainReport = autoencoder::TrainReport<Real>;
pub type RegionEmbedding = aggregate::RegionEmbedding<Real>;
pub type Dendrogram = clustering::Dendrogram<Real>;
pub type Pca = analysis::pca::Pca<Real>;
pub type Projection = analysis::Projection<Real>;
pub type TsneResult = analysis::tsne::TsneResult<Real>;

pub use grid::{CellAssignment, CellId};
pub use ingest::{RoadNetwork, RoadSegment};
pub use schema::{FeatureSchema, FeatureVector};
