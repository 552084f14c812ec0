//! Controlled dataset variants for graph anomaly detection benchmarks:
//! scale expansion, anomaly-ratio thinning and missing-attribute injection,
//! plus reference detectors and a resource-accounted evaluation harness.

pub mod dataset;
pub mod detectors;
pub mod error;
pub mod eval;
pub mod expand;
pub mod graph;
pub mod ingest;
pub mod io;
pub mod manifest;
pub mod metrics;
pub mod missing;
pub mod pipeline;
pub mod ratio;
pub mod rng;
pub mod stats;
pub mod synthetic;

pub use dataset::Dataset;
pub use error::{GadError, Result};
pub use graph::{build_graph, AttributedGraph, NodeLabels};
pub use manifest::{Transform, VariantManifest};
pub use rng::Stream;
