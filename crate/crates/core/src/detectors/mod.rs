//! Anomaly scorers. Larger scores mean more anomalous.

pub mod degree;
pub mod knn;
pub mod mlpae;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;

use crate::error::{GadError, Result};

pub use degree::score_degree;
pub use knn::score_knn;
pub use mlpae::{score_mlpae, train_mlpae, Mlpae, MlpaeConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreVector {
    pub detector_id: String,
    pub scores: Vec<f64>,
}

impl ScoreVector {
    pub fn new(detector_id: impl Into<String>, scores: Vec<f64>) -> Result<Self> {
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(GadError::Data(format!("score of node {i} is not finite")));
        }
        Ok(Self {
            detector_id: detector_id.into(),
            scores,
        })
    }

    /// Text dump, one `node_id<TAB>score` per line.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| GadError::io(path, e))?;
        let mut w = BufWriter::new(file);
        for (i, s) in self.scores.iter().enumerate() {
            writeln!(w, "{i}\t{s}").map_err(|e| GadError::io(path, e))?;
        }
        w.flush().map_err(|e| GadError::io(path, e))
    }
}

/// Cooperative cancellation flag shared between a running detector and the
/// resource monitor.
#[derive(Clone, Debug, Default)]
pub struct AbortSignal(Arc<AtomicBool>);

impl AbortSignal {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn raise(&self) {
        self.0.store(true, Ordering::SeqCst);
    }

    pub fn is_raised(&self) -> bool {
        self.0.load(Ordering::SeqCst)
    }

    pub fn check(&self) -> Result<()> {
        if self.is_raised() {
            Err(GadError::Aborted("abort signal raised".into()))
        } else {
            Ok(())
        }
    }
}
