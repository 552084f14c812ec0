//! Dataset directories: the unit every command reads and writes.

use std::path::Path;

use crate::error::{GadError, Result};
use crate::graph::{build_graph, AttributedGraph, NodeLabels};
use crate::io;
use crate::manifest::{sha256_file, VariantManifest};
use crate::missing::MissingMask;

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.bin";
pub const LABELS_FILE: &str = "labels.tsv";
pub const MASK_FILE: &str = "mask.bin";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: AttributedGraph,
    pub labels: NodeLabels,
    pub mask: Option<MissingMask>,
    pub manifest: VariantManifest,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Dataset> {
        let manifest_path = dir.join(MANIFEST_FILE);
        if !manifest_path.exists() {
            return Err(GadError::MissingFile(manifest_path));
        }
        let manifest = VariantManifest::read(&manifest_path)?;
        let features = io::read_features(&dir.join(FEATURES_FILE))?;
        let n = features.nrows();
        let edges = io::read_edge_list(&dir.join(EDGES_FILE))?;
        let labels = io::read_labels(&dir.join(LABELS_FILE), n)?;
        let (graph, labels) = build_graph(&edges, n, features, labels)?;
        let mask_path = dir.join(MASK_FILE);
        let mask = if mask_path.exists() {
            let bytes = std::fs::read(&mask_path).map_err(|e| GadError::io(&mask_path, e))?;
            Some(MissingMask::decode(&bytes, &labels, graph.dim())?)
        } else {
            None
        };
        Ok(Dataset {
            graph,
            labels,
            mask,
            manifest,
        })
    }

    /// Writes all artifacts, records their checksums in the manifest and
    /// writes the manifest last. Returns the finished manifest.
    pub fn save(&self, dir: &Path) -> Result<VariantManifest> {
        save_parts(dir, &self.graph, &self.labels, self.mask.as_ref(), self.manifest.clone())
    }
}

pub fn save_parts(
    dir: &Path,
    graph: &AttributedGraph,
    labels: &NodeLabels,
    mask: Option<&MissingMask>,
    mut manifest: VariantManifest,
) -> Result<VariantManifest> {
    std::fs::create_dir_all(dir).map_err(|e| GadError::io(dir, e))?;
    io::write_edge_list(&dir.join(EDGES_FILE), graph)?;
    io::write_features(&dir.join(FEATURES_FILE), graph.features())?;
    io::write_labels(&dir.join(LABELS_FILE), labels.as_slice())?;
    let mut files = vec![EDGES_FILE, FEATURES_FILE, LABELS_FILE];
    let mask_path = dir.join(MASK_FILE);
    match mask {
        Some(mask) => {
            std::fs::write(&mask_path, mask.encode()).map_err(|e| GadError::io(&mask_path, e))?;
            files.push(MASK_FILE);
        }
        None if mask_path.exists() => {
            std::fs::remove_file(&mask_path).map_err(|e| GadError::io(&mask_path, e))?;
        }
        None => {}
    }
    manifest.content_checksums.clear();
    for f in files {
        manifest
            .content_checksums
            .insert(f.to_string(), sha256_file(&dir.join(f))?);
    }
    manifest.write(&dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Recomputes checksums of a saved dataset and compares them with its
/// manifest. Returns the names of files that differ.
pub fn verify_checksums(dir: &Path) -> Result<Vec<String>> {
    let manifest = VariantManifest::read(&dir.join(MANIFEST_FILE))?;
    let mut bad = Vec::new();
    for (file, expected) in &manifest.content_checksums {
        if &sha256_file(&dir.join(file))? != expected {
            bad.push(file.clone());
        }
    }
    Ok(bad)
}
