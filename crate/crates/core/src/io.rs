//! On-disk formats for edges, features and labels.
//!
//! * edges: `u<TAB>v` per line, `#` starts a comment
//! * features: `GADF` magic, u32 n, u32 d, u32 reserved (zero), then n*d
//!   little-endian f32 row-major
//! * labels: `node_id<TAB>{0|1}` per line

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{GadError, Result};
use crate::graph::AttributedGraph;

pub const FEATURE_MAGIC: &[u8; 4] = b"GADF";

fn data_lines(path: &Path) -> Result<impl Iterator<Item = (usize, Result<String>)>> {
    let file = File::open(path).map_err(|e| GadError::io(path, e))?;
    let owned = path.to_path_buf();
    Ok(BufReader::new(file)
        .lines()
        .enumerate()
        .map(move |(i, l)| (i + 1, l.map_err(|e| GadError::io(&owned, e))))
        .filter(|(_, l)| match l {
            Ok(s) => {
                let t = s.trim();
                !t.is_empty() && !t.starts_with('#')
            }
            Err(_) => true,
        }))
}

fn parse_id(tok: Option<&str>, path: &Path, line: usize) -> Result<u32> {
    tok.and_then(|t| t.parse::<u32>().ok()).ok_or_else(|| {
        GadError::MalformedInput(format!("{}:{line}: expected a node id", path.display()))
    })
}

pub fn read_edge_list(path: &Path) -> Result<Vec<(u32, u32)>> {
    let mut edges = Vec::new();
    for (line_no, line) in data_lines(path)? {
        let line = line?;
        let mut toks = line.split_whitespace();
        let u = parse_id(toks.next(), path, line_no)?;
        let v = parse_id(toks.next(), path, line_no)?;
        edges.push((u, v));
    }
    Ok(edges)
}

pub fn write_edge_list(path: &Path, g: &AttributedGraph) -> Result<()> {
    let file = File::create(path).map_err(|e| GadError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (u, v) in g.edges() {
        writeln!(w, "{u}\t{v}").map_err(|e| GadError::io(path, e))?;
    }
    w.flush().map_err(|e| GadError::io(path, e))
}

pub fn encode_features(features: &Array2<f32>) -> Vec<u8> {
    let (n, d) = features.dim();
    let mut buf = Vec::with_capacity(16 + n * d * 4);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&(n as u32).to_le_bytes());
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes());
    for &x in features.iter() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf
}

pub fn decode_features(bytes: &[u8]) -> Result<Array2<f32>> {
    if bytes.len() < 16 || &bytes[0..4] != FEATURE_MAGIC {
        return Err(GadError::MalformedInput("feature file lacks GADF header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (n, d) = (word(4), word(8));
    let body = &bytes[16..];
    if body.len() != n * d * 4 {
        return Err(GadError::Shape(format!(
            "feature body has {} bytes, header declares {n}x{d}",
            body.len()
        )));
    }
    let values = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((n, d), values).map_err(|e| GadError::Shape(e.to_string()))
}

pub fn read_features(path: &Path) -> Result<Array2<f32>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| GadError::io(path, e))?;
    decode_features(&bytes)
}

pub fn write_features(path: &Path, features: &Array2<f32>) -> Result<()> {
    std::fs::write(path, encode_features(features)).map_err(|e| GadError::io(path, e))
}

/// Reads a label file for exactly `n` nodes.
pub fn read_labels(path: &Path, n: usize) -> Result<Vec<u8>> {
    let mut labels: Vec<Option<u8>> = vec![None; n];
    let mut rows = 0usize;
    for (line_no, line) in data_lines(path)? {
        let line = line?;
        let mut toks = line.split_whitespace();
        let id = parse_id(toks.next(), path, line_no)? as usize;
        let value = match toks.next() {
            Some("0") => 0u8,
            Some("1") => 1u8,
            other => {
                return Err(GadError::Data(format!(
                    "{}:{line_no}: label {:?} is not binary",
                    path.display(),
                    other.unwrap_or("")
                )))
            }
        };
        rows += 1;
        if id >= n {
            return Err(GadError::Shape(format!(
                "{}:{line_no}: node {id} outside declared n={n}",
                path.display()
            )));
        }
        if let Some(prev) = labels[id] {
            return Err(GadError::Consistency(format!(
                "node {id} labelled twice ({prev} and {value})"
            )));
        }
        labels[id] = Some(value);
    }
    if rows != n {
        return Err(GadError::Shape(format!("{rows} label rows for n={n}")));
    }
    Ok(labels.into_iter().map(|l| l.unwrap()).collect())
}

pub fn write_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| GadError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (i, l) in labels.iter().enumerate() {
        writeln!(w, "{i}\t{l}").map_err(|e| GadError::io(path, e))?;
    }
    w.flush().map_err(|e| GadError::io(path, e))
}
