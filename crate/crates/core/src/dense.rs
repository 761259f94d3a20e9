//! Exhaustive cosine-similarity retrieval over precomputed embeddings.
//!
//! Embedding file format (UTF-8):
//!
//! ```text
//! #dim 4
//! u1<TAB>0.1 0.2 0.3 0.4
//! u2<TAB>-1 0 0 2.5e-3
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::ranking::{RankedList, ScoredDoc, Stage};

#[derive(Debug, Error)]
pub enum DenseError {
    #[error("embedding I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("missing or invalid `#dim D` header")]
    MissingHeader,
    #[error("vector `{id}` has dimension {found}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("malformed vector `{id}`: {detail}")]
    MalformedVector { id: String, detail: String },
    #[error("duplicate embedding id `{0}`")]
    DuplicateId(String),
    #[error("vector `{0}` has zero norm")]
    ZeroNorm(String),
    #[error("no embedding for id `{0}`")]
    UnknownId(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingKind {
    Query,
    Document,
}

/// Row-major vectors of one fixed dimension, with precomputed norms.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    dim: usize,
    kind: EmbeddingKind,
    ids: Vec<String>,
    by_id: HashMap<String, usize>,
    data: Vec<f64>,
    norms: Vec<f64>,
}

impl EmbeddingStore {
    pub fn new(dim: usize, kind: EmbeddingKind) -> Self {
        Self {
            dim,
            kind,
            ids: Vec::new(),
            by_id: HashMap::new(),
            data: Vec::new(),
            norms: Vec::new(),
        }
    }

    /// Adds one vector; rejects wrong dimension, non-finite components,
    /// zero norm and repeated ids.
    pub fn insert(&mut self, id: impl Into<String>, vector: &[f64]) -> Result<(), DenseError> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(DenseError::DimensionMismatch {
                id,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if let Some(bad) = vector.iter().find(|v| !v.is_finite()) {
            return Err(DenseError::MalformedVector {
                id,
                detail: format!("non-finite component {bad}"),
            });
        }
        let norm = norm(vector);
        if norm == 0.0 {
            return Err(DenseError::ZeroNorm(id));
        }
        if self.by_id.contains_key(&id) {
            return Err(DenseError::DuplicateId(id));
        }
        self.by_id.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.data.extend_from_slice(vector);
        self.norms.push(norm);
        Ok(())
    }

    pub fn from_reader<R: Read>(reader: R, kind: EmbeddingKind) -> Result<Self, DenseError> {
        let mut lines = BufReader::new(reader).lines();
        let header = lines.next().transpose()?.ok_or(DenseError::MissingHeader)?;
        let dim = header
            .trim_start_matches('\u{feff}')
            .trim_end()
            .strip_prefix("#dim ")
            .and_then(|d| d.trim().parse::<usize>().ok())
            .filter(|&d| d >= 1)
            .ok_or(DenseError::MissingHeader)?;

        let mut store = Self::new(dim, kind);
        let mut buf = Vec::with_capacity(dim);
        for line in lines {
            let line = line?;
            let line = line.trim_end_matches('\r');
            if line.is_empty() {
                continue;
            }
            let (id, values) =
                line.split_once('\t')
                    .ok_or_else(|| DenseError::MalformedVector {
                        id: line.chars().take(40).collect(),
                        detail: "missing tab separator".into(),
                    })?;
            buf.clear();
            for v in values.split(' ').filter(|v| !v.is_empty()) {
                buf.push(v.parse::<f64>().map_err(|e| DenseError::MalformedVector {
                    id: id.to_string(),
                    detail: format!("`{v}`: {e}"),
                })?);
            }
            store.insert(id, &buf)?;
        }
        Ok(store)
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<(), DenseError> {
        let mut out = BufWriter::new(writer);
        writeln!(out, "#dim {}", self.dim)?;
        for (i, id) in self.ids.iter().enumerate() {
            write!(out, "{id}\t")?;
            for (j, v) in self.vector_at(i).iter().enumerate() {
                if j > 0 {
                    out.write_all(b" ")?;
                }
                write!(out, "{v}")?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.by_id.get(id).map(|&i| self.vector_at(i))
    }

    fn vector_at(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Top-`k` stored vectors by cosine similarity to `query`.
    pub fn retrieve(
        &self,
        query_id: &str,
        query: &[f64],
        k: usize,
    ) -> Result<RankedList, DenseError> {
        if query.len() != self.dim {
            return Err(DenseError::DimensionMismatch {
                id: query_id.to_string(),
                expected: self.dim,
                found: query.len(),
            });
        }
        let qnorm = norm(query);
        if qnorm == 0.0 {
            return Err(DenseError::ZeroNorm(query_id.to_string()));
        }
        let entries = (0..self.len())
            .map(|i| {
                let score = dot(query, self.vector_at(i)) / (qnorm * self.norms[i]);
                ScoredDoc::new(self.ids[i].clone(), score)
            })
            .collect();
        Ok(RankedList::from_unsorted(
            query_id,
            Stage::Retrieval,
            entries,
            k,
        ))
    }
}

pub fn load_embeddings(path: &Path, kind: EmbeddingKind) -> Result<EmbeddingStore, DenseError> {
    EmbeddingStore::from_reader(File::open(path)?, kind)
}

pub fn dense_retrieve(
    docs: &EmbeddingStore,
    query_id: &str,
    query: &[f64],
    k: usize,
) -> Result<RankedList, DenseError> {
    docs.retrieve(query_id, query, k)
}

pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64, DenseError> {
    if u.len() != v.len() {
        return Err(DenseError::DimensionMismatch {
            id: String::new(),
            expected: u.len(),
            found: v.len(),
        });
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(DenseError::ZeroNorm(String::new()));
    }
    Ok(dot(u, v) / (nu * nv))
}

#[inline]
fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

#[inline]
fn norm(u: &[f64]) -> f64 {
    dot(u, u).sqrt()
}
