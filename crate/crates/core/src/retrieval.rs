//! Embedding-space math for one-shot label recognition: cosine distance,
//! the batch-all triplet loss, and top-k gallery ranking.
//!
//! Embeddings are produced elsewhere (any encoder will do); this module only
//! assumes unit-normalized vectors with an integer class label.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding has no finite direction")]
    DegenerateEmbedding,
    #[error("gallery is empty")]
    EmptyGallery,
    #[error("invalid batch: {0}")]
    InvalidBatch(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A unit-normalized embedding vector with its class label.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub class_id: i64,
    vector: Vec<f64>,
}

impl Embedding {
    /// Normalize `components` to unit length. Zero or non-finite input is
    /// rejected, so every stored vector has norm 1.
    pub fn new(class_id: i64, components: &[f64]) -> Result<Self, RetrievalError> {
        if components.is_empty() || components.iter().any(|c| !c.is_finite()) {
            return Err(RetrievalError::DegenerateEmbedding);
        }
        let norm = components.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm <= 0.0 || !norm.is_finite() {
            return Err(RetrievalError::DegenerateEmbedding);
        }
        let vector = components.iter().map(|c| c / norm).collect();
        Ok(Self { class_id, vector })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.vector
    }
}

fn dot(u: &Embedding, v: &Embedding) -> Result<f64, RetrievalError> {
    if u.dim() != v.dim() {
        return Err(RetrievalError::DimensionMismatch(u.dim(), v.dim()));
    }
    Ok(u.vector.iter().zip(&v.vector).map(|(a, b)| a * b).sum())
}

/// Cosine distance 1 − ⟨u, v⟩ between unit vectors, clamped to [0, 2]
/// against last-ulp drift.
pub fn cosine_distance(u: &Embedding, v: &Embedding) -> Result<f64, RetrievalError> {
    Ok((1.0 - dot(u, v)?).clamp(0.0, 2.0))
}

/// P classes × K embeddings per class plus a margin, validated on
/// construction: P ≥ 2, K ≥ 2, every class contributes exactly K embeddings
/// of one common dimension, margin ≥ 0.
#[derive(Debug, Clone)]
pub struct TripletBatch {
    classes: Vec<Vec<Embedding>>,
    margin: f64,
}

impl TripletBatch {
    /// Group `embeddings` by class id (in order of first appearance) and
    /// validate the batch shape.
    pub fn new(embeddings: Vec<Embedding>, margin: f64) -> Result<Self, RetrievalError> {
        if !(margin >= 0.0 && margin.is_finite()) {
            return Err(RetrievalError::InvalidBatch(format!("margin {margin} must be >= 0")));
        }
        let mut classes: Vec<Vec<Embedding>> = Vec::new();
        for e in embeddings {
            if let Some(first) = classes.first().and_then(|c| c.first()) {
                if first.dim() != e.dim() {
                    return Err(RetrievalError::DimensionMismatch(first.dim(), e.dim()));
                }
            }
            match classes.iter_mut().find(|c| c[0].class_id == e.class_id) {
                Some(group) => group.push(e),
                None => classes.push(vec![e]),
            }
        }
        let p = classes.len();
        if p < 2 {
            return Err(RetrievalError::InvalidBatch(format!("{p} classes, need at least 2")));
        }
        let k = classes[0].len();
        if k < 2 {
            return Err(RetrievalError::InvalidBatch(format!(
                "{k} embeddings per class, need at least 2"
            )));
        }
        if let Some(bad) = classes.iter().find(|c| c.len() != k) {
            return Err(RetrievalError::InvalidBatch(format!(
                "class {} has {} embeddings, expected {k}",
                bad[0].class_id,
                bad.len()
            )));
        }
        Ok(Self { classes, margin })
    }

    pub fn p(&self) -> usize {
        self.classes.len()
    }

    pub fn k(&self) -> usize {
        self.classes[0].len()
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn classes(&self) -> &[Vec<Embedding>] {
        &self.classes
    }
}

/// Result of a batch-all loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletStats {
    /// Sum of hinged margin violations over every triplet.
    pub loss: f64,
    /// Total number of triplets, P·K·(K−1)·(P−1)·K.
    pub triplet_count: usize,
    /// Triplets with a strictly positive hinge.
    pub active_count: usize,
}

impl TripletStats {
    /// Mean loss over active triplets (0 when none are active); a common
    /// practical variant of the plain sum.
    pub fn mean_over_active(&self) -> f64 {
        if self.active_count == 0 {
            0.0
        } else {
            self.loss / self.active_count as f64
        }
    }
}

/// Batch-all triplet loss: for every anchor/positive pair within a class and
/// every negative from another class, accumulate
/// max(0, m + D(a,p) − D(a,n)) over cosine distances D.
pub fn batch_all_triplet_loss(batch: &TripletBatch) -> TripletStats {
    let flat: Vec<&Embedding> = batch.classes.iter().flatten().collect();
    let n = flat.len();
    let k = batch.k();
    // pairwise cosine distances, computed once
    let mut dist = vec![0.0f64; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = cosine_distance(flat[i], flat[j]).expect("batch dims validated");
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut stats = TripletStats { loss: 0.0, triplet_count: 0, active_count: 0 };
    for ci in 0..batch.p() {
        for a in ci * k..(ci + 1) * k {
            for p in ci * k..(ci + 1) * k {
                if p == a {
                    continue;
                }
                let d_ap = dist[a * n + p];
                for cj in 0..batch.p() {
                    if cj == ci {
                        continue;
                    }
                    for neg in cj * k..(cj + 1) * k {
                        let h = batch.margin + d_ap - dist[a * n + neg];
                        stats.triplet_count += 1;
                        if h > 0.0 {
                            stats.loss += h;
                            stats.active_count += 1;
                        }
                    }
                }
            }
        }
    }
    stats
}

/// Rank a one-shot gallery by cosine similarity to `query`: up to `k`
/// entries in non-increasing similarity, ties broken by ascending class id.
pub fn rank_top_k(
    query: &Embedding,
    gallery: &[Embedding],
    k: usize,
) -> Result<Vec<(i64, f64)>, RetrievalError> {
    if gallery.is_empty() {
        return Err(RetrievalError::EmptyGallery);
    }
    let mut scored = gallery
        .iter()
        .map(|g| Ok((g.class_id, dot(query, g)?)))
        .collect::<Result<Vec<_>, RetrievalError>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

/// Read embeddings from a text file: one record per line, a class id
/// followed by the vector components, whitespace-separated. Vectors are
/// normalized on load; blank lines are skipped; every record must have the
/// same dimension.
pub fn read_embeddings(path: &Path) -> Result<Vec<Embedding>, RetrievalError> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    parse_embeddings(reader)
}

pub fn parse_embeddings(reader: impl BufRead) -> Result<Vec<Embedding>, RetrievalError> {
    let mut out: Vec<Embedding> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let n = idx + 1;
        let mut fields = line.split_whitespace();
        let Some(first) = fields.next() else { continue };
        let class_id = first
            .parse::<i64>()
            .map_err(|e| RetrievalError::Parse { line: n, msg: format!("class id: {e}") })?;
        let components = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|e| RetrievalError::Parse { line: n, msg: format!("component: {e}") })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let e = Embedding::new(class_id, &components)
            .map_err(|e| RetrievalError::Parse { line: n, msg: e.to_string() })?;
        if let Some(prev) = out.first() {
            if prev.dim() != e.dim() {
                return Err(RetrievalError::Parse {
                    line: n,
                    msg: format!("dimension {}, expected {}", e.dim(), prev.dim()),
                });
            }
        }
        out.push(e);
    }
    Ok(out)
}

/// Write embeddings in the same format `read_embeddings` accepts.
pub fn write_embeddings(path: &Path, embeddings: &[Embedding]) -> Result<(), RetrievalError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in embeddings {
        write!(f, "{}", e.class_id)?;
        for c in e.components() {
            write!(f, " {c}")?;
        }
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}
