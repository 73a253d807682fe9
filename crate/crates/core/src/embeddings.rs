//! Word vectors for category labels.
//!
//! The text format is a `N D` header followed by `N` lines of
//! `token v1 ... vD`. Only tokens needed for the requested vocabulary are
//! parsed, so large pretrained files stream through cheaply.
//!
//! A multi-word label such as `aircraft_carrier` resolves to the token
//! `aircraft_carrier` when present, otherwise to the mean of its word vectors.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::l2_norm;
use crate::sketch::Label;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dimension: usize,
    table: BTreeMap<Label, Vec<f64>>,
    norms: BTreeMap<Label, f64>,
    missing: Vec<Label>,
}

impl EmbeddingStore {
    /// Builds a store from label vectors. Zero or non-finite vectors are rejected.
    pub fn from_vectors(
        dimension: usize,
        vectors: impl IntoIterator<Item = (Label, Vec<f64>)>,
    ) -> Result<Self> {
        let mut store = Self {
            dimension,
            table: BTreeMap::new(),
            norms: BTreeMap::new(),
            missing: Vec::new(),
        };
        for (label, v) in vectors {
            if v.len() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    found: v.len(),
                });
            }
            if !usable(&v) {
                return Err(Error::InvalidArgument(format!(
                    "unusable vector for {label}"
                )));
            }
            store.insert(label, v);
        }
        Ok(store)
    }

    fn insert(&mut self, label: Label, v: Vec<f64>) {
        self.norms.insert(label.clone(), l2_norm(&v));
        self.table.insert(label, v);
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn contains(&self, label: &Label) -> bool {
        self.table.contains_key(label)
    }

    pub fn vector(&self, label: &Label) -> Option<&[f64]> {
        self.table.get(label).map(Vec::as_slice)
    }

    /// Vocabulary labels that could not be resolved at load time.
    pub fn missing(&self) -> &[Label] {
        &self.missing
    }

    /// Fails with every label in `labels` that has no vector.
    pub fn require<'a>(&self, labels: impl IntoIterator<Item = &'a Label>) -> Result<()> {
        let missing: Vec<String> = labels
            .into_iter()
            .filter(|l| !self.contains(l))
            .map(Label::to_string)
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingToken(missing))
        }
    }

    /// Unclamped cosine similarity.
    pub fn cosine(&self, a: &Label, b: &Label) -> Result<f64> {
        let lookup = |l: &Label| {
            self.table
                .get(l)
                .zip(self.norms.get(l))
                .ok_or_else(|| Error::MissingToken(vec![l.to_string()]))
        };
        let (va, na) = lookup(a)?;
        let (vb, nb) = lookup(b)?;
        let dot: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
        Ok(dot / (na * nb))
    }

    /// Cosine similarity clamped to `[0, 1]`.
    pub fn similarity(&self, a: &Label, b: &Label) -> Result<f64> {
        Ok(self.cosine(a, b)?.clamp(0.0, 1.0))
    }
}

/// `1 - cosine distance` between the label vectors, clamped to `[0, 1]`.
pub fn conceptual_similarity(a: &Label, b: &Label, store: &EmbeddingStore) -> Result<f64> {
    store.similarity(a, b)
}

fn usable(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.iter().any(|&x| x != 0.0)
}

/// Loads vectors for `vocabulary`, failing with [`Error::MissingToken`] if any
/// label cannot be resolved.
pub fn load_embeddings<'a>(
    path: &Path,
    vocabulary: impl IntoIterator<Item = &'a Label>,
) -> Result<EmbeddingStore> {
    let store = load_embeddings_partial(path, vocabulary)?;
    if store.missing.is_empty() {
        Ok(store)
    } else {
        Err(Error::MissingToken(
            store.missing.iter().map(Label::to_string).collect(),
        ))
    }
}

/// Like [`load_embeddings`] but records unresolved labels in
/// [`EmbeddingStore::missing`] instead of failing.
pub fn load_embeddings_partial<'a>(
    path: &Path,
    vocabulary: impl IntoIterator<Item = &'a Label>,
) -> Result<EmbeddingStore> {
    let vocabulary: Vec<Label> = vocabulary.into_iter().cloned().collect();
    let mut wanted: HashSet<&str> = HashSet::new();
    for label in &vocabulary {
        wanted.insert(label.as_str());
        wanted.extend(label.words());
    }

    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut lines = BufReader::new(file).lines();
    let header = lines
        .next()
        .transpose()
        .map_err(|e| Error::format(path, e.to_string()))?
        .ok_or_else(|| Error::format(path, "empty embedding file"))?;
    let (rows, dimension) = {
        let mut it = header.split_whitespace().map(str::parse::<usize>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(n)), Some(Ok(d)), None) if d > 0 => (n, d),
            _ => return Err(Error::format(path, "missing or invalid `N D` header")),
        }
    };

    let mut found: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut count = 0usize;
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::format(path, format!("line {}: {e}", i + 2)))?;
        if line.trim().is_empty() {
            continue;
        }
        count += 1;
        let mut fields = line.split(' ').filter(|f| !f.is_empty());
        let token = fields.next().unwrap_or_default();
        if !wanted.contains(token) || found.contains_key(token) {
            continue;
        }
        let values = fields
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", i + 2)))?;
        if values.len() != dimension {
            return Err(Error::format(
                path,
                format!(
                    "line {}: expected {dimension} values, found {}",
                    i + 2,
                    values.len()
                ),
            ));
        }
        found.insert(token.to_string(), values);
    }
    if count != rows {
        return Err(Error::format(
            path,
            format!("header declares {rows} rows, found {count}"),
        ));
    }

    let mut store = EmbeddingStore {
        dimension,
        table: BTreeMap::new(),
        norms: BTreeMap::new(),
        missing: Vec::new(),
    };
    for label in vocabulary {
        match resolve(&label, &found, dimension) {
            Some(v) => store.insert(label, v),
            None => store.missing.push(label),
        }
    }
    store.missing.sort();
    store.missing.dedup();
    Ok(store)
}

fn resolve(
    label: &Label,
    found: &BTreeMap<String, Vec<f64>>,
    dimension: usize,
) -> Option<Vec<f64>> {
    if let Some(v) = found.get(label.as_str()).filter(|v| usable(v)) {
        return Some(v.clone());
    }
    let parts: Vec<&str> = label.words().collect();
    if parts.len() < 2 {
        return None;
    }
    let mut mean = vec![0.0; dimension];
    for part in &parts {
        let v = found.get(*part)?;
        mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= parts.len() as f64);
    usable(&mean).then_some(mean)
}

/// Writes vectors in the text format read by [`load_embeddings`].
pub fn write_embeddings<'a>(
    path: &Path,
    dimension: usize,
    rows: impl ExactSizeIterator<Item = (&'a str, &'a [f64])>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "{} {dimension}", rows.len())?;
    for (token, v) in rows {
        if v.len() != dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                found: v.len(),
            });
        }
        write!(out, "{token}")?;
        for x in v {
            write!(out, " {x}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
