//! Visual feature vectors.
//!
//! Two sources are supported: the built-in stroke extractor (48 dimensions)
//! and vectors imported from a text file, e.g. exported from an external
//! neural sketch encoder. Either way, every vector is unit L2 length.
//!
//! Built-in layout:
//!
//! | dims   | feature                                                        |
//! |--------|----------------------------------------------------------------|
//! | 0..36  | 6×6 ink-density grid (row-major, fraction of total ink)        |
//! | 36..44 | segment direction histogram, 45° bins centred on 0°, 45°, ...  |
//! | 44     | stroke count / 16, capped at 1                                 |
//! | 45     | total path length / 2048, capped at 1                          |
//! | 46     | bounding-box aspect ratio min(w, h) / max(w, h)                |
//! | 47     | start-to-end distance / path length                            |
//!
//! Directions are measured in canvas coordinates (y grows downwards).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::CorpusManifest;
use crate::sketch::{normalize, Point, Sketch};

pub const GRID_SIZE: usize = 6;
pub const DIRECTION_BINS: usize = 8;
pub const BUILTIN_DIMENSION: usize = GRID_SIZE * GRID_SIZE + DIRECTION_BINS + 4;
pub const BUILTIN_VERSION: &str = "stroke-grid-v1";
pub const IMPORTED_VERSION: &str = "imported-v1";

const CANVAS_SIZE: f64 = 256.0;
const STROKE_COUNT_SCALE: f64 = 16.0;
const PATH_LENGTH_SCALE: f64 = 2048.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub sketch_ref: String,
    pub values: Vec<f64>,
}

impl FeatureVector {
    /// Wraps raw values without normalizing. All entries must be finite.
    pub fn new(sketch_ref: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidSketch(format!(
                "non-finite feature value {bad}"
            )));
        }
        Ok(Self {
            sketch_ref: sketch_ref.into(),
            values,
        })
    }

    /// Wraps and scales to unit L2 length. Fails on an all-zero vector.
    pub fn unit(sketch_ref: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let mut fv = Self::new(sketch_ref, values)?;
        let norm = l2_norm(&fv.values);
        if norm == 0.0 {
            return Err(Error::InvalidSketch("zero feature vector".into()));
        }
        fv.values.iter_mut().for_each(|v| *v /= norm);
        Ok(fv)
    }

    pub fn dimension(&self) -> usize {
        self.values.len()
    }
}

pub fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtractorKind {
    Builtin,
    Imported,
}

impl fmt::Display for ExtractorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExtractorKind::Builtin => "builtin",
            ExtractorKind::Imported => "imported",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorSpec {
    pub kind: ExtractorKind,
    pub dimension: usize,
    pub version: String,
}

impl ExtractorSpec {
    pub fn builtin() -> Self {
        Self {
            kind: ExtractorKind::Builtin,
            dimension: BUILTIN_DIMENSION,
            version: BUILTIN_VERSION.to_string(),
        }
    }

    pub fn imported(dimension: usize) -> Self {
        Self {
            kind: ExtractorKind::Imported,
            dimension,
            version: IMPORTED_VERSION.to_string(),
        }
    }
}

/// Built-in extractor. The sketch is normalized first, so the result does not
/// depend on where or how large the drawing was.
pub fn extract(sketch: &Sketch) -> Result<FeatureVector> {
    let sketch = normalize(sketch)?;
    let mut values = vec![0.0; BUILTIN_DIMENSION];
    let (grid, rest) = values.split_at_mut(GRID_SIZE * GRID_SIZE);
    let (directions, scalars) = rest.split_at_mut(DIRECTION_BINS);

    let mut ink = 0.0;
    let mut path_length = 0.0;
    for stroke in sketch.strokes() {
        let pts = stroke.points();
        if pts.len() == 1 {
            grid[cell(pts[0].x as f64, pts[0].y as f64)] += 1.0;
            ink += 1.0;
            continue;
        }
        for w in pts.windows(2) {
            let (dx, dy) = (f64::from(w[1].x - w[0].x), f64::from(w[1].y - w[0].y));
            let len = dx.hypot(dy);
            path_length += len;
            directions[direction_bin(dx, dy)] += len;

            // spread the segment's length over unit-ish pieces
            let pieces = len.ceil().max(1.0) as usize;
            let piece = len / pieces as f64;
            for i in 0..pieces {
                let t = (i as f64 + 0.5) / pieces as f64;
                let x = f64::from(w[0].x) + t * dx;
                let y = f64::from(w[0].y) + t * dy;
                grid[cell(x, y)] += piece;
            }
            ink += len;
        }
    }
    if ink > 0.0 {
        grid.iter_mut().for_each(|g| *g /= ink);
    }
    if path_length > 0.0 {
        directions.iter_mut().for_each(|d| *d /= path_length);
    }

    let (w, h) = extent(sketch.points());
    let first = sketch.strokes()[0].points()[0];
    let last = *sketch
        .strokes()
        .last()
        .and_then(|s| s.points().last())
        .unwrap_or(&first);
    let chord = f64::from(last.x - first.x).hypot(f64::from(last.y - first.y));
    scalars[0] = (sketch.strokes().len() as f64 / STROKE_COUNT_SCALE).min(1.0);
    scalars[1] = (path_length / PATH_LENGTH_SCALE).min(1.0);
    scalars[2] = w.min(h) / w.max(h);
    scalars[3] = if path_length > 0.0 {
        chord / path_length
    } else {
        0.0
    };

    FeatureVector::unit(sketch.source_id(), values)
}

fn cell(x: f64, y: f64) -> usize {
    let idx = |v: f64| ((v / CANVAS_SIZE * GRID_SIZE as f64).floor() as usize).min(GRID_SIZE - 1);
    idx(y) * GRID_SIZE + idx(x)
}

fn direction_bin(dx: f64, dy: f64) -> usize {
    let degrees = dy.atan2(dx).to_degrees();
    ((degrees / 45.0).round() as i64).rem_euclid(DIRECTION_BINS as i64) as usize
}

fn extent<'a>(points: impl Iterator<Item = &'a Point>) -> (f64, f64) {
    let (mut x0, mut x1, mut y0, mut y1) = (i32::MAX, i32::MIN, i32::MAX, i32::MIN);
    for p in points {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    (f64::from(x1 - x0), f64::from(y1 - y0))
}

/// Vectors loaded from an interchange file.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportedVectors {
    pub dimension: usize,
    pub vectors: BTreeMap<String, FeatureVector>,
}

impl ImportedVectors {
    pub fn spec(&self) -> ExtractorSpec {
        ExtractorSpec::imported(self.dimension)
    }

    pub fn get(&self, source_id: &str) -> Option<&FeatureVector> {
        self.vectors.get(source_id)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Reads a vector interchange file: a `D N` header, then `N` rows of
/// `source_id v1 ... vD`. Rows are re-normalized to unit length.
pub fn import_vectors(path: &Path, manifest: &CorpusManifest) -> Result<ImportedVectors> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        std::io::ErrorKind::InvalidData => Error::format(path, "file is not UTF-8"),
        _ => Error::Io(e),
    })?;
    let mut lines = text.lines().enumerate();
    let (dimension, rows) = lines
        .next()
        .and_then(|(_, header)| {
            let mut it = header.split_whitespace().map(str::parse::<usize>);
            match (it.next(), it.next(), it.next()) {
                (Some(Ok(d)), Some(Ok(n)), None) if d > 0 => Some((d, n)),
                _ => None,
            }
        })
        .ok_or_else(|| Error::format(path, "missing or invalid `D N` header"))?;

    let mut vectors = BTreeMap::new();
    for (line_no, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let id = fields.next().unwrap_or_default().to_string();
        let values = fields
            .map(str::parse::<f64>)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", line_no + 1)))?;
        if values.len() != dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                found: values.len(),
            });
        }
        if !manifest.contains_sketch(&id) {
            return Err(Error::UnknownSketchRef(id));
        }
        let fv = FeatureVector::unit(id.clone(), values)
            .map_err(|e| Error::format(path, format!("line {}: {e}", line_no + 1)))?;
        if vectors.insert(id.clone(), fv).is_some() {
            return Err(Error::format(path, format!("duplicate vector for {id}")));
        }
    }
    if vectors.len() != rows {
        return Err(Error::format(
            path,
            format!("header declares {rows} rows, found {}", vectors.len()),
        ));
    }
    Ok(ImportedVectors { dimension, vectors })
}

/// Writes vectors in the interchange format read by [`import_vectors`].
pub fn write_vectors<'a>(
    path: &Path,
    dimension: usize,
    vectors: impl ExactSizeIterator<Item = (&'a str, &'a [f64])>,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(out, "{dimension} {}", vectors.len())?;
    for (id, values) in vectors {
        if values.len() != dimension {
            return Err(Error::DimensionMismatch {
                expected: dimension,
                found: values.len(),
            });
        }
        write!(out, "{id}")?;
        for v in values {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}
