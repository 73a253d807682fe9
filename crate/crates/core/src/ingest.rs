//! Corpus ingestion.
//!
//! A corpus is a directory of `<label>.ndjson` files, one sketch per line:
//!
//! ```text
//! {"word":"cat","drawing":[[[x0,x1,...],[y0,y1,...]], ...]}
//! ```
//!
//! Each stroke is a pair of parallel integer arrays on the 0–255 canvas.
//! Extra fields are ignored. Malformed lines are skipped and counted; a file
//! where more than half the lines are malformed is rejected outright.
//! Sketch ids are `<label>:<line>` with a zero-based line number.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::sketch::{normalize, Label, Sketch, CANVAS_MAX};

pub const CORPUS_EXTENSION: &str = "ndjson";

#[derive(Debug, Deserialize)]
struct Record {
    word: String,
    drawing: Vec<Vec<Vec<i64>>>,
}

/// Parses one corpus line. The sketch must survive normalization.
pub fn parse_sketch_line(line: &str, source_id: impl Into<String>) -> Result<Sketch> {
    let record: Record =
        serde_json::from_str(line).map_err(|e| Error::InvalidSketch(format!("bad record: {e}")))?;
    let label = Label::new(&record.word)?;
    let mut drawing = Vec::with_capacity(record.drawing.len());
    for stroke in &record.drawing {
        let [xs, ys] = stroke.as_slice() else {
            return Err(Error::InvalidSketch(format!(
                "stroke must be [xs, ys], got {} arrays",
                stroke.len()
            )));
        };
        drawing.push([coords(xs)?, coords(ys)?]);
    }
    let sketch = Sketch::from_drawing(label, &drawing, source_id)?;
    normalize(&sketch)?;
    Ok(sketch)
}

fn coords(values: &[i64]) -> Result<Vec<i32>> {
    values
        .iter()
        .map(|&v| {
            if (0..=i64::from(CANVAS_MAX)).contains(&v) {
                Ok(v as i32)
            } else {
                Err(Error::InvalidSketch(format!(
                    "coordinate {v} outside 0-255"
                )))
            }
        })
        .collect()
}

/// Result of reading one category file.
#[derive(Debug, Clone)]
pub struct CategoryLoad {
    pub label: Label,
    pub sketches: Vec<Sketch>,
    /// Lines examined, including skipped ones.
    pub lines_read: usize,
    pub skipped: usize,
}

/// Reads up to `limit` valid sketches from a category file.
///
/// A line whose `word` disagrees with `label` counts as malformed.
pub fn load_category(path: &Path, label: &Label, limit: Option<usize>) -> Result<CategoryLoad> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::FileNotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let reader = BufReader::new(file);
    let limit = limit.unwrap_or(usize::MAX);

    let mut sketches = Vec::new();
    let mut lines_read = 0;
    let mut skipped = 0;
    for (line_no, raw) in reader.split(b'\n').enumerate() {
        if sketches.len() >= limit {
            break;
        }
        let raw = raw?;
        lines_read += 1;
        let parsed = std::str::from_utf8(&raw)
            .map_err(|_| Error::InvalidSketch("line is not UTF-8".into()))
            .and_then(|line| parse_sketch_line(line, format!("{label}:{line_no}")));
        match parsed {
            Ok(sketch) if sketch.label() == label => sketches.push(sketch),
            _ => skipped += 1,
        }
    }

    if lines_read == 0 {
        return Err(Error::format(path, "file contains no records"));
    }
    if skipped * 2 > lines_read {
        return Err(Error::format(
            path,
            format!("{skipped} of {lines_read} lines are malformed"),
        ));
    }
    Ok(CategoryLoad {
        label: label.clone(),
        sketches,
        lines_read,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryEntry {
    pub label: Label,
    pub path: PathBuf,
    pub sketch_count: usize,
    /// Ids of every valid sketch in the file, in line order.
    pub source_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusManifest {
    pub categories: Vec<CategoryEntry>,
    pub total_sketches: usize,
}

impl CorpusManifest {
    pub fn entry(&self, label: &Label) -> Option<&CategoryEntry> {
        self.categories
            .binary_search_by(|e| e.label.cmp(label))
            .ok()
            .map(|i| &self.categories[i])
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.categories.iter().map(|e| &e.label)
    }

    pub fn contains_sketch(&self, source_id: &str) -> bool {
        let Some((label, _)) = source_id.rsplit_once(':') else {
            return false;
        };
        let Ok(label) = Label::new(label) else {
            return false;
        };
        self.entry(&label)
            .is_some_and(|e| e.source_ids.iter().any(|id| id == source_id))
    }
}

fn category_files(dir: &Path) -> Result<Vec<(Label, PathBuf)>> {
    if !dir.is_dir() {
        return Err(Error::FileNotFound(dir.to_path_buf()));
    }
    let mut found: BTreeMap<Label, PathBuf> = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if !path.is_file() || path.extension().and_then(|e| e.to_str()) != Some(CORPUS_EXTENSION) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        let Ok(label) = Label::new(stem) else {
            continue;
        };
        if found.insert(label.clone(), path).is_some() {
            return Err(Error::DuplicateLabel(label.to_string()));
        }
    }
    if found.is_empty() {
        return Err(Error::EmptyCorpus(dir.to_path_buf()));
    }
    Ok(found.into_iter().collect())
}

/// Lists the category files of a corpus directory, sorted by label.
pub fn scan_corpus(dir: &Path) -> Result<CorpusManifest> {
    let files = category_files(dir)?;
    let categories = files
        .into_par_iter()
        .map(|(label, path)| {
            let load = load_category(&path, &label, None)?;
            let source_ids = load
                .sketches
                .iter()
                .map(|s| s.source_id().to_string())
                .collect::<Vec<_>>();
            Ok(CategoryEntry {
                label,
                path,
                sketch_count: source_ids.len(),
                source_ids,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some(empty) = categories.iter().find(|e| e.sketch_count == 0) {
        return Err(Error::format(&empty.path, "no valid sketches"));
    }
    let total_sketches = categories.iter().map(|e| e.sketch_count).sum();
    Ok(CorpusManifest {
        categories,
        total_sketches,
    })
}

/// Sketches of a corpus, grouped by category and addressable by id.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    categories: BTreeMap<Label, Vec<Sketch>>,
    by_id: HashMap<String, (Label, usize)>,
}

impl Corpus {
    /// Loads every category in the manifest, keeping at most `limit` sketches each.
    pub fn load(manifest: &CorpusManifest, limit: Option<usize>) -> Result<Self> {
        let loads = manifest
            .categories
            .par_iter()
            .map(|e| load_category(&e.path, &e.label, limit))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_categories(
            loads.into_iter().map(|l| (l.label, l.sketches)),
        ))
    }

    /// Loads only the listed categories of a corpus directory.
    pub fn load_labels<'a>(
        dir: &Path,
        labels: impl IntoIterator<Item = &'a Label>,
        limit: Option<usize>,
    ) -> Result<Self> {
        let files: BTreeMap<Label, PathBuf> = category_files(dir)?.into_iter().collect();
        let wanted = labels
            .into_iter()
            .map(|l| {
                files
                    .get(l)
                    .map(|p| (l.clone(), p.clone()))
                    .ok_or_else(|| Error::UnknownCategory(l.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        let loads = wanted
            .par_iter()
            .map(|(label, path)| load_category(path, label, limit))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_categories(
            loads.into_iter().map(|l| (l.label, l.sketches)),
        ))
    }

    pub fn from_categories(items: impl IntoIterator<Item = (Label, Vec<Sketch>)>) -> Self {
        let categories: BTreeMap<Label, Vec<Sketch>> = items.into_iter().collect();
        let by_id = categories
            .iter()
            .flat_map(|(label, sketches)| {
                sketches
                    .iter()
                    .enumerate()
                    .map(move |(i, s)| (s.source_id().to_string(), (label.clone(), i)))
            })
            .collect();
        Self { categories, by_id }
    }

    pub fn get(&self, source_id: &str) -> Option<&Sketch> {
        let (label, i) = self.by_id.get(source_id)?;
        self.categories.get(label).map(|v| &v[*i])
    }

    pub fn category(&self, label: &Label) -> Option<&[Sketch]> {
        self.categories.get(label).map(Vec::as_slice)
    }

    pub fn categories(&self) -> impl Iterator<Item = (&Label, &[Sketch])> {
        self.categories.iter().map(|(l, s)| (l, s.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }
}
