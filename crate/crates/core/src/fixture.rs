//! Synthetic corpus with planted structure, for tests and demos.
//!
//! Twelve categories form three groups of four. Within a group each category
//! sits at a position on a line (0, 1, 3, 7), so every category has a
//! distinct nearest, middle and farthest sibling. Groups are far apart.
//!
//! Each category's imported vectors form ten tight blobs of equal size:
//! seven "core" blobs close to the category centre and three outlier blobs
//! far off on private axes. Cluster distances between siblings are then
//! governed by the position gap, and the nearest 20 foreign clusters of any
//! cluster are exactly 7 core clusters of the nearest sibling, 7 of the
//! middle one and 6 of the farthest. Label embeddings put each group on its
//! own plane at an angle proportional to position, so conceptual similarity
//! falls with the same gap.
//!
//! Stroke geometry is a per-category shape family with jitter, so the
//! built-in extractor also has something to cluster.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::embeddings::write_embeddings;
use crate::error::Result;
use crate::features::write_vectors;
use crate::ingest::Corpus;
use crate::sketch::{Label, Point, Sketch, Stroke, CANVAS_MAX};

pub const GROUPS: [[&str; 4]; 3] = [
    ["chair", "bench", "couch", "bed"],
    ["streetlight", "lantern", "candle", "campfire"],
    ["bridge", "river", "sailboat", "aircraft_carrier"],
];
pub const POSITIONS: [f64; 4] = [0.0, 1.0, 3.0, 7.0];
pub const SKETCHES_PER_CATEGORY: usize = 200;
pub const BLOBS: usize = 10;
pub const CORE_BLOBS: usize = 7;
pub const VECTOR_DIMENSION: usize = 256;
pub const EMBEDDING_DIMENSION: usize = 8;
pub const VECTORS_FILE: &str = "vectors.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";

const GROUP_OFFSET: f64 = 10.0;
const NOISE: f64 = 0.001;
const SPHERE_RADIUS: f64 = 1000.0;
const ANGLE_STEP_DEG: f64 = 12.0;

/// Siblings of a category ordered by position gap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlantedShift {
    pub near: Label,
    pub mid: Label,
    pub far: Label,
}

pub fn labels() -> Vec<Label> {
    let mut out: Vec<Label> = GROUPS
        .iter()
        .flatten()
        .map(|s| Label::new(s).expect("fixture labels are valid"))
        .collect();
    out.sort();
    out
}

fn locate(label: &Label) -> Option<(usize, usize)> {
    GROUPS.iter().enumerate().find_map(|(g, names)| {
        names
            .iter()
            .position(|n| *n == label.as_str())
            .map(|p| (g, p))
    })
}

pub fn planted_shift(label: &Label) -> Option<PlantedShift> {
    let (g, p) = locate(label)?;
    let mut siblings: Vec<(f64, &str)> = (0..4)
        .filter(|&q| q != p)
        .map(|q| ((POSITIONS[q] - POSITIONS[p]).abs(), GROUPS[g][q]))
        .collect();
    siblings.sort_by(|a, b| a.0.total_cmp(&b.0));
    let l = |i: usize| Label::new(siblings[i].1).expect("fixture labels are valid");
    Some(PlantedShift {
        near: l(0),
        mid: l(1),
        far: l(2),
    })
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub sketches: Vec<(Label, Vec<Sketch>)>,
    /// `(source_id, vector)` rows in corpus order.
    pub vectors: Vec<(String, Vec<f64>)>,
    pub embeddings: Vec<(String, Vec<f64>)>,
}

impl Fixture {
    pub fn corpus(&self) -> Corpus {
        Corpus::from_categories(self.sketches.iter().cloned())
    }

    /// Writes `<label>.ndjson` files plus the vector and embedding files.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (label, sketches) in &self.sketches {
            let word = label.as_str().replace('_', " ");
            let mut out =
                std::io::BufWriter::new(fs::File::create(dir.join(format!("{label}.ndjson")))?);
            for s in sketches {
                let record = json!({ "word": word, "drawing": s.to_drawing() });
                writeln!(out, "{record}")?;
            }
            out.flush()?;
        }
        write_vectors(
            &dir.join(VECTORS_FILE),
            VECTOR_DIMENSION,
            self.vectors
                .iter()
                .map(|(id, v)| (id.as_str(), v.as_slice())),
        )?;
        write_embeddings(
            &dir.join(EMBEDDINGS_FILE),
            EMBEDDING_DIMENSION,
            self.embeddings
                .iter()
                .map(|(w, v)| (w.as_str(), v.as_slice())),
        )
    }
}

/// Generates the fixture with `per_category` sketches per category
/// (at least [`BLOBS`]).
pub fn generate(seed: u64, per_category: usize) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sketches = Vec::new();
    let mut vectors = Vec::new();
    for label in labels() {
        let (g, p) = locate(&label).expect("label comes from the fixture");
        let c = g * 4 + p;
        let mut items = Vec::with_capacity(per_category);
        for i in 0..per_category {
            let blob = i % BLOBS;
            let id = format!("{label}:{i}");
            items.push(sketch(&mut rng, &label, c, blob, &id));
            vectors.push((id, planted_vector(&mut rng, g, p, c, blob)));
        }
        sketches.push((label, items));
    }
    Fixture {
        sketches,
        vectors,
        embeddings: embeddings(),
    }
}

fn planted_vector(rng: &mut ChaCha8Rng, g: usize, p: usize, c: usize, blob: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..VECTOR_DIMENSION)
        .map(|_| rng.random_range(-NOISE..NOISE))
        .collect();
    v[g] += POSITIONS[p];
    v[3 + g] += GROUP_OFFSET;
    let spread_sq = if blob < CORE_BLOBS {
        0.30 + 0.03 * blob as f64
    } else {
        70.0 + 5.0 * (blob - CORE_BLOBS) as f64
    };
    v[6 + c * BLOBS + blob] += spread_sq.sqrt();
    // Put every point on one sphere so unit scaling is a uniform shrink.
    let last = VECTOR_DIMENSION - 1;
    v[last] = 0.0;
    let norm_sq: f64 = v.iter().map(|x| x * x).sum();
    v[last] = (SPHERE_RADIUS * SPHERE_RADIUS - norm_sq).sqrt();
    v
}

fn embeddings() -> Vec<(String, Vec<f64>)> {
    let mut rows = Vec::new();
    for (g, names) in GROUPS.iter().enumerate() {
        for (p, name) in names.iter().enumerate() {
            let theta = (POSITIONS[p] * ANGLE_STEP_DEG).to_radians();
            let mut v = vec![0.0; EMBEDDING_DIMENSION];
            v[2 * g] = theta.cos();
            v[2 * g + 1] = theta.sin();
            if let Some((a, b)) = name.split_once('_') {
                // Only the parts are listed; their mean is the planted vector.
                let mut plus = v.clone();
                let mut minus = v;
                plus[6] += 0.5;
                minus[6] -= 0.5;
                rows.push((a.to_string(), plus));
                rows.push((b.to_string(), minus));
            } else {
                rows.push((name.to_string(), v));
            }
        }
    }
    let mut filler = vec![0.0; EMBEDDING_DIMENSION];
    filler[7] = 1.0;
    rows.push(("doodle".to_string(), filler));
    rows
}

/// Polygon-like outline whose vertex count depends on the category and whose
/// proportions and decorations depend on the blob.
fn sketch(rng: &mut ChaCha8Rng, label: &Label, c: usize, blob: usize, id: &str) -> Sketch {
    let sides = 3 + c % 6;
    let stretch = 1.0 + 0.4 * (c / 6) as f64;
    let rotation = (blob as f64) * PI / 23.0 + c as f64 * 0.3;
    let radius = 40.0 + 5.0 * blob as f64;
    let (cx, cy) = (128.0, 128.0);
    let jitter = |rng: &mut ChaCha8Rng| rng.random_range(-3.0..3.0);

    let mut outline = Vec::with_capacity(sides + 1);
    for s in 0..=sides {
        let a = rotation + 2.0 * PI * (s % sides) as f64 / sides as f64;
        outline.push(point(
            cx + radius * stretch * a.cos() + jitter(rng),
            cy + radius * a.sin() + jitter(rng),
        ));
    }
    let mut strokes = vec![Stroke::new(outline).expect("outline has points")];
    for extra in 0..(blob % 3) {
        let y = cy - 20.0 + 20.0 * extra as f64;
        strokes.push(
            Stroke::new(vec![
                point(cx - 30.0 + jitter(rng), y + jitter(rng)),
                point(cx + 30.0 + jitter(rng), y + jitter(rng)),
            ])
            .expect("segment has points"),
        );
    }
    Sketch::new(label.clone(), strokes, id).expect("fixture sketch is valid")
}

fn point(x: f64, y: f64) -> Point {
    let clamp = |v: f64| v.round().clamp(0.0, f64::from(CANVAS_MAX)) as i32;
    Point::new(clamp(x), clamp(y))
}
