//! Conceptual-shift query path.
//!
//! Given a query sketch and its label:
//!
//! 1. find the query's representative cluster inside its own category;
//! 2. take the `top_n` nearest clusters of *other* categories from that
//!    cluster's distance-matrix row and min–max normalize their distances
//!    into visual similarities (nearest = 1, farthest = 0);
//! 3. pair each candidate with the label-embedding similarity between the
//!    two categories, flag whether the two similarities agree within the
//!    threshold and average them into a composite;
//! 4. split the candidates by composite rank into thirds: the most similar
//!    third is low novelty, the least similar third high novelty;
//! 5. within the requested third pick the candidate whose visual and
//!    conceptual similarities agree best, preferring ones that passed the
//!    agreement filter, and answer with that cluster's most central sketch.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::{representative_cluster, ClusterId, ClusterIndex};
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::features::{extract, ExtractorKind, BUILTIN_DIMENSION};
use crate::ingest::Corpus;
use crate::sketch::{normalize, Label, Sketch};

pub const DEFAULT_TOP_N: usize = 20;
pub const DEFAULT_THRESHOLD: f64 = 0.05;
/// Gaps this close to the threshold count as equal to it, so values such as
/// 0.35 and 0.30 are judged by their decimal gap rather than binary rounding.
pub const FILTER_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Novelty {
    Low,
    Intermediate,
    High,
}

impl Novelty {
    pub const ALL: [Novelty; 3] = [Novelty::Low, Novelty::Intermediate, Novelty::High];

    pub fn as_str(self) -> &'static str {
        match self {
            Novelty::Low => "low",
            Novelty::Intermediate => "intermediate",
            Novelty::High => "high",
        }
    }
}

impl fmt::Display for Novelty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Novelty {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "low" => Ok(Novelty::Low),
            "intermediate" => Ok(Novelty::Intermediate),
            "high" => Ok(Novelty::High),
            other => Err(Error::InvalidArgument(format!(
                "unknown novelty level {other:?}"
            ))),
        }
    }
}

/// One row of the visual ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualCandidate {
    pub target: ClusterId,
    pub raw_distance: f64,
    pub visual_sim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftCandidate {
    pub target: ClusterId,
    pub raw_distance: f64,
    pub visual_sim: f64,
    /// Clamped to `[0, 1]`.
    pub conceptual_sim: f64,
    /// Cosine similarity before clamping.
    pub raw_conceptual: f64,
    pub composite: f64,
    pub passed_filter: bool,
    /// Set by [`classify_novelty`].
    pub novelty: Option<Novelty>,
}

impl ShiftCandidate {
    /// Combines a visual and a conceptual similarity.
    pub fn fused(
        visual: &VisualCandidate,
        conceptual: f64,
        raw_conceptual: f64,
        threshold: f64,
    ) -> Self {
        Self {
            target: visual.target.clone(),
            raw_distance: visual.raw_distance,
            visual_sim: visual.visual_sim,
            conceptual_sim: conceptual,
            raw_conceptual,
            composite: (visual.visual_sim + conceptual) / 2.0,
            passed_filter: (visual.visual_sim - conceptual).abs() < threshold - FILTER_EPSILON,
            novelty: None,
        }
    }

    pub fn gap(&self) -> f64 {
        (self.visual_sim - self.conceptual_sim).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftResponse {
    pub source_cluster: ClusterId,
    pub candidate: ShiftCandidate,
    pub label: Label,
    pub sketch: Sketch,
    pub fallback_used: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftConfig {
    pub top_n: usize,
    pub threshold: f64,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        Self {
            top_n: DEFAULT_TOP_N,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Min–max maps distances to similarities: the smallest distance becomes 1,
/// the largest 0. If all distances are equal every similarity is 1.
pub fn min_max_similarity(distances: &[f64]) -> Vec<f64> {
    let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let max = distances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    distances
        .iter()
        .map(|&d| {
            if range > 0.0 {
                1.0 - (d - min) / range
            } else {
                1.0
            }
        })
        .collect()
}

/// Nearest `top_n` cross-category clusters to the query's representative
/// cluster, most similar first.
pub fn rank_visual(
    query: &[f64],
    source: &Label,
    index: &ClusterIndex,
    top_n: usize,
) -> Result<(ClusterId, Vec<VisualCandidate>)> {
    if top_n == 0 {
        return Err(Error::InvalidArgument("top_n must be at least 1".into()));
    }
    let rep = representative_cluster(query, source, &index.model)?;
    let row = index
        .model
        .position(&rep)
        .expect("representative is in the model");
    let mut ranked: Vec<(&ClusterId, f64)> = index
        .matrix
        .row(row)
        .filter(|(id, _)| id.category != *source)
        .collect();
    if ranked.len() < top_n {
        return Err(Error::InsufficientCandidates {
            need: top_n,
            have: ranked.len(),
        });
    }
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(top_n);

    let distances: Vec<f64> = ranked.iter().map(|(_, d)| *d).collect();
    let mut out: Vec<VisualCandidate> = ranked
        .into_iter()
        .zip(min_max_similarity(&distances))
        .map(|((id, d), sim)| VisualCandidate {
            target: id.clone(),
            raw_distance: d,
            visual_sim: sim,
        })
        .collect();
    out.sort_by(|a, b| {
        b.visual_sim
            .total_cmp(&a.visual_sim)
            .then_with(|| a.target.cmp(&b.target))
    });
    Ok((rep, out))
}

/// Attaches conceptual similarity to each visual candidate.
pub fn fuse(
    candidates: &[VisualCandidate],
    store: &EmbeddingStore,
    source: &Label,
    threshold: f64,
) -> Result<Vec<ShiftCandidate>> {
    candidates
        .iter()
        .map(|c| {
            let raw = store.cosine(source, &c.target.category)?;
            Ok(ShiftCandidate::fused(
                c,
                raw.clamp(0.0, 1.0),
                raw,
                threshold,
            ))
        })
        .collect()
}

/// Bucket sizes for `n` candidates: thirds, extra members going to the
/// more similar buckets first (20 → 7/7/6).
pub fn tertile_sizes(n: usize) -> [usize; 3] {
    let (base, rem) = (n / 3, n % 3);
    [
        base + usize::from(rem > 0),
        base + usize::from(rem > 1),
        base,
    ]
}

/// Sorts by composite (descending, ties by target) and labels the thirds
/// low, intermediate and high novelty.
pub fn classify_novelty(mut candidates: Vec<ShiftCandidate>) -> Result<Vec<ShiftCandidate>> {
    if candidates.len() < 3 {
        return Err(Error::InsufficientCandidates {
            need: 3,
            have: candidates.len(),
        });
    }
    candidates.sort_by(|a, b| {
        b.composite
            .total_cmp(&a.composite)
            .then_with(|| a.target.cmp(&b.target))
    });
    let [low, mid, _] = tertile_sizes(candidates.len());
    for (i, c) in candidates.iter_mut().enumerate() {
        c.novelty = Some(if i < low {
            Novelty::Low
        } else if i < low + mid {
            Novelty::Intermediate
        } else {
            Novelty::High
        });
    }
    Ok(candidates)
}

/// Best candidate of the requested bucket, and whether the agreement filter
/// had to be relaxed to find one.
pub fn pick_candidate(
    candidates: &[ShiftCandidate],
    requested: Novelty,
) -> Result<(&ShiftCandidate, bool)> {
    let bucket: Vec<&ShiftCandidate> = candidates
        .iter()
        .filter(|c| c.novelty == Some(requested))
        .collect();
    if let Some(c) = closest(bucket.iter().copied().filter(|c| c.passed_filter)) {
        return Ok((c, false));
    }
    closest(bucket.iter().copied())
        .map(|c| (c, true))
        .ok_or(Error::EmptyBucket(requested.as_str()))
}

fn closest<'a>(pool: impl Iterator<Item = &'a ShiftCandidate>) -> Option<&'a ShiftCandidate> {
    pool.min_by(|a, b| {
        a.gap()
            .total_cmp(&b.gap())
            .then_with(|| a.target.cmp(&b.target))
    })
}

/// Resolves the chosen candidate to a concrete response sketch.
pub fn select_response(
    source_cluster: ClusterId,
    candidates: &[ShiftCandidate],
    requested: Novelty,
    index: &ClusterIndex,
    corpus: &Corpus,
) -> Result<ShiftResponse> {
    let (candidate, fallback_used) = pick_candidate(candidates, requested)?;
    let target = &candidate.target;
    let member = index
        .model
        .category(&target.category)
        .and_then(|c| c.representative(target.slot))
        .ok_or_else(|| Error::UnknownCategory(target.category.to_string()))?;
    let sketch = corpus
        .get(&member.source_id)
        .ok_or_else(|| Error::UnknownSketchRef(member.source_id.clone()))?
        .clone();
    Ok(ShiftResponse {
        source_cluster,
        candidate: candidate.clone(),
        label: target.category.clone(),
        sketch,
        fallback_used,
    })
}

/// Loaded artifacts for answering queries. Immutable; share freely.
#[derive(Debug)]
pub struct ShiftEngine {
    index: ClusterIndex,
    store: EmbeddingStore,
    corpus: Corpus,
    config: ShiftConfig,
    member_lookup: HashMap<String, (usize, usize)>,
}

impl ShiftEngine {
    pub fn new(
        index: ClusterIndex,
        store: EmbeddingStore,
        corpus: Corpus,
        config: ShiftConfig,
    ) -> Result<Self> {
        store.require(index.labels())?;
        if index.extractor.kind == ExtractorKind::Builtin && index.dimension() != BUILTIN_DIMENSION
        {
            return Err(Error::DimensionMismatch {
                expected: BUILTIN_DIMENSION,
                found: index.dimension(),
            });
        }
        for cat in &index.model.categories {
            for slot in 0..index.k() {
                let rep = cat.representative(slot).expect("slot within k");
                if corpus.get(&rep.source_id).is_none() {
                    return Err(Error::UnknownSketchRef(rep.source_id.clone()));
                }
            }
        }
        let member_lookup = index
            .model
            .categories
            .iter()
            .enumerate()
            .flat_map(|(c, cat)| {
                cat.members
                    .iter()
                    .enumerate()
                    .map(move |(m, member)| (member.source_id.clone(), (c, m)))
            })
            .collect();
        Ok(Self {
            index,
            store,
            corpus,
            config,
            member_lookup,
        })
    }

    pub fn index(&self) -> &ClusterIndex {
        &self.index
    }

    pub fn store(&self) -> &EmbeddingStore {
        &self.store
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn config(&self) -> ShiftConfig {
        self.config
    }

    /// Feature vector for a query sketch.
    ///
    /// With the built-in extractor the sketch is featurized directly. With
    /// imported vectors the sketch must be a corpus sketch: it is found by
    /// source id, or else by identical normalized geometry within its category.
    pub fn query_vector(&self, sketch: &Sketch) -> Result<Vec<f64>> {
        match self.index.extractor.kind {
            ExtractorKind::Builtin => Ok(extract(sketch)?.values),
            ExtractorKind::Imported => {
                if let Some(v) = self.member_vector(sketch.source_id()) {
                    return Ok(v.to_vec());
                }
                let wanted = normalize(sketch)?;
                let found = self
                    .corpus
                    .category(sketch.label())
                    .into_iter()
                    .flatten()
                    .filter(|s| normalize(s).is_ok_and(|n| n.strokes() == wanted.strokes()))
                    .find_map(|s| self.member_vector(s.source_id()));
                found
                    .map(<[f64]>::to_vec)
                    .ok_or_else(|| Error::MissingVector(sketch.source_id().to_string()))
            }
        }
    }

    fn member_vector(&self, source_id: &str) -> Option<&[f64]> {
        let &(c, m) = self.member_lookup.get(source_id)?;
        Some(&self.index.model.categories[c].members[m].vector)
    }

    /// Ranked, fused and classified candidates for a query vector.
    pub fn candidates_for_vector(
        &self,
        query: &[f64],
        label: &Label,
    ) -> Result<(ClusterId, Vec<ShiftCandidate>)> {
        let (rep, visual) = rank_visual(query, label, &self.index, self.config.top_n)?;
        let fused = fuse(&visual, &self.store, label, self.config.threshold)?;
        Ok((rep, classify_novelty(fused)?))
    }

    pub fn shift_for_vector(
        &self,
        query: &[f64],
        label: &Label,
        requested: Novelty,
    ) -> Result<ShiftResponse> {
        let (rep, candidates) = self.candidates_for_vector(query, label)?;
        select_response(rep, &candidates, requested, &self.index, &self.corpus)
    }

    /// Full query path from a labelled sketch.
    pub fn conceptual_shift(&self, sketch: &Sketch, requested: Novelty) -> Result<ShiftResponse> {
        if !self.index.contains(sketch.label()) {
            return Err(Error::UnknownCategory(sketch.label().to_string()));
        }
        let query = self.query_vector(sketch)?;
        self.shift_for_vector(&query, sketch.label(), requested)
    }
}

/// One-shot query with default settings.
pub fn conceptual_shift(
    sketch: &Sketch,
    requested: Novelty,
    index: &ClusterIndex,
    store: &EmbeddingStore,
    corpus: &Corpus,
) -> Result<ShiftResponse> {
    if !index.contains(sketch.label()) {
        return Err(Error::UnknownCategory(sketch.label().to_string()));
    }
    let query = match index.extractor.kind {
        ExtractorKind::Builtin => extract(sketch)?.values,
        ExtractorKind::Imported => {
            let engine = ShiftEngine::new(
                index.clone(),
                store.clone(),
                corpus.clone(),
                ShiftConfig::default(),
            )?;
            return engine.conceptual_shift(sketch, requested);
        }
    };
    let config = ShiftConfig::default();
    let (rep, visual) = rank_visual(&query, sketch.label(), index, config.top_n)?;
    let fused = fuse(&visual, store, sketch.label(), config.threshold)?;
    let classified = classify_novelty(fused)?;
    select_response(rep, &classified, requested, index, corpus)
}
