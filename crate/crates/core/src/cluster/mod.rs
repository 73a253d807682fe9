//! Visual cluster index.
//!
//! Every category's feature vectors are split into `k` K-means clusters. The
//! centroids of all categories are then compared pairwise into one square
//! distance matrix whose rows and columns are [`ClusterId`]s in
//! `(category, slot)` order. Pairs within a single category are masked out,
//! since a conceptual shift always crosses categories.

mod kmeans;
mod persist;

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{
    euclidean, extract, squared_distance, ExtractorSpec, FeatureVector, ImportedVectors,
};
use crate::ingest::Corpus;
use crate::sketch::Label;

pub use kmeans::{elbow_curve, kmeans, ElbowCurve, KMeansResult, MAX_ITERATIONS};
pub use persist::{decode_index, encode_index, load_index, save_index, FORMAT_VERSION, MAGIC};

pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClusterId {
    pub category: Label,
    pub slot: usize,
}

impl ClusterId {
    pub fn new(category: Label, slot: usize) -> Self {
        Self { category, slot }
    }
}

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.category, self.slot)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub source_id: String,
    pub slot: usize,
    pub vector: Vec<f64>,
}

/// Clusters of one category.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryClusters {
    pub label: Label,
    pub centroids: Vec<Vec<f64>>,
    pub wcss: Vec<f64>,
    /// Members in input order.
    pub members: Vec<Member>,
    /// Per slot, index into `members` of the member nearest the centroid.
    pub representatives: Vec<usize>,
    /// Total WCSS after each Lloyd iteration of the build.
    pub history: Vec<f64>,
}

impl CategoryClusters {
    pub fn representative(&self, slot: usize) -> Option<&Member> {
        self.representatives.get(slot).map(|&i| &self.members[i])
    }

    pub fn member_vectors(&self) -> Vec<&[f64]> {
        self.members.iter().map(|m| m.vector.as_slice()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterModel {
    pub k: usize,
    pub dimension: usize,
    /// Sorted by label.
    pub categories: Vec<CategoryClusters>,
}

impl ClusterModel {
    pub fn category_index(&self, label: &Label) -> Option<usize> {
        self.categories
            .binary_search_by(|c| c.label.cmp(label))
            .ok()
    }

    pub fn category(&self, label: &Label) -> Option<&CategoryClusters> {
        self.category_index(label).map(|i| &self.categories[i])
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.categories.iter().map(|c| &c.label)
    }

    pub fn centroid(&self, id: &ClusterId) -> Option<&[f64]> {
        self.category(&id.category)?
            .centroids
            .get(id.slot)
            .map(Vec::as_slice)
    }

    /// Row/column of `id` in the distance matrix.
    pub fn position(&self, id: &ClusterId) -> Option<usize> {
        let c = self.category_index(&id.category)?;
        (id.slot < self.k).then_some(c * self.k + id.slot)
    }

    pub fn cluster_ids(&self) -> Vec<ClusterId> {
        self.categories
            .iter()
            .flat_map(|c| (0..self.k).map(move |slot| ClusterId::new(c.label.clone(), slot)))
            .collect()
    }
}

/// Symmetric matrix of centroid distances. Same-category entries other than
/// the diagonal are masked and stored as NaN.
#[derive(Debug, Clone)]
pub struct DistanceMatrix {
    labels: Vec<ClusterId>,
    values: Vec<f64>,
}

impl PartialEq for DistanceMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.labels == other.labels
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl DistanceMatrix {
    pub fn from_model(model: &ClusterModel) -> Self {
        let labels = model.cluster_ids();
        let centroids: Vec<&[f64]> = model
            .categories
            .iter()
            .flat_map(|c| c.centroids.iter().map(Vec::as_slice))
            .collect();
        let n = labels.len();
        let upper: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                ((i + 1)..n)
                    .map(|j| {
                        if labels[i].category == labels[j].category {
                            f64::NAN
                        } else {
                            euclidean(centroids[i], centroids[j])
                        }
                    })
                    .collect()
            })
            .collect();
        let mut values = vec![0.0; n * n];
        for (i, row) in upper.iter().enumerate() {
            for (off, &d) in row.iter().enumerate() {
                let j = i + 1 + off;
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Self { labels, values }
    }

    pub(crate) fn from_parts(labels: Vec<ClusterId>, values: Vec<f64>) -> Self {
        debug_assert_eq!(labels.len() * labels.len(), values.len());
        Self { labels, values }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[ClusterId] {
        &self.labels
    }

    pub(crate) fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_masked(&self, i: usize, j: usize) -> bool {
        i != j && self.labels[i].category == self.labels[j].category
    }

    /// Distance between clusters `i` and `j`, `None` when masked.
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        if self.is_masked(i, j) {
            None
        } else {
            Some(self.values[i * self.len() + j])
        }
    }

    /// Unmasked entries of row `i`, excluding the diagonal.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (&ClusterId, f64)> + '_ {
        (0..self.len())
            .filter(move |&j| j != i)
            .filter_map(move |j| self.get(i, j).map(|d| (&self.labels[j], d)))
    }
}

/// A built visual index plus the settings that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterIndex {
    pub extractor: ExtractorSpec,
    pub seed: u64,
    pub limit_per_category: Option<u64>,
    pub model: ClusterModel,
    pub matrix: DistanceMatrix,
}

impl ClusterIndex {
    pub fn k(&self) -> usize {
        self.model.k
    }

    pub fn dimension(&self) -> usize {
        self.model.dimension
    }

    pub fn labels(&self) -> impl Iterator<Item = &Label> {
        self.model.labels()
    }

    pub fn contains(&self, label: &Label) -> bool {
        self.model.category_index(label).is_some()
    }
}

/// Feature vectors of one category, as input to [`build_index`].
#[derive(Debug, Clone)]
pub struct CategoryVectors {
    pub label: Label,
    pub vectors: Vec<FeatureVector>,
}

/// Feature vectors for every sketch of a corpus, from the built-in extractor
/// or, when given, from imported vectors keyed by sketch id.
pub fn corpus_vectors(
    corpus: &Corpus,
    imported: Option<&ImportedVectors>,
) -> Result<(ExtractorSpec, Vec<CategoryVectors>)> {
    let spec = imported.map_or_else(ExtractorSpec::builtin, ImportedVectors::spec);
    let categories = corpus
        .categories()
        .map(|(label, sketches)| {
            let vectors = sketches
                .par_iter()
                .map(|s| match imported {
                    None => extract(s),
                    Some(iv) => iv
                        .get(s.source_id())
                        .cloned()
                        .ok_or_else(|| Error::MissingVector(s.source_id().to_string())),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(CategoryVectors {
                label: label.clone(),
                vectors,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((spec, categories))
}

/// Per-category K-means seed, independent of category order and thread count.
pub fn category_seed(seed: u64, label: &Label) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_str().bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    // splitmix64 finalizer
    let mut z = seed ^ h;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn build_index(
    categories: Vec<CategoryVectors>,
    k: usize,
    seed: u64,
    extractor: ExtractorSpec,
    limit_per_category: Option<u64>,
) -> Result<ClusterIndex> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let mut seen = BTreeSet::new();
    for cat in &categories {
        if !seen.insert(cat.label.clone()) {
            return Err(Error::DuplicateLabel(cat.label.to_string()));
        }
        if cat.vectors.len() < k {
            return Err(Error::TooFewPoints {
                category: cat.label.to_string(),
                have: cat.vectors.len(),
                k,
            });
        }
        if let Some(v) = cat
            .vectors
            .iter()
            .find(|v| v.dimension() != extractor.dimension)
        {
            return Err(Error::DimensionMismatch {
                expected: extractor.dimension,
                found: v.dimension(),
            });
        }
    }
    if categories.is_empty() {
        return Err(Error::InvalidArgument("no categories to index".into()));
    }

    let mut clustered = categories
        .into_par_iter()
        .map(|cat| cluster_category(cat, k, seed))
        .collect::<Result<Vec<_>>>()?;
    clustered.sort_by(|a, b| a.label.cmp(&b.label));

    let model = ClusterModel {
        k,
        dimension: extractor.dimension,
        categories: clustered,
    };
    let matrix = DistanceMatrix::from_model(&model);
    Ok(ClusterIndex {
        extractor,
        seed,
        limit_per_category,
        model,
        matrix,
    })
}

fn cluster_category(cat: CategoryVectors, k: usize, seed: u64) -> Result<CategoryClusters> {
    let points: Vec<&[f64]> = cat.vectors.iter().map(|v| v.values.as_slice()).collect();
    let result = kmeans(&points, k, category_seed(seed, &cat.label)).map_err(|e| match e {
        Error::TooFewPoints { have, k, .. } => Error::TooFewPoints {
            category: cat.label.to_string(),
            have,
            k,
        },
        other => other,
    })?;
    let members: Vec<Member> = cat
        .vectors
        .into_iter()
        .zip(&result.assignment)
        .map(|(v, &slot)| Member {
            source_id: v.sketch_ref,
            slot,
            vector: v.values,
        })
        .collect();
    let representatives = representatives(&members, &result.centroids);
    Ok(CategoryClusters {
        label: cat.label,
        centroids: result.centroids,
        wcss: result.wcss,
        members,
        representatives,
        history: result.history,
    })
}

/// Member nearest each centroid, ties broken by smaller source id.
fn representatives(members: &[Member], centroids: &[Vec<f64>]) -> Vec<usize> {
    centroids
        .iter()
        .enumerate()
        .map(|(slot, c)| {
            members
                .iter()
                .enumerate()
                .filter(|(_, m)| m.slot == slot)
                .map(|(i, m)| (squared_distance(&m.vector, c), &m.source_id, i))
                .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
                .map(|(_, _, i)| i)
                .expect("k-means leaves no slot empty")
        })
        .collect()
}

/// Cluster of `label` whose centroid is nearest `query`; ties go to the lowest slot.
pub fn representative_cluster(
    query: &[f64],
    label: &Label,
    model: &ClusterModel,
) -> Result<ClusterId> {
    let cat = model
        .category(label)
        .ok_or_else(|| Error::UnknownCategory(label.to_string()))?;
    if query.len() != model.dimension {
        return Err(Error::DimensionMismatch {
            expected: model.dimension,
            found: query.len(),
        });
    }
    let (slot, _) = kmeans::nearest_slot(query, &cat.centroids);
    Ok(ClusterId::new(label.clone(), slot))
}
