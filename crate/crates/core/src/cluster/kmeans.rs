//! Lloyd's K-means with seeded k-means++ initialization.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::squared_distance;

pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<Vec<f64>>,
    /// Cluster slot per input point.
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares per slot.
    pub wcss: Vec<f64>,
    /// Total WCSS of every assignment visited, starting with the seeded one.
    pub history: Vec<f64>,
    pub iterations: usize,
}

impl KMeansResult {
    pub fn total_wcss(&self) -> f64 {
        self.wcss.iter().sum()
    }

    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

/// Clusters `points` into `k` groups.
///
/// Iterates until the assignment stops changing or [`MAX_ITERATIONS`] is hit.
/// An empty cluster takes over the point lying farthest from its own
/// centroid, so every slot ends up with at least one member. The same
/// `seed` always gives the same result.
pub fn kmeans<P: AsRef<[f64]>>(points: &[P], k: usize, seed: u64) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::TooFewPoints {
            category: String::new(),
            have: points.len(),
            k,
        });
    }
    let dim = points[0].as_ref().len();
    if let Some(p) = points.iter().find(|p| p.as_ref().len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: p.as_ref().len(),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let seeds = plus_plus_seeds(points, k, &mut rng);
    let mut centroids: Vec<Vec<f64>> = seeds.iter().map(|&i| points[i].as_ref().to_vec()).collect();

    let mut assignment = assign(points, &centroids);
    repair_empty(points, &mut assignment, k);
    centroids = means(points, &assignment, k, dim);
    let mut history = vec![wcss_per_cluster(points, &assignment, &centroids)
        .iter()
        .sum()];

    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut next = assign(points, &centroids);
        repair_empty(points, &mut next, k);
        if next == assignment {
            break;
        }
        assignment = next;
        centroids = means(points, &assignment, k, dim);
        history.push(
            wcss_per_cluster(points, &assignment, &centroids)
                .iter()
                .sum(),
        );
    }

    let wcss = wcss_per_cluster(points, &assignment, &centroids);
    Ok(KMeansResult {
        centroids,
        assignment,
        wcss,
        history,
        iterations,
    })
}

/// Distance-weighted seeding: each new seed is drawn with probability
/// proportional to its squared distance from the nearest existing seed.
fn plus_plus_seeds<P: AsRef<[f64]>>(points: &[P], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut nearest: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p.as_ref(), points[chosen[0]].as_ref()))
        .collect();
    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in nearest.iter().enumerate() {
                if d <= 0.0 {
                    continue;
                }
                acc += d;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total implies a positive weight")
        } else {
            // every point coincides with a seed already
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            nearest[i] = nearest[i].min(squared_distance(p.as_ref(), points[next].as_ref()));
        }
    }
    chosen
}

/// Nearest centroid per point; ties go to the lowest slot.
fn assign<P: AsRef<[f64]>>(points: &[P], centroids: &[Vec<f64>]) -> Vec<usize> {
    points
        .iter()
        .map(|p| nearest_slot(p.as_ref(), centroids).0)
        .collect()
}

pub(crate) fn nearest_slot(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (slot, c) in centroids.iter().enumerate() {
        let d = squared_distance(point, c);
        if d < best.1 {
            best = (slot, d);
        }
    }
    best
}

fn means<P: AsRef<[f64]>>(
    points: &[P],
    assignment: &[usize],
    k: usize,
    dim: usize,
) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &slot) in points.iter().zip(assignment) {
        counts[slot] += 1;
        for (s, v) in sums[slot].iter_mut().zip(p.as_ref()) {
            *s += v;
        }
    }
    for (sum, &count) in sums.iter_mut().zip(&counts) {
        if count > 0 {
            sum.iter_mut().for_each(|s| *s /= count as f64);
        }
    }
    sums
}

/// Moves the point farthest from its cluster mean into each empty slot.
fn repair_empty<P: AsRef<[f64]>>(points: &[P], assignment: &mut [usize], k: usize) {
    let dim = points[0].as_ref().len();
    loop {
        let mut counts = vec![0usize; k];
        assignment.iter().for_each(|&s| counts[s] += 1);
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let centroids = means(points, assignment, k, dim);
        let mut far = None;
        let mut far_dist = f64::NEG_INFINITY;
        for (i, p) in points.iter().enumerate() {
            let slot = assignment[i];
            if counts[slot] < 2 {
                continue;
            }
            let d = squared_distance(p.as_ref(), &centroids[slot]);
            if d > far_dist {
                far_dist = d;
                far = Some(i);
            }
        }
        let far = far.expect("n >= k leaves a cluster with two members");
        assignment[far] = empty;
    }
}

fn wcss_per_cluster<P: AsRef<[f64]>>(
    points: &[P],
    assignment: &[usize],
    centroids: &[Vec<f64>],
) -> Vec<f64> {
    let mut wcss = vec![0.0; centroids.len()];
    for (p, &slot) in points.iter().zip(assignment) {
        wcss[slot] += squared_distance(p.as_ref(), &centroids[slot]);
    }
    wcss
}

/// WCSS against a range of cluster counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ElbowCurve {
    pub points: Vec<(usize, f64)>,
    /// k with the largest discrete second difference of WCSS.
    pub elbow: usize,
    /// False when the range is too short for a second difference; `elbow`
    /// then holds the first k.
    pub defined: bool,
}

pub fn elbow_curve<P: AsRef<[f64]>>(
    points: &[P],
    k_range: RangeInclusive<usize>,
    seed: u64,
) -> Result<ElbowCurve> {
    let (lo, hi) = (*k_range.start(), *k_range.end());
    if lo == 0 || lo > hi || hi > points.len() {
        return Err(Error::InvalidArgument(format!(
            "k range {lo}..={hi} must lie within 1..={}",
            points.len()
        )));
    }
    let curve = k_range
        .map(|k| kmeans(points, k, seed).map(|r| (k, r.total_wcss())))
        .collect::<Result<Vec<_>>>()?;
    if curve.len() < 3 {
        return Ok(ElbowCurve {
            elbow: lo,
            defined: false,
            points: curve,
        });
    }
    let mut elbow = curve[1].0;
    let mut best = f64::NEG_INFINITY;
    for w in curve.windows(3) {
        let second = w[0].1 - 2.0 * w[1].1 + w[2].1;
        if second > best {
            best = second;
            elbow = w[1].0;
        }
    }
    Ok(ElbowCurve {
        points: curve,
        elbow,
        defined: true,
    })
}
