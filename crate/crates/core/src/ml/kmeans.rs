use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::MlError;
use crate::rng::DetRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub centroids: Array2<f64>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every Lloyd update.
    pub inertia_history: Vec<f64>,
}

impl KMeansResult {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.nrows()];
        for &a in &self.assignment {
            sizes[a] += 1;
        }
        sizes
    }
}

fn sq_dist(a: ndarray::ArrayView1<'_, f64>, b: ndarray::ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(u, v)| (u - v) * (u - v)).sum()
}

fn nearest(p: ndarray::ArrayView1<'_, f64>, centroids: &Array2<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, row) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(p, row);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn inertia(points: &ArrayView2<'_, f64>, centroids: &Array2<f64>, assignment: &[usize]) -> f64 {
    points
        .rows()
        .into_iter()
        .zip(assignment)
        .map(|(p, &a)| sq_dist(p, centroids.row(a)))
        .sum()
}

fn seed_plus_plus(points: &ArrayView2<'_, f64>, k: usize, rng: &mut DetRng) -> Array2<f64> {
    let n = points.nrows();
    let mut centroids = Array2::zeros((k, points.ncols()));
    centroids.row_mut(0).assign(&points.row(rng.index(n)));
    let mut d2: Vec<f64> = points.rows().into_iter().map(|p| sq_dist(p, centroids.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target && *d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.index(n)
        };
        centroids.row_mut(c).assign(&points.row(pick));
        for (i, p) in points.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centroids.row(c)));
        }
    }
    centroids
}

fn update_centroids(points: &ArrayView2<'_, f64>, assignment: &[usize], centroids: &mut Array2<f64>) {
    let k = centroids.nrows();
    let mut sums = Array2::<f64>::zeros(centroids.raw_dim());
    let mut counts = vec![0usize; k];
    for (p, &a) in points.rows().into_iter().zip(assignment) {
        sums.row_mut(a).scaled_add(1.0, &p);
        counts[a] += 1;
    }
    for (c, &n) in counts.iter().enumerate() {
        if n > 0 {
            centroids.row_mut(c).assign(&(&sums.row(c) / n as f64));
        }
    }
}

/// Moves the point farthest from its centroid, taken from the largest
/// cluster, into each empty cluster.
fn repair_empty(points: &ArrayView2<'_, f64>, assignment: &mut [usize], centroids: &mut Array2<f64>) -> bool {
    let k = centroids.nrows();
    let mut repaired = false;
    loop {
        let mut sizes = vec![0usize; k];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return repaired;
        };
        let largest = (0..k).max_by_key(|&c| (sizes[c], std::cmp::Reverse(c))).expect("k >= 1");
        let far = (0..assignment.len())
            .filter(|&i| assignment[i] == largest)
            .max_by(|&a, &b| {
                let da = sq_dist(points.row(a), centroids.row(largest));
                let db = sq_dist(points.row(b), centroids.row(largest));
                da.total_cmp(&db).then(b.cmp(&a))
            })
            .expect("largest cluster is non-empty");
        assignment[far] = empty;
        centroids.row_mut(empty).assign(&points.row(far));
        repaired = true;
    }
}

/// k-means with k-means++ seeding and Lloyd iterations. Points are rows.
pub fn kmeans(points: ArrayView2<'_, f64>, k: usize, seed: u64, max_iter: usize) -> Result<KMeansResult, MlError> {
    let n = points.nrows();
    if k == 0 {
        return Err(MlError::InvalidParameter("k must be >= 1".into()));
    }
    if n < k {
        return Err(MlError::TooFewRows { needed: k, got: n });
    }
    let mut rng = DetRng::new(seed);
    let mut centroids = seed_plus_plus(&points, k, &mut rng);
    let mut assignment = vec![usize::MAX; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let mut changed = false;
        for (i, p) in points.rows().into_iter().enumerate() {
            let (c, _) = nearest(p, &centroids);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        changed |= repair_empty(&points, &mut assignment, &mut centroids);
        update_centroids(&points, &assignment, &mut centroids);
        history.push(inertia(&points, &centroids, &assignment));
        if !changed {
            break;
        }
    }
    Ok(KMeansResult {
        inertia: *history.last().expect("at least one iteration"),
        centroids,
        assignment,
        iterations,
        inertia_history: history,
    })
}
