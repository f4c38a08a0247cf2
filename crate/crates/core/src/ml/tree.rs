use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{check_xy, MlError, Regressor};
use crate::rng::DetRng;

// Gains within this relative margin of the best are treated as ties.
const TIE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: 6, min_leaf: 1 }
    }
}

/// One node of a flattened tree. Leaves have `feature = None`; internal
/// nodes send rows with `x[feature] <= threshold` to `left`.
/// `leaf_value` holds the node's mean target on every node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub feature: Option<usize>,
    pub threshold: f64,
    pub gain: f64,
    pub left: Option<usize>,
    pub right: Option<usize>,
    pub leaf_value: f64,
    pub n_samples: usize,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.feature.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
}

impl RegressionTree {
    pub fn predict_row(&self, row: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            let node = &self.nodes[i];
            match node.feature {
                None => return node.leaf_value,
                Some(f) => {
                    i = if row(f) <= node.threshold {
                        node.left.expect("internal node has a left child")
                    } else {
                        node.right.expect("internal node has a right child")
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &RegressionTree, i: usize) -> usize {
            let n = &t.nodes[i];
            match (n.left, n.right) {
                (Some(l), Some(r)) => 1 + go(t, l).max(go(t, r)),
                _ => 0,
            }
        }
        go(self, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }
}

impl Regressor for RegressionTree {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        x.rows().into_iter().map(|r| self.predict_row(|f| r[f])).collect()
    }

    fn n_features(&self) -> usize {
        self.n_features
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
    n_left: usize,
}

struct Builder<'a> {
    cols: &'a [Vec<f64>],
    y: &'a [f64],
    params: TreeParams,
    max_features: usize,
    rng: Option<&'a mut DetRng>,
    nodes: Vec<Node>,
    goes_left: Vec<bool>,
}

impl Builder<'_> {
    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.cols.len();
        match self.rng.as_deref_mut() {
            Some(rng) if self.max_features < p => {
                let mut idx: Vec<usize> = (0..p).collect();
                for i in 0..self.max_features {
                    let j = i + rng.index(p - i);
                    idx.swap(i, j);
                }
                let mut chosen = idx[..self.max_features].to_vec();
                chosen.sort_unstable();
                chosen
            }
            _ => (0..p).collect(),
        }
    }

    /// `sorted[f]` lists the node's rows ordered by feature `f`.
    fn best_split(&mut self, sorted: &[Vec<usize>], total: f64) -> Option<Split> {
        let n = sorted[0].len();
        let min_leaf = self.params.min_leaf.max(1);
        let mut best: Option<Split> = None;
        for f in self.candidate_features() {
            let col = &self.cols[f];
            let order = &sorted[f];
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.y[order[k]];
                let n_left = k + 1;
                let (v, next) = (col[order[k]], col[order[k + 1]]);
                if n_left < min_leaf || n - n_left < min_leaf || !(v < next) {
                    continue;
                }
                let n_right = n - n_left;
                let diff = left_sum / n_left as f64 - (total - left_sum) / n_right as f64;
                let gain = (n_left * n_right) as f64 / n as f64 * diff * diff;
                let better = match &best {
                    None => true,
                    Some(b) => gain > b.gain + TIE_EPS * b.gain.abs(),
                };
                if better {
                    let mid = v + (next - v) / 2.0;
                    best = Some(Split {
                        feature: f,
                        threshold: if mid < next { mid } else { v },
                        gain,
                        n_left,
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let rows = &sorted[0];
        let n = rows.len();
        let total: f64 = rows.iter().map(|&i| self.y[i]).sum();
        let mean = total / n as f64;
        let sse: f64 = rows.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        let id = self.nodes.len();
        self.nodes.push(Node {
            feature: None,
            threshold: 0.0,
            gain: 0.0,
            left: None,
            right: None,
            leaf_value: mean,
            n_samples: n,
        });
        if depth >= self.params.max_depth || n < 2 * self.params.min_leaf.max(1) || sse <= 0.0 {
            return id;
        }
        let Some(split) = self.best_split(&sorted, total) else {
            return id;
        };
        if !(split.gain > TIE_EPS * sse) {
            return id;
        }
        let col = &self.cols[split.feature];
        for &i in rows {
            self.goes_left[i] = col[i] <= split.threshold;
        }
        let mut left = Vec::with_capacity(sorted.len());
        let mut right = Vec::with_capacity(sorted.len());
        for order in sorted {
            let (l, r): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|&i| self.goes_left[i]);
            left.push(l);
            right.push(r);
        }
        debug_assert_eq!(left[0].len(), split.n_left);
        let l = self.grow(left, depth + 1);
        let r = self.grow(right, depth + 1);
        let node = &mut self.nodes[id];
        node.feature = Some(split.feature);
        node.threshold = split.threshold;
        node.gain = split.gain;
        node.left = Some(l);
        node.right = Some(r);
        id
    }
}

/// Fits a CART regression tree with exhaustive variance-reduction splits.
///
/// Among splits whose gain ties the best within a relative `1e-10`, the lower
/// feature index wins, then the lower threshold.
pub fn fit_tree(x: ArrayView2<'_, f64>, y: &[f64], params: TreeParams) -> Result<RegressionTree, MlError> {
    fit_tree_with(x, y, params, None, None)
}

/// Columns of a design matrix with each column's row order, computed once
/// and shared by every tree fitted on the same matrix.
pub(crate) struct Presorted {
    cols: Vec<Vec<f64>>,
    order: Vec<Vec<usize>>,
}

impl Presorted {
    pub(crate) fn new(x: ArrayView2<'_, f64>) -> Self {
        let cols: Vec<Vec<f64>> = x.columns().into_iter().map(|c| c.to_vec()).collect();
        let order = cols
            .iter()
            .map(|col| {
                let mut o: Vec<usize> = (0..col.len()).collect();
                o.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
                o
            })
            .collect();
        Self { cols, order }
    }

    /// Per-feature sorted lists of the multiset `rows`.
    fn sorted_rows(&self, rows: Option<&[usize]>) -> Vec<Vec<usize>> {
        match rows {
            None => self.order.clone(),
            Some(rows) => {
                let n = self.cols.first().map_or(0, Vec::len);
                let mut count = vec![0usize; n];
                for &r in rows {
                    count[r] += 1;
                }
                self.order
                    .iter()
                    .map(|o| o.iter().flat_map(|&i| std::iter::repeat_n(i, count[i])).collect())
                    .collect()
            }
        }
    }

    pub(crate) fn fit(
        &self,
        y: &[f64],
        params: TreeParams,
        rows: Option<&[usize]>,
        features: Option<(usize, &mut DetRng)>,
    ) -> Result<RegressionTree, MlError> {
        let p = self.cols.len();
        if p == 0 {
            return Err(MlError::DimensionMismatch("no feature columns".into()));
        }
        if rows.map_or(y.is_empty(), <[usize]>::is_empty) {
            return Err(MlError::TooFewRows { needed: 1, got: 0 });
        }
        if let Some(&bad) = rows.and_then(|r| r.iter().find(|&&i| i >= y.len())) {
            return Err(MlError::DimensionMismatch(format!("row index {bad} out of range for {} rows", y.len())));
        }
        let (max_features, rng) = match features {
            Some((m, rng)) => (m.clamp(1, p), Some(rng)),
            None => (p, None),
        };
        let mut b = Builder {
            cols: &self.cols,
            y,
            params,
            max_features,
            rng,
            nodes: Vec::new(),
            goes_left: vec![false; y.len()],
        };
        b.grow(self.sorted_rows(rows), 0);
        Ok(RegressionTree { nodes: b.nodes, n_features: p })
    }
}

/// Tree fit on the row subset `rows` (duplicates allowed) that, when `rng`
/// is given, considers `max_features` randomly chosen features at each node.
pub fn fit_tree_with(
    x: ArrayView2<'_, f64>,
    y: &[f64],
    params: TreeParams,
    rows: Option<Vec<usize>>,
    features: Option<(usize, &mut DetRng)>,
) -> Result<RegressionTree, MlError> {
    check_xy(&x, y)?;
    Presorted::new(x).fit(y, params, rows.as_deref(), features)
}
