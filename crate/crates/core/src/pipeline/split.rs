use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::features::FeatureTable;
use crate::geo::CellId;
use crate::ml::kmeans;
use crate::rng::DetRng;

const KMEANS_MAX_ITER: usize = 300;

/// Cluster-stratified train/test partition of a table's cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub k: usize,
    pub seed: u64,
    pub train_frac: f64,
    /// Table cells in row order with their cluster index.
    pub cells: Vec<CellId>,
    pub cluster_of: Vec<usize>,
    /// Both lists follow table row order.
    pub train: Vec<CellId>,
    pub test: Vec<CellId>,
}

impl SplitPlan {
    /// Row indices of the train and test cells in `table`.
    pub fn row_indices(&self, table: &FeatureTable) -> Result<(Vec<usize>, Vec<usize>), PipelineError> {
        let pos: HashMap<CellId, usize> = table.cell_ids.iter().enumerate().map(|(i, c)| (*c, i)).collect();
        let lookup = |cells: &[CellId]| {
            cells
                .iter()
                .map(|c| {
                    pos.get(c)
                        .copied()
                        .ok_or_else(|| PipelineError::SplitMismatch(format!("cell ({}, {}) not in table", c.col, c.row)))
                })
                .collect::<Result<Vec<_>, _>>()
        };
        Ok((lookup(&self.train)?, lookup(&self.test)?))
    }
}

/// Train count for a cluster of `m` cells: round-half-up of `frac * m`, at least 1.
fn train_count(m: usize, frac: f64) -> usize {
    ((frac * m as f64 + 0.5).floor() as usize).clamp(1, m)
}

/// k-means on projected cell centres, then a seeded shuffle inside each
/// cluster whose first `round(train_frac * m)` cells go to training.
/// Cluster `c` shuffles with `DetRng::new(seed).fork(c)`.
pub fn spatial_split(table: &FeatureTable, k: usize, train_frac: f64, seed: u64) -> Result<SplitPlan, PipelineError> {
    let n = table.n_rows();
    if k == 0 || n < k {
        return Err(PipelineError::TooFewRows { needed: k.max(1), got: n });
    }
    if !(train_frac > 0.0 && train_frac <= 1.0) {
        return Err(PipelineError::Malformed(format!("train_frac must be in (0, 1], got {train_frac}")));
    }
    let pts = Array2::from_shape_fn((n, 2), |(i, j)| {
        let p = table.grid.cell_center(table.cell_ids[i]);
        if j == 0 {
            p.x
        } else {
            p.y
        }
    });
    let km = kmeans(pts.view(), k, seed, KMEANS_MAX_ITER)?;
    let base = DetRng::new(seed);
    let mut is_train = vec![false; n];
    for c in 0..k {
        let mut members: Vec<usize> = (0..n).filter(|&i| km.assignment[i] == c).collect();
        if members.is_empty() {
            continue;
        }
        base.fork(c as u64).shuffle(&mut members);
        for &i in &members[..train_count(members.len(), train_frac)] {
            is_train[i] = true;
        }
    }
    let pick = |want: bool| -> Vec<CellId> { (0..n).filter(|&i| is_train[i] == want).map(|i| table.cell_ids[i]).collect() };
    Ok(SplitPlan {
        k,
        seed,
        train_frac,
        cells: table.cell_ids.clone(),
        cluster_of: km.assignment,
        train: pick(true),
        test: pick(false),
    })
}
