use std::collections::{BTreeSet, HashSet};

use ndarray::Array2;

use super::FeatureError;
use crate::demand::CellSeries;
use crate::geo::{CellId, GridSpec};

/// Which grid cells become rows of a [`FeatureTable`].
#[derive(Debug, Clone, Default, PartialEq)]
pub enum Mask {
    /// Cells where the target or any feature is positive.
    #[default]
    AnyPositive,
    /// Cells where the target is positive.
    TargetPositive,
    /// Every grid cell.
    All,
    /// An explicit cell set.
    Cells(BTreeSet<CellId>),
}

/// Grid-aligned regression table: one row per included cell.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub grid: GridSpec,
    pub names: Vec<String>,
    /// `columns[j][i]` is feature `j` at row `i`.
    pub columns: Vec<Vec<f64>>,
    pub target_name: String,
    pub target: Vec<f64>,
    /// Row order; row-major over the grid.
    pub cell_ids: Vec<CellId>,
}

fn check_series(s: &CellSeries, grid: &GridSpec) -> Result<(), FeatureError> {
    if s.grid != *grid {
        return Err(FeatureError::GridMismatch(s.name.clone()));
    }
    for (c, v) in &s.values {
        if !v.is_finite() {
            return Err(FeatureError::NonFinite {
                column: s.name.clone(),
                col: c.col,
                row: c.row,
            });
        }
    }
    Ok(())
}

/// Joins feature columns and the target on the cells selected by `mask`.
/// Cells missing from a series contribute 0.
pub fn assemble(columns: &[CellSeries], target: &CellSeries, mask: &Mask) -> Result<FeatureTable, FeatureError> {
    let grid = target.grid;
    check_series(target, &grid)?;
    let mut seen = HashSet::new();
    for c in columns {
        check_series(c, &grid)?;
        if !seen.insert(c.name.as_str()) || c.name == target.name {
            return Err(FeatureError::DuplicateColumn(c.name.clone()));
        }
    }
    let keep = |cell: CellId| match mask {
        Mask::AnyPositive => target.get(cell) > 0.0 || columns.iter().any(|s| s.get(cell) > 0.0),
        Mask::TargetPositive => target.get(cell) > 0.0,
        Mask::All => true,
        Mask::Cells(set) => set.contains(&cell),
    };
    let cell_ids: Vec<CellId> = grid.cells().filter(|c| keep(*c)).collect();
    if cell_ids.is_empty() {
        return Err(FeatureError::EmptyTable);
    }
    Ok(FeatureTable {
        grid,
        names: columns.iter().map(|c| c.name.clone()).collect(),
        columns: columns.iter().map(|s| cell_ids.iter().map(|c| s.get(*c)).collect()).collect(),
        target_name: target.name.clone(),
        target: cell_ids.iter().map(|c| target.get(*c)).collect(),
        cell_ids,
    })
}

impl FeatureTable {
    pub fn n_rows(&self) -> usize {
        self.cell_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.names.len()
    }

    /// Samples-by-features matrix.
    pub fn matrix(&self) -> Array2<f64> {
        Array2::from_shape_fn((self.n_rows(), self.n_features()), |(i, j)| self.columns[j][i])
    }

    pub fn column_index(&self, name: &str) -> Result<usize, FeatureError> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| FeatureError::UnknownColumn(name.to_string()))
    }

    /// Table restricted to the named features, in the given order.
    pub fn select(&self, names: &[String]) -> Result<FeatureTable, FeatureError> {
        let idx = names.iter().map(|n| self.column_index(n)).collect::<Result<Vec<_>, _>>()?;
        let mut seen = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(FeatureError::DuplicateColumn(dup.clone()));
        }
        Ok(FeatureTable {
            names: names.to_vec(),
            columns: idx.iter().map(|&j| self.columns[j].clone()).collect(),
            ..self.clone()
        })
    }

    /// Table restricted to the given rows, in the given order.
    pub fn rows(&self, rows: &[usize]) -> FeatureTable {
        FeatureTable {
            grid: self.grid,
            names: self.names.clone(),
            columns: self.columns.iter().map(|c| rows.iter().map(|&i| c[i]).collect()).collect(),
            target_name: self.target_name.clone(),
            target: rows.iter().map(|&i| self.target[i]).collect(),
            cell_ids: rows.iter().map(|&i| self.cell_ids[i]).collect(),
        }
    }

    /// `cell_col,cell_row,<features...>,<target>` with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cell_col,cell_row");
        for n in self.names.iter().chain(std::iter::once(&self.target_name)) {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (i, c) in self.cell_ids.iter().enumerate() {
            out.push_str(&format!("{},{}", c.col, c.row));
            for col in &self.columns {
                out.push_str(&format!(",{}", col[i]));
            }
            out.push_str(&format!(",{}\n", self.target[i]));
        }
        out
    }

    /// Parses [`FeatureTable::to_csv`] output; the last column is the target.
    pub fn from_csv(text: &str, grid: GridSpec) -> Result<FeatureTable, FeatureError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| FeatureError::Malformed("missing header".into()))?
            .split(',')
            .map(str::trim)
            .collect();
        if header.len() < 3 || header[0] != "cell_col" || header[1] != "cell_row" {
            return Err(FeatureError::Malformed("header must start with cell_col,cell_row and end with the target".into()));
        }
        let names: Vec<String> = header[2..header.len() - 1].iter().map(|s| s.to_string()).collect();
        let mut seen = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(FeatureError::DuplicateColumn(dup.clone()));
        }
        let mut columns = vec![Vec::new(); names.len()];
        let mut target = Vec::new();
        let mut cell_ids = Vec::new();
        for (k, line) in lines.enumerate() {
            let bad = || FeatureError::Malformed(format!("data row {}: '{line}'", k + 1));
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            if parts.len() != header.len() {
                return Err(bad());
            }
            let cell = CellId::new(parts[0].parse().map_err(|_| bad())?, parts[1].parse().map_err(|_| bad())?);
            if !grid.contains(cell) {
                return Err(bad());
            }
            let mut values = parts[2..].iter().map(|p| p.parse::<f64>().ok().filter(|v| v.is_finite()));
            for col in columns.iter_mut() {
                col.push(values.next().flatten().ok_or_else(bad)?);
            }
            target.push(values.next().flatten().ok_or_else(bad)?);
            cell_ids.push(cell);
        }
        if cell_ids.is_empty() {
            return Err(FeatureError::EmptyTable);
        }
        Ok(FeatureTable {
            grid,
            names,
            columns,
            target_name: header[header.len() - 1].to_string(),
            target,
            cell_ids,
        })
    }
}
