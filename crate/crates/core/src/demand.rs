//! Spectrum demand indicator (traffic-derived ground truth), the weighted
//! deployed-bandwidth proxy, and OLS validation of one against the other.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::geo::{CellId, GridSpec};
use crate::ingest::{MeasurementRecord, RasterGrid, TrafficRecord};
use crate::propagation::{CoverageFootprint, SiteRecord};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DemandError {
    #[error("no coverage footprint for site '{0}'")]
    MissingFootprint(String),
    #[error("series are defined on different grids")]
    GridMismatch,
    #[error("raster does not overlap the grid")]
    NoOverlap,
    #[error("zero variance in {0}")]
    DegenerateVariance(&'static str),
    #[error("need at least 3 populated cells, found {0}")]
    InsufficientData(usize),
    #[error("malformed cell series: {0}")]
    Malformed(String),
}

/// Per-cell values on a grid. Cells absent from the map are implicitly 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSeries {
    pub grid: GridSpec,
    pub values: BTreeMap<CellId, f64>,
    pub name: String,
    pub units: String,
}

impl CellSeries {
    pub fn new(grid: GridSpec, name: impl Into<String>, units: impl Into<String>) -> Self {
        Self {
            grid,
            values: BTreeMap::new(),
            name: name.into(),
            units: units.into(),
        }
    }

    pub fn get(&self, c: CellId) -> f64 {
        self.values.get(&c).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.values.values().sum()
    }

    /// `col,row,value` with a header, cells in row-major order.
    pub fn to_csv(&self) -> String {
        let mut ordered: Vec<(&CellId, &f64)> = self.values.iter().collect();
        ordered.sort_by_key(|(c, _)| (c.row, c.col));
        let mut out = String::from("col,row,value\n");
        for (c, v) in ordered {
            out.push_str(&format!("{},{},{}\n", c.col, c.row, v));
        }
        out
    }

    pub fn from_csv(text: &str, grid: GridSpec, name: &str, units: &str) -> Result<Self, DemandError> {
        let mut series = CellSeries::new(grid, name, units);
        let mut lines = text.lines().filter(|l| !l.trim().is_empty() && !l.starts_with('#'));
        match lines.next() {
            Some(h) if h.trim() == "col,row,value" => {}
            other => return Err(DemandError::Malformed(format!("bad header {other:?}"))),
        }
        for line in lines {
            let parts: Vec<&str> = line.trim().split(',').collect();
            let parsed = (parts.len() == 3)
                .then(|| Some((parts[0].parse().ok()?, parts[1].parse().ok()?, parts[2].parse::<f64>().ok()?)))
                .flatten();
            let Some((col, row, v)) = parsed else {
                return Err(DemandError::Malformed(format!("bad row '{line}'")));
            };
            let id = CellId::new(col, row);
            if !grid.contains(id) || !v.is_finite() {
                return Err(DemandError::Malformed(format!("cell out of grid or non-finite value in '{line}'")));
            }
            series.values.insert(id, v);
        }
        Ok(series)
    }

    /// GeoJSON FeatureCollection with one square polygon per populated cell.
    pub fn to_geojson(&self) -> Value {
        let mut ordered: Vec<(&CellId, &f64)> = self.values.iter().collect();
        ordered.sort_by_key(|(c, _)| (c.row, c.col));
        let features: Vec<Value> = ordered
            .into_iter()
            .map(|(c, v)| {
                let ring: Vec<Value> = self
                    .grid
                    .cell_polygon(*c)
                    .expect("series cells lie within the grid")
                    .iter()
                    .map(|p| json!([p.lon, p.lat]))
                    .collect();
                json!({
                    "type": "Feature",
                    "properties": {"col": c.col, "row": c.row, "value": v},
                    "geometry": {"type": "Polygon", "coordinates": [ring]},
                })
            })
            .collect();
        json!({"type": "FeatureCollection", "name": self.name, "units": self.units, "features": features})
    }

    pub fn scaled(&self, k: f64) -> CellSeries {
        let mut out = self.clone();
        out.values.values_mut().for_each(|v| *v *= k);
        out
    }
}

fn footprint_index(footprints: &[CoverageFootprint]) -> HashMap<&str, &CoverageFootprint> {
    footprints.iter().map(|f| (f.site_id.as_str(), f)).collect()
}

/// How hourly traffic is reduced to one value per transmitter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalReduction {
    #[default]
    Mean,
    BusyHour,
}

/// Per-site throughput over all `(date, hour)` slots; per-band rows in the
/// same slot are summed first. Sites are returned in first-seen order.
pub fn site_throughput(traffic: &[TrafficRecord], reduction: TemporalReduction) -> Vec<(String, f64)> {
    let mut order: Vec<String> = Vec::new();
    let mut slots: HashMap<&str, BTreeMap<(chrono::NaiveDate, u8), f64>> = HashMap::new();
    for r in traffic {
        let entry = slots.entry(r.site_id.as_str()).or_insert_with(|| {
            order.push(r.site_id.clone());
            BTreeMap::new()
        });
        *entry.entry((r.date, r.hour)).or_insert(0.0) += r.dl_throughput_mbps;
    }
    order
        .into_iter()
        .map(|site| {
            let s = &slots[site.as_str()];
            let v = match reduction {
                TemporalReduction::Mean => s.values().sum::<f64>() / s.len() as f64,
                TemporalReduction::BusyHour => s.values().copied().fold(0.0, f64::max),
            };
            (site, v)
        })
        .collect()
}

/// Traffic-derived demand per cell: every transmitter's throughput is added in
/// full to each cell of its footprint, then multiplied by the cell's weight
/// when a weight series is supplied (cells without a weight are dropped).
pub fn demand_indicator(
    traffic: &[TrafficRecord],
    footprints: &[CoverageFootprint],
    weights: Option<&CellSeries>,
    grid: &GridSpec,
    reduction: TemporalReduction,
) -> Result<CellSeries, DemandError> {
    if let Some(w) = weights {
        if w.grid != *grid {
            return Err(DemandError::GridMismatch);
        }
    }
    let index = footprint_index(footprints);
    let mut out = CellSeries::new(*grid, "demand_indicator", "Mbps");
    for (site, throughput) in site_throughput(traffic, reduction) {
        let fp = index.get(site.as_str()).ok_or(DemandError::MissingFootprint(site.clone()))?;
        for (c, _) in &fp.cells {
            *out.values.entry(*c).or_insert(0.0) += throughput;
        }
    }
    if let Some(w) = weights {
        out.values = out
            .values
            .into_iter()
            .filter_map(|(c, v)| w.values.get(&c).map(|wt| (c, v * wt)))
            .collect();
    }
    Ok(out)
}

fn max_normalize(values: &mut BTreeMap<CellId, f64>) {
    let max = values.values().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > 0.0 {
        values.values_mut().for_each(|v| *v /= max);
    } else {
        values.values_mut().for_each(|v| *v = 1.0);
    }
}

/// Crowdsourced sample counts per cell, max-normalized to `[0, 1]`.
/// No in-grid samples gives a uniform weight of 1 on every cell.
pub fn user_weight_series(measurements: &[MeasurementRecord], grid: &GridSpec) -> CellSeries {
    let mut out = CellSeries::new(*grid, "user_weight", "1");
    for m in measurements {
        if let Some(c) = grid.locate(m.location) {
            *out.values.entry(c).or_insert(0.0) += m.samples as f64;
        }
    }
    if out.values.values().all(|v| *v <= 0.0) {
        out.values = grid.cells().map(|c| (c, 1.0)).collect();
    } else {
        max_normalize(&mut out.values);
    }
    out
}

/// Sum of channel bandwidth of every site whose footprint contains the cell.
pub fn deployed_bandwidth(
    sites: &[SiteRecord],
    footprints: &[CoverageFootprint],
    grid: &GridSpec,
) -> Result<CellSeries, DemandError> {
    let index = footprint_index(footprints);
    let mut out = CellSeries::new(*grid, "deployed_bandwidth", "MHz");
    for s in sites {
        let fp = index.get(s.site_id.as_str()).ok_or(DemandError::MissingFootprint(s.site_id.clone()))?;
        for (c, _) in &fp.cells {
            if grid.contains(*c) {
                *out.values.entry(*c).or_insert(0.0) += s.bandwidth_mhz;
            }
        }
    }
    Ok(out)
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Median nighttime luminance of the pixels centred in each cell, max-normalized.
/// Cells without a pixel take the median over all in-grid pixels.
pub fn ntl_weight_series(raster: &RasterGrid, grid: &GridSpec) -> Result<CellSeries, DemandError> {
    let mut per_cell: BTreeMap<CellId, Vec<f64>> = BTreeMap::new();
    let mut all = Vec::new();
    for (centre, v) in raster.valid_pixels() {
        if let Some(c) = grid.locate(centre) {
            per_cell.entry(c).or_default().push(v);
            all.push(v);
        }
    }
    let fallback = median(&mut all).ok_or(DemandError::NoOverlap)?;
    let mut out = CellSeries::new(*grid, "ntl_weight", "1");
    for c in grid.cells() {
        let m = per_cell.get_mut(&c).and_then(|v| median(v)).unwrap_or(fallback);
        out.values.insert(c, m);
    }
    max_normalize(&mut out.values);
    Ok(out)
}

/// Element-wise product over the cells populated in `bandwidth`.
pub fn weighted_proxy(bandwidth: &CellSeries, ntl_weights: &CellSeries) -> Result<CellSeries, DemandError> {
    if bandwidth.grid != ntl_weights.grid {
        return Err(DemandError::GridMismatch);
    }
    let mut out = CellSeries::new(bandwidth.grid, "proxy", "MHz");
    out.values = bandwidth
        .values
        .iter()
        .map(|(c, b)| (*c, b * ntl_weights.get(*c)))
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

/// Regresses the indicator on the proxy over cells populated in either series.
pub fn ols_validate(proxy: &CellSeries, indicator: &CellSeries) -> Result<OlsFit, DemandError> {
    if proxy.grid != indicator.grid {
        return Err(DemandError::GridMismatch);
    }
    let mut cells: Vec<CellId> = proxy.values.keys().chain(indicator.values.keys()).copied().collect();
    cells.sort_unstable();
    cells.dedup();
    let n = cells.len();
    if n < 3 {
        return Err(DemandError::InsufficientData(n));
    }
    let xs: Vec<f64> = cells.iter().map(|c| proxy.get(*c)).collect();
    let ys: Vec<f64> = cells.iter().map(|c| indicator.get(*c)).collect();
    let fit = simple_ols(&xs, &ys)?;
    Ok(fit)
}

/// Ordinary least squares of `y` on a single regressor `x` with intercept.
pub fn simple_ols(xs: &[f64], ys: &[f64]) -> Result<OlsFit, DemandError> {
    let n = xs.len();
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(syy > 0.0) {
        return Err(DemandError::DegenerateVariance("indicator"));
    }
    if !(sxx > 0.0) {
        return Err(DemandError::DegenerateVariance("proxy"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = (1.0 - sse / syy).clamp(0.0, 1.0);
    Ok(OlsFit {
        slope,
        intercept,
        r_squared,
        n,
    })
}
