//! Extended-Hata path loss and transmitter coverage footprints.
//!
//! Path loss in dB, `f` in MHz, `d` in km, heights in metres:
//!
//! ```text
//! a(hm)        = (1.1 log f - 0.7) hm - (1.56 log f - 0.8)
//! 150-1500 MHz:  L = 69.55 + 26.16 log f - 13.82 log hb - a(hm) + (44.9 - 6.55 log hb) log d
//! 1500-3000 MHz: L = 46.3  + 33.9  log f - 13.82 log hb - a(hm) + (44.9 - 6.55 log hb) log d + C
//!                C = 3 dB urban, 0 otherwise
//! suburban:      L -= 2 (log(f/28))^2 + 5.4
//! open:          L -= 4.78 (log f)^2 - 18.33 log f + 40.94
//! ```
//!
//! Distances below 40 m are clamped to 40 m.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{CellId, GeoPoint, GridSpec, ProjectedPoint};

pub const MIN_DISTANCE_KM: f64 = 0.04;
pub const MAX_DISTANCE_KM: f64 = 100.0;
pub const DEFAULT_RX_THRESHOLD_DBM: f64 = -95.0;
pub const DEFAULT_MOBILE_HEIGHT_M: f64 = 1.5;

const BISECTION_TOLERANCE_KM: f64 = 0.001;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PropagationError {
    #[error("{quantity} = {value} outside model validity range [{min}, {max}]")]
    OutOfValidityRange {
        quantity: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Environment {
    Urban,
    Suburban,
    Open,
}

impl fmt::Display for Environment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Environment::Urban => "urban",
            Environment::Suburban => "suburban",
            Environment::Open => "open",
        })
    }
}

impl FromStr for Environment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "urban" => Ok(Environment::Urban),
            "suburban" => Ok(Environment::Suburban),
            "open" => Ok(Environment::Open),
            other => Err(format!("unknown environment '{other}' (expected urban, suburban or open)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub site_id: String,
    pub location: GeoPoint,
    pub tx_power_dbm: f64,
    pub antenna_height_m: f64,
    pub center_freq_mhz: f64,
    pub bandwidth_mhz: f64,
    pub environment: Environment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageFootprint {
    pub site_id: String,
    pub cells: Vec<(CellId, f64)>,
}

impl CoverageFootprint {
    pub fn contains(&self, c: CellId) -> bool {
        self.cells.iter().any(|(id, _)| *id == c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationParams {
    pub rx_threshold_dbm: f64,
    pub mobile_height_m: f64,
}

impl Default for PropagationParams {
    fn default() -> Self {
        Self {
            rx_threshold_dbm: DEFAULT_RX_THRESHOLD_DBM,
            mobile_height_m: DEFAULT_MOBILE_HEIGHT_M,
        }
    }
}

fn check_range(quantity: &'static str, value: f64, min: f64, max: f64) -> Result<(), PropagationError> {
    if value.is_finite() && (min..=max).contains(&value) {
        Ok(())
    } else {
        Err(PropagationError::OutOfValidityRange { quantity, value, min, max })
    }
}

pub fn path_loss_db(
    freq_mhz: f64,
    dist_km: f64,
    h_base_m: f64,
    h_mobile_m: f64,
    env: Environment,
) -> Result<f64, PropagationError> {
    check_range("frequency_mhz", freq_mhz, 150.0, 3000.0)?;
    check_range("base_height_m", h_base_m, 30.0, 200.0)?;
    check_range("mobile_height_m", h_mobile_m, 1.0, 10.0)?;
    if dist_km.is_nan() {
        return Err(PropagationError::OutOfValidityRange {
            quantity: "distance_km",
            value: dist_km,
            min: MIN_DISTANCE_KM,
            max: MAX_DISTANCE_KM,
        });
    }
    let d = dist_km.max(MIN_DISTANCE_KM);
    let lf = freq_mhz.log10();
    let lhb = h_base_m.log10();
    let a_hm = (1.1 * lf - 0.7) * h_mobile_m - (1.56 * lf - 0.8);
    let distance_term = (44.9 - 6.55 * lhb) * d.log10();

    let mut loss = if freq_mhz <= 1500.0 {
        69.55 + 26.16 * lf - 13.82 * lhb - a_hm + distance_term
    } else {
        let c = if env == Environment::Urban { 3.0 } else { 0.0 };
        46.3 + 33.9 * lf - 13.82 * lhb - a_hm + distance_term + c
    };
    match env {
        Environment::Urban => {}
        Environment::Suburban => loss -= 2.0 * (freq_mhz / 28.0).log10().powi(2) + 5.4,
        Environment::Open => loss -= 4.78 * lf * lf - 18.33 * lf + 40.94,
    }
    Ok(loss)
}

impl SiteRecord {
    pub fn received_power_dbm(&self, dist_km: f64, h_mobile_m: f64) -> Result<f64, PropagationError> {
        Ok(self.tx_power_dbm
            - path_loss_db(self.center_freq_mhz, dist_km, self.antenna_height_m, h_mobile_m, self.environment)?)
    }
}

/// Largest distance at which the received power still meets the threshold,
/// bisected on `[0.04, 100]` km to 1 m.
pub fn coverage_radius_km(site: &SiteRecord, rx_threshold_dbm: f64, h_mobile_m: f64) -> Result<f64, PropagationError> {
    let meets = |d: f64| -> Result<bool, PropagationError> {
        Ok(site.received_power_dbm(d, h_mobile_m)? >= rx_threshold_dbm)
    };
    if !meets(MIN_DISTANCE_KM)? {
        return Ok(MIN_DISTANCE_KM);
    }
    if meets(MAX_DISTANCE_KM)? {
        return Ok(MAX_DISTANCE_KM);
    }
    let (mut lo, mut hi) = (MIN_DISTANCE_KM, MAX_DISTANCE_KM);
    while hi - lo > BISECTION_TOLERANCE_KM {
        let mid = 0.5 * (lo + hi);
        if meets(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// In-grid cells whose centres lie within the site's coverage radius, in
/// row-major order, with the received power at each centre.
pub fn footprint(site: &SiteRecord, grid: &GridSpec, params: &PropagationParams) -> Result<CoverageFootprint, PropagationError> {
    let radius_km = coverage_radius_km(site, params.rx_threshold_dbm, params.mobile_height_m)?;
    let radius_m = radius_km * 1000.0;
    let centre = grid.project(site.location);
    let mut cells = Vec::new();
    let lo = ProjectedPoint::new(centre.x - radius_m - grid.cell_size_m, centre.y - radius_m - grid.cell_size_m);
    let hi = ProjectedPoint::new(centre.x + radius_m + grid.cell_size_m, centre.y + radius_m + grid.cell_size_m);
    if let Some((c0, c1)) = grid.cell_range(lo, hi) {
        for row in c0.row..=c1.row {
            for col in c0.col..=c1.col {
                let id = CellId::new(col, row);
                let d_m = grid.cell_center(id).distance(&centre);
                if d_m <= radius_m {
                    let power = site.received_power_dbm(d_m / 1000.0, params.mobile_height_m)?;
                    cells.push((id, power));
                }
            }
        }
    }
    Ok(CoverageFootprint {
        site_id: site.site_id.clone(),
        cells,
    })
}

/// Footprints for every site, computed in parallel, returned in input order.
pub fn footprints(
    sites: &[SiteRecord],
    grid: &GridSpec,
    params: &PropagationParams,
) -> Result<Vec<CoverageFootprint>, PropagationError> {
    use rayon::prelude::*;
    sites.par_iter().map(|s| footprint(s, grid, params)).collect()
}

/// True when every cell id appears at most once.
pub fn cells_unique(fp: &CoverageFootprint) -> bool {
    let mut seen = HashSet::new();
    fp.cells.iter().all(|(c, _)| seen.insert(*c))
}
