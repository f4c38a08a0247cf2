use serde::{Deserialize, Serialize};

use super::SynthError;
use crate::geo::GeoPoint;
use crate::ingest::Allocation;

/// Geometry and intensity model of one synthetic feature layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerGeometry {
    /// Poisson number of points per cell.
    Points { mean_per_cell: f64 },
    /// Poisson number of straight segments per cell, each 0.3 to 0.8 cells long.
    Lines { mean_per_cell: f64 },
    /// Jittered tiling of quadrilaterals `tile_cells` cells wide.
    /// Extensive: value = `base` per km² scaled by intensity and tile area.
    /// Intensive: value = `base + span * intensity`.
    Polygons {
        allocation: Allocation,
        tile_cells: f64,
        base: f64,
        span: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub geometry: LayerGeometry,
    /// Share of the intensity taken from the shared activity surface; the
    /// rest comes from the layer's own bump field.
    pub latent_weight: f64,
    /// Bumps in the layer's own field.
    pub n_bumps: usize,
    /// Rasterized values are divided by `unit` before entering the law.
    pub unit: f64,
    /// Contribution per `unit` to the planted target.
    pub beta: f64,
}

/// Nonlinear addition to the planted law, on unit-scaled features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LawTerm {
    /// `beta * a * b`
    Product { a: String, b: String, beta: f64 },
    /// `beta * max(0, feature - knot)`
    Hinge { feature: String, knot: f64, beta: f64 },
}

impl LawTerm {
    pub fn layers(&self) -> Vec<&str> {
        match self {
            LawTerm::Product { a, b, .. } => vec![a, b],
            LawTerm::Hinge { feature, .. } => vec![feature],
        }
    }
}

/// Everything that defines a synthetic city. Two specs that differ only in
/// `seed` share the planted law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CitySpec {
    pub name: String,
    pub seed: u64,
    /// South-west corner of the grid.
    pub anchor: GeoPoint,
    pub extent_km: f64,
    pub cell_size_m: f64,
    pub n_activity_bumps: usize,
    pub n_hub_clusters: usize,
    /// Capacity sites added on top of the coverage lattice, placed by activity.
    pub n_sites: usize,
    /// Share of indicator variance explained by the proxy.
    pub rho_target: f64,
    /// Share of target variance explained by the feature law.
    pub law_rho: f64,
    /// Target floor added before the noise offset.
    pub intercept: f64,
    /// Luminance ceiling of the light sensor, in target units per MHz. A
    /// shared ceiling fixes the proxy scale across cities.
    pub ntl_saturation: Option<f64>,
    pub layers: Vec<LayerSpec>,
    pub terms: Vec<LawTerm>,
}

fn layer(name: &str, geometry: LayerGeometry, latent_weight: f64, n_bumps: usize, unit: f64, beta: f64) -> LayerSpec {
    LayerSpec {
        name: name.into(),
        geometry,
        latent_weight,
        n_bumps,
        unit,
        beta,
    }
}

fn polygons(allocation: Allocation, tile_cells: f64, base: f64, span: f64) -> LayerGeometry {
    LayerGeometry::Polygons {
        allocation,
        tile_cells,
        base,
        span,
    }
}

/// Five planted drivers followed by ten layers with no effect on the target.
pub fn default_layers(n_hub_clusters: usize) -> Vec<LayerSpec> {
    use Allocation::{Extensive, Intensive};
    use LayerGeometry::{Lines, Points};
    vec![
        layer("day_population", polygons(Extensive, 1.7, 2500.0, 0.0), 0.6, 5, 1000.0, 0.37),
        layer("transport_hubs", Points { mean_per_cell: 0.8 }, 0.5, n_hub_clusters, 1.0, 0.7),
        layer("poi", Points { mean_per_cell: 6.0 }, 0.5, 6, 10.0, 1.4),
        layer("road_length", Lines { mean_per_cell: 3.0 }, 0.5, 6, 1000.0, 0.4),
        layer("median_income", polygons(Intensive, 2.3, 30000.0, 70000.0), 0.2, 4, 10000.0, 0.4),
        layer("night_population", polygons(Extensive, 1.9, 2000.0, 0.0), 0.4, 6, 1000.0, 0.0),
        layer("schools", Points { mean_per_cell: 0.5 }, 0.3, 6, 1.0, 0.0),
        layer("bus_stops", Points { mean_per_cell: 2.0 }, 0.4, 6, 1.0, 0.0),
        layer("parks", Points { mean_per_cell: 0.7 }, 0.0, 6, 1.0, 0.0),
        layer("rail_length", Lines { mean_per_cell: 0.6 }, 0.2, 4, 1000.0, 0.0),
        layer("water_length", Lines { mean_per_cell: 0.5 }, 0.0, 4, 1000.0, 0.0),
        layer("building_age", polygons(Intensive, 2.1, 20.0, 40.0), 0.0, 5, 10.0, 0.0),
        layer("household_size", polygons(Intensive, 1.6, 1.8, 1.5), 0.1, 5, 1.0, 0.0),
        layer("farmland", polygons(Extensive, 2.7, 0.5, 0.0), 0.0, 5, 1.0, 0.0),
        layer("elevation", polygons(Intensive, 3.1, 50.0, 300.0), 0.0, 3, 100.0, 0.0),
    ]
}

impl Default for CitySpec {
    fn default() -> Self {
        let n_hub_clusters = 5;
        Self {
            name: "synthetic-city".into(),
            seed: 1,
            anchor: GeoPoint { lat: 43.55, lon: -79.65 },
            extent_km: 90.0,
            cell_size_m: 1500.0,
            n_activity_bumps: 8,
            n_hub_clusters,
            n_sites: 120,
            rho_target: 0.763,
            law_rho: 0.95,
            intercept: 0.2,
            ntl_saturation: Some(2.5),
            layers: default_layers(n_hub_clusters),
            terms: vec![
                LawTerm::Product {
                    a: "day_population".into(),
                    b: "median_income".into(),
                    beta: 0.1,
                },
                LawTerm::Hinge {
                    feature: "road_length".into(),
                    knot: 3.0,
                    beta: 2.0,
                },
            ],
        }
    }
}

impl CitySpec {
    pub fn cells_per_side(&self) -> usize {
        (self.extent_km * 1000.0 / self.cell_size_m).round() as usize
    }

    pub fn relevant_layers(&self) -> Vec<String> {
        self.layers
            .iter()
            .filter(|l| l.beta != 0.0 || self.terms.iter().any(|t| t.layers().contains(&l.name.as_str())))
            .map(|l| l.name.clone())
            .collect()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if !(self.rho_target > 0.0 && self.rho_target <= 1.0) {
            return bad(format!("rho_target must be in (0, 1], got {}", self.rho_target));
        }
        if !(self.law_rho > 0.0 && self.law_rho <= 1.0) {
            return bad(format!("law_rho must be in (0, 1], got {}", self.law_rho));
        }
        if !(self.cell_size_m.is_finite() && self.cell_size_m > 0.0) {
            return bad(format!("cell_size_m must be positive, got {}", self.cell_size_m));
        }
        if !(self.extent_km.is_finite() && self.extent_km * 1000.0 >= 10.0 * self.cell_size_m - 1e-6) {
            return bad(format!("extent must cover at least 10 cells per side, got {} km", self.extent_km));
        }
        if GeoPoint::new(self.anchor.lat, self.anchor.lon).is_err() || self.anchor.lat.abs() > 80.0 {
            return bad("anchor must be a valid coordinate below 80 degrees latitude".into());
        }
        if self.ntl_saturation.is_some_and(|s| !(s.is_finite() && s > 0.0)) {
            return bad("ntl_saturation must be positive".into());
        }
        if !(self.intercept.is_finite() && self.intercept >= 0.0) {
            return bad("intercept must be >= 0".into());
        }
        let mut names = std::collections::HashSet::new();
        for l in &self.layers {
            if l.name.is_empty() || !names.insert(l.name.as_str()) {
                return bad(format!("layer names must be unique and non-empty ('{}')", l.name));
            }
            if !(l.unit > 0.0 && l.beta.is_finite() && l.beta >= 0.0 && (0.0..=1.0).contains(&l.latent_weight)) {
                return bad(format!("layer '{}': unit > 0, beta >= 0 and latent_weight in [0, 1] required", l.name));
            }
            let ok = match &l.geometry {
                LayerGeometry::Points { mean_per_cell } | LayerGeometry::Lines { mean_per_cell } => *mean_per_cell >= 0.0,
                LayerGeometry::Polygons { tile_cells, base, span, .. } => *tile_cells >= 0.5 && *base >= 0.0 && *span >= 0.0,
            };
            if !ok {
                return bad(format!("layer '{}' has invalid geometry parameters", l.name));
            }
        }
        for t in &self.terms {
            for name in t.layers() {
                if !names.contains(name) {
                    return bad(format!("law term refers to unknown layer '{name}'"));
                }
            }
            let beta = match t {
                LawTerm::Product { beta, .. } | LawTerm::Hinge { beta, .. } => *beta,
            };
            if !(beta.is_finite() && beta >= 0.0) {
                return bad("law term beta must be >= 0".into());
            }
        }
        Ok(())
    }
}
