//! Synthetic cities with a planted demand law.
//!
//! A city is built from one shared activity surface. Every feature layer
//! mixes that surface with a field of its own, so layers are correlated but
//! not collinear. The target (and with it the proxy) is a declared function
//! of the rasterized layers plus calibrated noise, and the indicator is a
//! noisy linear function of the proxy. Every quantity that depends on a
//! written file is recomputed from the file's parsed text with the same
//! library calls the downstream stages use, so the planted relations hold
//! exactly for the data on disk.

mod field;
mod spec;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::demand::{
    deployed_bandwidth, demand_indicator, ntl_weight_series, ols_validate, user_weight_series, weighted_proxy, DemandError,
    TemporalReduction,
};
use crate::features::{rasterize_source, FeatureError};
use crate::geo::{CellId, GeoPoint, GridSpec, ProjectedPoint, EARTH_RADIUS_M};
use crate::ingest::{
    feature_source_to_geojson, measurements_to_csv, parse_feature_source_str, parse_measurements_str, parse_raster_str,
    parse_sites_str, parse_traffic_str, raster_to_string, sites_to_csv, traffic_to_csv, Allocation, FeatureSource,
    IngestError, MeasurementRecord, RasterGrid, SourceGeometry, SourceKind, TrafficRecord, ValuedPolygon, DEFAULT_NODATA,
};
use crate::propagation::{coverage_radius_km, footprints, Environment, PropagationError, PropagationParams, SiteRecord};
use crate::rng::{derive_seed, DetRng};

use field::{Field, Mixed};
pub use spec::{default_layers, CitySpec, LawTerm, LayerGeometry, LayerSpec};

const STREAM_LATENT: u64 = 1;
const STREAM_SITES: u64 = 2;
const STREAM_LAW_NOISE: u64 = 3;
const STREAM_INDICATOR_NOISE: u64 = 4;
const STREAM_MEASUREMENTS: u64 = 5;
const STREAM_TRAFFIC: u64 = 6;
const STREAM_LAYER_BASE: u64 = 100;

const NOISE_BOUND: f64 = 4.0;
const MAX_SAMPLES: f64 = 1e12;
const PIXELS_PER_CELL: f64 = 3.0;
const TRAFFIC_DATE: &str = "2024-03-05";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid city spec: {0}")]
    InvalidSpec(String),
    #[error("generated data failed to round-trip: {0}")]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Propagation(#[from] PropagationError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error("{0} cells are not covered by any site")]
    Coverage(usize),
    #[error("cannot write dataset: {0}")]
    Io(String),
}

/// One feature file of a dataset, as listed in `sources.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceEntry {
    pub name: String,
    pub path: String,
    pub kind: SourceKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub allocation: Option<Allocation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorLaw {
    /// Indicator = proxy + offset + noise (before the arbitrary scale set by sample counts).
    pub offset: f64,
    pub noise_sd: f64,
}

/// Ground truth written to `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub name: String,
    pub seed: u64,
    /// Seed of the law and indicator noise draws.
    pub noise_seed: u64,
    pub grid: GridSpec,
    pub bbox_min: GeoPoint,
    pub bbox_max: GeoPoint,
    pub cell_size_m: f64,
    pub rho_target: f64,
    pub law_rho: f64,
    /// Target = intercept + sum(beta * raw feature) + terms + noise.
    pub intercept: f64,
    /// Coefficient per raw rasterized unit (count, metre, person, ...).
    pub beta: BTreeMap<String, f64>,
    pub units: BTreeMap<String, f64>,
    pub terms: Vec<LawTerm>,
    pub relevant: Vec<String>,
    pub law_noise_sd: f64,
    pub indicator: IndicatorLaw,
    /// Proxy = target / proxy_scale outside saturated cells.
    pub proxy_scale: f64,
    /// Cells whose luminance was clipped at the sensor ceiling.
    pub n_saturated: usize,
    pub n_sites: usize,
    /// R² of the proxy against the indicator recomputed from the written files.
    pub achieved_proxy_r2: f64,
}

/// A generated city held in memory: file contents keyed by relative path.
#[derive(Debug, Clone)]
pub struct City {
    pub spec: CitySpec,
    pub truth: Truth,
    pub sources: Vec<SourceEntry>,
    pub files: BTreeMap<String, String>,
}

impl City {
    pub fn write(&self, dir: impl AsRef<Path>) -> Result<(), SynthError> {
        let dir = dir.as_ref();
        for (rel, text) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| SynthError::Io(format!("{}: {e}", parent.display())))?;
            }
            std::fs::write(&path, text).map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }
}

/// Builds the city for `spec` and writes it to `dir`.
pub fn generate(spec: &CitySpec, dir: impl AsRef<Path>) -> Result<City, SynthError> {
    let city = build(spec)?;
    city.write(dir)?;
    Ok(city)
}

/// Two cities that share `spec`'s law but not its realization.
pub fn twin_cities(spec: &CitySpec, seed_a: u64, seed_b: u64) -> Result<(City, City), SynthError> {
    let a = CitySpec {
        seed: seed_a,
        ..spec.clone()
    };
    let b = CitySpec {
        seed: seed_b,
        ..spec.clone()
    };
    Ok((build(&a)?, build(&b)?))
}

fn sample_variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

fn json_text<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

struct Ctx<'a> {
    spec: &'a CitySpec,
    grid: GridSpec,
    latent: Field,
}

impl Ctx<'_> {
    fn point_in_cell(&self, c: CellId, rng: &mut DetRng, margin: f64) -> ProjectedPoint {
        let [x0, y0, ..] = self.grid.cell_bounds(c);
        let s = self.grid.cell_size_m;
        ProjectedPoint::new(x0 + s * rng.uniform_range(margin, 1.0 - margin), y0 + s * rng.uniform_range(margin, 1.0 - margin))
    }

    fn layer_source(&self, index: usize, layer: &LayerSpec) -> FeatureSource {
        let mut rng = DetRng::new(derive_seed(self.spec.seed, STREAM_LAYER_BASE + index as u64));
        let own = Field::random(&self.grid, layer.n_bumps, &mut rng);
        let field = Mixed {
            latent: &self.latent,
            own,
            weight: layer.latent_weight,
        };
        let centres: Vec<(CellId, f64)> = self.grid.cells().map(|c| (c, field.eval(self.grid.cell_center(c)))).collect();
        let mean = centres.iter().map(|(_, v)| v).sum::<f64>() / centres.len() as f64;
        let g = &self.grid;
        let geometry = match &layer.geometry {
            LayerGeometry::Points { mean_per_cell } => {
                let mut pts = Vec::new();
                for &(c, v) in &centres {
                    for _ in 0..rng.poisson(mean_per_cell * v / mean) {
                        pts.push(g.unproject(self.point_in_cell(c, &mut rng, 0.02)));
                    }
                }
                SourceGeometry::Point(pts)
            }
            LayerGeometry::Lines { mean_per_cell } => {
                let mut lines = Vec::new();
                for &(c, v) in &centres {
                    for _ in 0..rng.poisson(mean_per_cell * v / mean) {
                        let mid = self.point_in_cell(c, &mut rng, 0.0);
                        let half = 0.5 * g.cell_size_m * rng.uniform_range(0.3, 0.8);
                        let angle = rng.uniform_range(0.0, std::f64::consts::PI);
                        let (dx, dy) = (half * angle.cos(), half * angle.sin());
                        lines.push(vec![
                            g.unproject(ProjectedPoint::new(mid.x - dx, mid.y - dy)),
                            g.unproject(ProjectedPoint::new(mid.x + dx, mid.y + dy)),
                        ]);
                    }
                }
                SourceGeometry::Line(lines)
            }
            LayerGeometry::Polygons {
                allocation,
                tile_cells,
                base,
                span,
            } => SourceGeometry::PolygonValue {
                allocation: *allocation,
                polygons: self.tiles(*tile_cells, &mut rng, |centre, area_m2, rng| match allocation {
                    Allocation::Extensive => {
                        base * area_m2 / 1e6 * field.eval(centre) / mean * (0.1 * rng.normal()).exp()
                    }
                    Allocation::Intensive => base + span * field.eval(centre) * (1.0 + 0.05 * rng.normal()).max(0.0),
                }),
            },
        };
        FeatureSource {
            name: layer.name.clone(),
            geometry,
        }
    }

    /// Quadrilateral tiling of the grid extent with jittered interior vertices.
    fn tiles(
        &self,
        tile_cells: f64,
        rng: &mut DetRng,
        mut value: impl FnMut(ProjectedPoint, f64, &mut DetRng) -> f64,
    ) -> Vec<ValuedPolygon> {
        let [x0, y0, x1, y1] = self.grid.extent();
        let nx = (((x1 - x0) / (tile_cells * self.grid.cell_size_m)).round() as usize).max(1);
        let ny = (((y1 - y0) / (tile_cells * self.grid.cell_size_m)).round() as usize).max(1);
        let (sx, sy) = ((x1 - x0) / nx as f64, (y1 - y0) / ny as f64);
        let mut verts = vec![vec![ProjectedPoint::new(0.0, 0.0); nx + 1]; ny + 1];
        for (j, row) in verts.iter_mut().enumerate() {
            for (i, v) in row.iter_mut().enumerate() {
                let jx = if i == 0 || i == nx { 0.0 } else { rng.uniform_range(-0.25, 0.25) * sx };
                let jy = if j == 0 || j == ny { 0.0 } else { rng.uniform_range(-0.25, 0.25) * sy };
                *v = ProjectedPoint::new(x0 + i as f64 * sx + jx, y0 + j as f64 * sy + jy);
            }
        }
        let geo: Vec<Vec<GeoPoint>> = verts.iter().map(|r| r.iter().map(|p| self.grid.unproject(*p)).collect()).collect();
        let mut out = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let quad = [verts[j][i], verts[j][i + 1], verts[j + 1][i + 1], verts[j + 1][i]];
                let area = 0.5
                    * (0..4)
                        .map(|k| {
                            let (a, b) = (quad[k], quad[(k + 1) % 4]);
                            a.x * b.y - b.x * a.y
                        })
                        .sum::<f64>();
                let centre = ProjectedPoint::new(
                    quad.iter().map(|p| p.x).sum::<f64>() / 4.0,
                    quad.iter().map(|p| p.y).sum::<f64>() / 4.0,
                );
                let ring = vec![geo[j][i], geo[j][i + 1], geo[j + 1][i + 1], geo[j + 1][i], geo[j][i]];
                out.push(ValuedPolygon {
                    ring,
                    value: value(centre, area, rng),
                });
            }
        }
        out
    }

    fn sites(&self) -> Result<Vec<SiteRecord>, SynthError> {
        let mut rng = DetRng::new(derive_seed(self.spec.seed, STREAM_SITES));
        let g = &self.grid;
        let params = PropagationParams::default();
        let macro_site = |id: String, p: ProjectedPoint| SiteRecord {
            site_id: id,
            location: g.unproject(p),
            tx_power_dbm: 46.0,
            antenna_height_m: 45.0,
            center_freq_mhz: 900.0,
            bandwidth_mhz: 10.0,
            environment: Environment::Suburban,
        };
        let probe = macro_site(String::new(), g.origin);
        let radius_m = coverage_radius_km(&probe, params.rx_threshold_dbm, params.mobile_height_m)? * 1000.0;
        // square lattice: every point lies within spacing / sqrt(2) of a node
        let [x0, y0, x1, y1] = g.extent();
        let nx = ((x1 - x0) / (1.3 * radius_m)).ceil().max(1.0) as usize;
        let ny = ((y1 - y0) / (1.3 * radius_m)).ceil().max(1.0) as usize;
        let (sx, sy) = ((x1 - x0) / nx as f64, (y1 - y0) / ny as f64);
        let mut sites = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                let p = ProjectedPoint::new(
                    x0 + (i as f64 + 0.5 + rng.uniform_range(-0.05, 0.05)) * sx,
                    y0 + (j as f64 + 0.5 + rng.uniform_range(-0.05, 0.05)) * sy,
                );
                sites.push(macro_site(format!("M{:04}", sites.len() + 1), p));
            }
        }
        let cells: Vec<CellId> = g.cells().collect();
        let weights: Vec<f64> = cells.iter().map(|c| self.latent.eval(g.cell_center(*c)).powi(2)).collect();
        let total: f64 = weights.iter().sum();
        let bands = [(1800.0, 20.0, 43.0), (2100.0, 15.0, 43.0), (2600.0, 20.0, 40.0)];
        for k in 0..self.spec.n_sites {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut chosen = cells[cells.len() - 1];
            for (c, w) in cells.iter().zip(&weights) {
                acc += w;
                if acc > target {
                    chosen = *c;
                    break;
                }
            }
            let (f, bw, tx) = bands[rng.index(bands.len())];
            sites.push(SiteRecord {
                site_id: format!("C{:04}", k + 1),
                location: g.unproject(self.point_in_cell(chosen, &mut rng, 0.0)),
                tx_power_dbm: tx,
                antenna_height_m: rng.uniform_range(30.0, 40.0).round(),
                center_freq_mhz: f,
                bandwidth_mhz: bw,
                environment: Environment::Urban,
            });
        }
        Ok(sites)
    }

    fn raster(&self, value_of: impl Fn(CellId) -> f64) -> RasterGrid {
        let g = &self.grid;
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        let cell_deg = g.cell_size_m / k / PIXELS_PER_CELL;
        let ne = g.unproject(ProjectedPoint::new(g.extent()[2], g.extent()[3]));
        let origin = GeoPoint {
            lat: g.anchor.lat - cell_deg,
            lon: g.anchor.lon - cell_deg,
        };
        let n_cols = ((ne.lon - origin.lon) / cell_deg).ceil() as usize + 1;
        let n_rows = ((ne.lat - origin.lat) / cell_deg).ceil() as usize + 1;
        let mut r = RasterGrid {
            origin,
            cell_deg,
            n_cols,
            n_rows,
            values: Vec::with_capacity(n_cols * n_rows),
            nodata: DEFAULT_NODATA,
        };
        for row in 0..n_rows {
            for col in 0..n_cols {
                let v = g.locate(r.pixel_center(col, row)).map_or(DEFAULT_NODATA, &value_of);
                r.values.push(v);
            }
        }
        r
    }
}

fn law_value(spec: &CitySpec, scaled: &BTreeMap<&str, f64>) -> f64 {
    let linear: f64 = spec.layers.iter().map(|l| l.beta * scaled[l.name.as_str()]).sum();
    let extra: f64 = spec
        .terms
        .iter()
        .map(|t| match t {
            LawTerm::Product { a, b, beta } => beta * scaled[a.as_str()] * scaled[b.as_str()],
            LawTerm::Hinge { feature, knot, beta } => beta * (scaled[feature.as_str()] - knot).max(0.0),
        })
        .sum();
    linear + extra
}

/// Generates a city in memory.
pub fn build(spec: &CitySpec) -> Result<City, SynthError> {
    spec.validate()?;
    let n = spec.cells_per_side();
    let grid = GridSpec::anchored(spec.anchor, spec.cell_size_m, n, n);
    let [x0, y0, x1, y1] = grid.extent();
    let half = 0.5 * grid.cell_size_m;
    let bbox_min = grid.anchor;
    let bbox_max = grid.unproject(ProjectedPoint::new(x1 - half, y1 - half));
    debug_assert!(x0 < x1 && y0 < y1);
    let latent = Field::random(&grid, spec.n_activity_bumps, &mut DetRng::new(derive_seed(spec.seed, STREAM_LATENT)));
    let ctx = Ctx { spec, grid, latent };
    let mut files = BTreeMap::new();
    let cells: Vec<CellId> = grid.cells().collect();

    // feature layers, rasterized from their parsed GeoJSON
    let mut sources = Vec::new();
    let mut columns: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (i, layer) in spec.layers.iter().enumerate() {
        let src = ctx.layer_source(i, layer);
        let text = serde_json::to_string(&feature_source_to_geojson(&src)).expect("GeoJSON serializes") + "\n";
        let allocation = match &layer.geometry {
            LayerGeometry::Polygons { allocation, .. } => Some(*allocation),
            _ => None,
        };
        let parsed = parse_feature_source_str(&text, src.kind(), &layer.name, allocation)?;
        let col = rasterize_source(&parsed, &grid)?.column;
        columns.insert(&layer.name, cells.iter().map(|c| col.get(*c)).collect());
        let path = format!("features/{}.geojson", layer.name);
        sources.push(SourceEntry {
            name: layer.name.clone(),
            path: path.clone(),
            kind: src.kind(),
            allocation,
        });
        files.insert(path, text);
    }

    // planted law
    let signal: Vec<f64> = (0..cells.len())
        .map(|i| {
            let scaled: BTreeMap<&str, f64> =
                spec.layers.iter().map(|l| (l.name.as_str(), columns[l.name.as_str()][i] / l.unit)).collect();
            law_value(spec, &scaled)
        })
        .collect();
    let noise_seed = derive_seed(spec.seed, STREAM_LAW_NOISE);
    let law_sd = (sample_variance(&signal) * (1.0 - spec.law_rho) / spec.law_rho).sqrt();
    let intercept = spec.intercept + NOISE_BOUND * law_sd;
    let mut law_rng = DetRng::new(noise_seed);
    let target: Vec<f64> = signal
        .iter()
        .map(|s| intercept + s + law_sd * law_rng.truncated_normal(NOISE_BOUND))
        .collect();

    // sites, footprints and deployed bandwidth from the parsed site table
    let sites_text = sites_to_csv(&ctx.sites()?);
    let sites = parse_sites_str(&sites_text)?;
    let params = PropagationParams::default();
    let fps = footprints(&sites, &grid, &params)?;
    let bandwidth = deployed_bandwidth(&sites, &fps, &grid)?;
    let uncovered = cells.iter().filter(|c| !(bandwidth.get(**c) > 0.0)).count();
    if uncovered > 0 {
        return Err(SynthError::Coverage(uncovered));
    }
    files.insert("sites.csv".into(), sites_text);

    // nighttime lights: every pixel of a cell carries target / bandwidth, up to the sensor ceiling
    let index_of = |c: CellId| c.row * grid.n_cols + c.col;
    let ceiling = spec.ntl_saturation.unwrap_or(f64::INFINITY);
    let luminance = |c: CellId| (target[index_of(c)] / bandwidth.get(c)).min(ceiling);
    let raster = ctx.raster(luminance);
    let raster_text = raster_to_string(&raster);
    let ntl = ntl_weight_series(&parse_raster_str(&raster_text)?, &grid)?;
    let proxy = weighted_proxy(&bandwidth, &ntl)?;
    let v_max = cells.iter().map(|c| luminance(*c)).fold(0.0, f64::max);
    let n_saturated = cells.iter().filter(|c| target[index_of(**c)] / bandwidth.get(**c) >= ceiling).count();
    files.insert("ntl.asc".into(), raster_text);

    // traffic: constant hourly throughput per site
    let mut traffic_rng = DetRng::new(derive_seed(spec.seed, STREAM_TRAFFIC));
    let date = chrono::NaiveDate::parse_from_str(TRAFFIC_DATE, "%Y-%m-%d").expect("valid date");
    let mut traffic = Vec::with_capacity(sites.len() * 24);
    for (site, fp) in sites.iter().zip(&fps) {
        let local: Vec<f64> = fp.cells.iter().map(|(c, _)| target[index_of(*c)]).collect();
        let level = if local.is_empty() {
            grid.locate(site.location).map_or(spec.intercept.max(1.0), |c| target[index_of(c)])
        } else {
            local.iter().sum::<f64>() / local.len() as f64
        };
        let mbps = (20.0 * level * traffic_rng.uniform_range(0.8, 1.2) * 1000.0).round() / 1000.0;
        for hour in 0..24u8 {
            traffic.push(TrafficRecord {
                site_id: site.site_id.clone(),
                date,
                hour,
                dl_throughput_mbps: mbps.max(0.001),
                band: None,
            });
        }
    }
    let traffic_text = traffic_to_csv(&traffic);
    let traffic = parse_traffic_str(&traffic_text)?;
    let served = demand_indicator(&traffic, &fps, None, &grid, TemporalReduction::Mean)?;
    files.insert("traffic.csv".into(), traffic_text);

    // indicator = proxy + offset + noise, realized through per-cell sample counts
    let p: Vec<f64> = cells.iter().map(|c| proxy.get(*c)).collect();
    let ind_sd = (sample_variance(&p) * (1.0 - spec.rho_target) / spec.rho_target).sqrt();
    let offset = NOISE_BOUND * ind_sd;
    let mut ind_rng = DetRng::new(derive_seed(spec.seed, STREAM_INDICATOR_NOISE));
    let wanted: Vec<f64> = p
        .iter()
        .map(|v| v + offset + ind_sd * ind_rng.truncated_normal(NOISE_BOUND))
        .collect();
    let ratio: Vec<f64> = cells.iter().zip(&wanted).map(|(c, w)| w / served.get(*c)).collect();
    let scale = MAX_SAMPLES / ratio.iter().copied().fold(0.0, f64::max);
    let mut meas_rng = DetRng::new(derive_seed(spec.seed, STREAM_MEASUREMENTS));
    let measurements: Vec<MeasurementRecord> = cells
        .iter()
        .zip(&ratio)
        .map(|(c, r)| MeasurementRecord {
            location: grid.unproject(ctx.point_in_cell(*c, &mut meas_rng, 0.1)),
            samples: ((r * scale).round() as u64).max(1),
        })
        .collect();
    let meas_text = measurements_to_csv(&measurements);
    let measurements = parse_measurements_str(&meas_text)?;
    let weights = user_weight_series(&measurements, &grid);
    let indicator = demand_indicator(&traffic, &fps, Some(&weights), &grid, TemporalReduction::Mean)?;
    let achieved = ols_validate(&proxy, &indicator)?.r_squared;
    files.insert("measurements.csv".into(), meas_text);

    let relevant = spec.relevant_layers();
    let truth = Truth {
        name: spec.name.clone(),
        seed: spec.seed,
        noise_seed,
        grid,
        bbox_min,
        bbox_max,
        cell_size_m: spec.cell_size_m,
        rho_target: spec.rho_target,
        law_rho: spec.law_rho,
        intercept,
        beta: spec.layers.iter().map(|l| (l.name.clone(), l.beta / l.unit)).collect(),
        units: spec.layers.iter().map(|l| (l.name.clone(), l.unit)).collect(),
        terms: spec.terms.clone(),
        relevant,
        law_noise_sd: law_sd,
        indicator: IndicatorLaw {
            offset,
            noise_sd: ind_sd,
        },
        proxy_scale: v_max,
        n_saturated,
        n_sites: sites.len(),
        achieved_proxy_r2: achieved,
    };
    files.insert("truth.json".into(), json_text(&truth));
    files.insert("sources.json".into(), json_text(&sources));
    files.insert("spec.json".into(), json_text(spec));
    Ok(City {
        spec: spec.clone(),
        truth,
        sources,
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> CitySpec {
        CitySpec {
            seed,
            extent_km: 18.0,
            n_sites: 10,
            ..Default::default()
        }
    }

    #[test]
    fn noiseless_proxy_is_exact() {
        let city = build(&CitySpec {
            rho_target: 1.0,
            ..small(3)
        })
        .unwrap();
        assert!((city.truth.achieved_proxy_r2 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn calibrated_proxy_r2() {
        let city = build(&small(4)).unwrap();
        assert!((city.truth.achieved_proxy_r2 - 0.763).abs() < 0.08, "{}", city.truth.achieved_proxy_r2);
    }

    #[test]
    fn seeds_share_law_not_realization() {
        let (a, b) = twin_cities(&small(0), 10, 11).unwrap();
        assert_eq!(a.truth.beta, b.truth.beta);
        assert_eq!(a.truth.terms, b.truth.terms);
        assert_ne!(a.files["sites.csv"], b.files["sites.csv"]);
        let again = build(&CitySpec { seed: 10, ..small(0) }).unwrap();
        assert_eq!(again.files, a.files);
    }

    #[test]
    fn invalid_specs() {
        assert!(build(&CitySpec { rho_target: 0.0, ..small(1) }).is_err());
        assert!(build(&CitySpec { extent_km: 9.0, ..small(1) }).is_err());
        let mut dup = small(1);
        dup.layers.push(dup.layers[0].clone());
        assert!(matches!(build(&dup), Err(SynthError::InvalidSpec(_))));
    }
}
