use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::de::DeserializeOwned;
use serde::Serialize;
use spectrum_demand::demand::{
    deployed_bandwidth, demand_indicator, ntl_weight_series, ols_validate, user_weight_series, weighted_proxy, CellSeries,
};
use spectrum_demand::features::{assemble, rank_features_with, rasterize_source, FeatureTable, ImportanceReport, Mask};
use spectrum_demand::geo::{make_grid, GeoPoint, GridSpec};
use spectrum_demand::ingest::{parse_feature_source, parse_measurements, parse_raster, parse_sites, parse_traffic};
use spectrum_demand::pipeline::{
    metrics_csv, run_baseline, run_combined, run_cross_region, run_reduced, spatial_split, ModelArtifact, ModelKind,
    ScenarioData, ScenarioKind, SplitPlan,
};
use spectrum_demand::propagation::footprints;
use spectrum_demand::synth::{generate, CitySpec, SourceEntry};

use crate::config::{sha256_file, Loaded, RegionPaths};
use crate::{CliError, Summary};

const CELL_SERIES: [(&str, &str); 5] = [
    ("proxy", "proxy"),
    ("bandwidth", "proxy"),
    ("ntl_weight", "proxy"),
    ("indicator", "indicator"),
    ("user_weight", "indicator"),
];

fn f4(v: f64) -> String {
    format!("{v:.4}")
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    info!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    write(path, &s)
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn input(path: &Path) -> Result<&Path, CliError> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingInput(path.to_path_buf()))
    }
}

impl Loaded {
    fn out(&self, rel: &str) -> PathBuf {
        self.run_dir.join(rel)
    }

    /// Path of a prior stage's output, or the error naming that stage.
    fn need(&self, rel: &str, stage: &'static str) -> Result<PathBuf, CliError> {
        let p = self.out(rel);
        if p.is_file() {
            Ok(p)
        } else {
            Err(CliError::MissingStage { stage, path: p })
        }
    }

    /// `(file suffix, paths)` for the primary and, when configured, the test region.
    fn regions(&self) -> Vec<(&'static str, &RegionPaths)> {
        let mut v = vec![("", &self.primary)];
        if let Some(t) = &self.test {
            v.push(("_test", t));
        }
        v
    }

    fn grid(&self, suffix: &str) -> Result<GridSpec, CliError> {
        read_json(&self.need(&format!("grid{suffix}.json"), "grid")?)
    }

    fn series(&self, file: &str, stage: &'static str, grid: GridSpec) -> Result<CellSeries, CliError> {
        let name = file.trim_end_matches(".csv").trim_end_matches("_test");
        Ok(CellSeries::from_csv(&read(&self.need(file, stage)?)?, grid, name, "")?)
    }

    fn table(&self, suffix: &str) -> Result<FeatureTable, CliError> {
        let grid = self.grid(suffix)?;
        Ok(FeatureTable::from_csv(&read(&self.need(&format!("features{suffix}.csv"), "features")?)?, grid)?)
    }

    fn has_test(&self) -> bool {
        self.test.is_some()
    }
}

fn bbox(region: &RegionPaths) -> Result<(GeoPoint, GeoPoint), CliError> {
    if let Some(b) = region.bbox {
        return Ok(b);
    }
    let Some(dir) = &region.dataset_dir else {
        return Err(CliError::Config("bbox_min/bbox_max are required without a dataset_dir".into()));
    };
    let truth = dir.join("truth.json");
    if !truth.is_file() {
        return Err(CliError::Config(format!("no bbox configured and {} does not exist", truth.display())));
    }
    #[derive(serde::Deserialize)]
    struct Bbox {
        bbox_min: GeoPoint,
        bbox_max: GeoPoint,
    }
    let b: Bbox = read_json(&truth)?;
    Ok((b.bbox_min, b.bbox_max))
}

pub fn grid(l: &Loaded) -> Result<Summary, CliError> {
    let mut s = Summary::default();
    for (suffix, region) in l.regions() {
        let (lo, hi) = bbox(region)?;
        let grid = make_grid(lo, hi, l.config.cell_size_m)?;
        write_json(&l.out(&format!("grid{suffix}.json")), &grid)?;
        if suffix.is_empty() {
            s.push("n_cols", grid.n_cols).push("n_rows", grid.n_rows).push("cells", grid.n_cells());
        } else {
            s.push("test_cells", grid.n_cells());
        }
    }
    Ok(s)
}

pub fn proxy(l: &Loaded) -> Result<Summary, CliError> {
    let mut s = Summary::default();
    for (suffix, region) in l.regions() {
        let grid = l.grid(suffix)?;
        let sites = parse_sites(input(&region.sites)?)?;
        let fps = footprints(&sites, &grid, &l.config.propagation)?;
        let bandwidth = deployed_bandwidth(&sites, &fps, &grid)?;
        let ntl = ntl_weight_series(&parse_raster(input(&region.ntl)?)?, &grid)?;
        let proxy = weighted_proxy(&bandwidth, &ntl)?;
        write(&l.out(&format!("bandwidth{suffix}.csv")), &bandwidth.to_csv())?;
        write(&l.out(&format!("ntl_weight{suffix}.csv")), &ntl.to_csv())?;
        write(&l.out(&format!("proxy{suffix}.csv")), &proxy.to_csv())?;
        let uncovered = grid.n_cells() - bandwidth.values.values().filter(|v| **v > 0.0).count();
        if uncovered > 0 {
            warn!("{uncovered} cells have no coverage");
        }
        let key = |k: &str| if suffix.is_empty() { k.to_string() } else { format!("test_{k}") };
        s.push(key("sites"), sites.len()).push(key("cells"), proxy.len()).push(key("uncovered"), uncovered);
    }
    Ok(s)
}

pub fn indicator(l: &Loaded) -> Result<Summary, CliError> {
    let grid = l.grid("")?;
    let r = &l.primary;
    let sites = parse_sites(input(&r.sites)?)?;
    let traffic = parse_traffic(input(&r.traffic)?)?;
    let measurements = parse_measurements(input(&r.measurements)?)?;
    let fps = footprints(&sites, &grid, &l.config.propagation)?;
    let weights = user_weight_series(&measurements, &grid);
    let indicator = demand_indicator(&traffic, &fps, Some(&weights), &grid, l.config.temporal_reduction)?;
    write(&l.out("user_weight.csv"), &weights.to_csv())?;
    write(&l.out("indicator.csv"), &indicator.to_csv())?;
    let mut s = Summary::default();
    s.push("cells", indicator.len()).push("total", f4(indicator.total()));
    Ok(s)
}

pub fn validate_proxy(l: &Loaded) -> Result<Summary, CliError> {
    let grid = l.grid("")?;
    let proxy = l.series("proxy.csv", "proxy", grid)?;
    let indicator = l.series("indicator.csv", "indicator", grid)?;
    let fit = ols_validate(&proxy, &indicator)?;
    write_json(&l.out("validation.json"), &fit)?;
    let mut s = Summary::default();
    s.push("r2", f4(fit.r_squared))
        .push("slope", format!("{:.6e}", fit.slope))
        .push("intercept", format!("{:.6e}", fit.intercept))
        .push("n", fit.n);
    Ok(s)
}

fn feature_columns(region: &RegionPaths, grid: &GridSpec) -> Result<Vec<CellSeries>, CliError> {
    let list = input(&region.sources)?;
    let entries: Vec<SourceEntry> = read_json(list)?;
    if entries.is_empty() {
        return Err(CliError::Validation(format!("{} lists no feature sources", list.display())));
    }
    let base = list.parent().unwrap_or(Path::new("."));
    let mut columns = Vec::with_capacity(entries.len());
    for e in &entries {
        let path = base.join(&e.path);
        let src = parse_feature_source(input(&path)?, e.kind, &e.name, e.allocation)?;
        let r = rasterize_source(&src, grid)?;
        if r.dropped > 0 {
            warn!("{}: {} geometries fell outside the grid", e.name, r.dropped);
        }
        columns.push(r.column);
    }
    Ok(columns)
}

pub fn features(l: &Loaded) -> Result<Summary, CliError> {
    let mut s = Summary::default();
    let mut names: Option<Vec<String>> = None;
    for (suffix, region) in l.regions() {
        let grid = l.grid(suffix)?;
        let proxy = l.series(&format!("proxy{suffix}.csv"), "proxy", grid)?;
        let columns = feature_columns(region, &grid)?;
        let table = assemble(&columns, &proxy, &Mask::default())?;
        match &names {
            None => names = Some(table.names.clone()),
            Some(n) if *n != table.names => {
                return Err(CliError::Validation(format!(
                    "test region features {:?} differ from primary features {:?}",
                    table.names, n
                )))
            }
            Some(_) => {}
        }
        write(&l.out(&format!("features{suffix}.csv")), &table.to_csv())?;
        if suffix.is_empty() {
            s.push("rows", table.n_rows()).push("features", table.n_features());
        } else {
            s.push("test_rows", table.n_rows());
        }
    }
    Ok(s)
}

pub fn rank(l: &Loaded) -> Result<Summary, CliError> {
    let table = l.table("")?;
    let report = rank_features_with(&table, l.config.seed, &l.config.rank)?;
    write_json(&l.out("importance.json"), &report)?;
    let mut s = Summary::default();
    s.push("features", report.features.len()).push("top", report.top(5).join(","));
    Ok(s)
}

pub fn split(l: &Loaded) -> Result<Summary, CliError> {
    let table = l.table("")?;
    let m = &l.config.model;
    let plan = spatial_split(&table, m.k_clusters, m.train_frac, l.config.seed)?;
    write_json(&l.out("split.json"), &plan)?;
    let mut s = Summary::default();
    s.push("clusters", plan.k).push("train", plan.train.len()).push("test", plan.test.len());
    Ok(s)
}

fn fingerprints(l: &Loaded, run_files: &[&str]) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (suffix, r) in l.regions() {
        for (role, path) in [
            ("sites", &r.sites),
            ("traffic", &r.traffic),
            ("measurements", &r.measurements),
            ("ntl", &r.ntl),
            ("sources", &r.sources),
        ] {
            if path.is_file() {
                out.insert(format!("{role}{suffix}"), sha256_file(path)?);
            }
        }
    }
    for f in run_files {
        out.insert((*f).to_string(), sha256_file(&l.out(f))?);
    }
    Ok(out)
}

/// Stored model artifacts in evaluation order, with whether they need the test region.
const MODELS: [(&str, bool); 5] = [
    ("baseline", false),
    ("combined_ridge", false),
    ("combined_gbr", false),
    ("cross_region_ridge", true),
    ("cross_region_gbr", true),
];

fn model_path(name: &str) -> String {
    format!("models/{name}.json")
}

fn primary_model(l: &Loaded) -> &'static str {
    match l.config.model.kind {
        ModelKind::Ridge => "combined_ridge",
        ModelKind::Gbr => "combined_gbr",
    }
}

fn best_single_feature(table: &FeatureTable) -> Result<String, CliError> {
    let mut best: Option<(f64, &String)> = None;
    for name in &table.names {
        let r2 = run_baseline(table, name)?.metrics.r2;
        if best.is_none_or(|(b, _)| r2 > b) {
            best = Some((r2, name));
        }
    }
    best.map(|(_, n)| n.clone()).ok_or_else(|| CliError::Validation("feature table has no columns".into()))
}

pub fn train(l: &Loaded) -> Result<Summary, CliError> {
    let table = l.table("")?;
    let plan: SplitPlan = read_json(&l.need("split.json", "split")?)?;
    let test = if l.has_test() { Some(l.table("_test")?) } else { None };
    let mut used = vec!["features.csv", "split.json"];
    if test.is_some() {
        used.push("features_test.csv");
    }
    let prints = fingerprints(l, &used)?;
    let cfg = l.config.model;
    let seed = l.config.seed;
    let feature = match &l.config.baseline_feature {
        Some(f) => f.clone(),
        None => best_single_feature(&table)?,
    };
    let mut s = Summary::default();
    let store = |name: &str, mut a: ModelArtifact, s: &mut Summary| -> Result<(), CliError> {
        a.fingerprints = prints.clone();
        write(&l.out(&model_path(name)), &a.to_json())?;
        s.push(format!("{name}_r2"), f4(a.metrics.r2));
        Ok(())
    };
    let mut base = run_baseline(&table, &feature)?;
    base.seed = seed;
    s.push("baseline_feature", &feature);
    store("baseline", base, &mut s)?;
    for kind in [ModelKind::Ridge, ModelKind::Gbr] {
        let a = run_combined(&table, &cfg.with_kind(kind), seed, Some(&plan))?;
        store(&format!("combined_{}", kind.as_str()), a, &mut s)?;
    }
    if let Some(test) = &test {
        for kind in [ModelKind::Ridge, ModelKind::Gbr] {
            let a = run_cross_region(&table, test, &cfg.with_kind(kind), seed)?;
            store(&format!("cross_region_{}", kind.as_str()), a, &mut s)?;
        }
    }
    let primary = read(&l.out(&model_path(primary_model(l))))?;
    write(&l.out("artifact.json"), &primary)?;
    Ok(s)
}

fn scenario_data(a: &ModelArtifact, table: &FeatureTable, test: Option<&FeatureTable>) -> Result<ScenarioData, CliError> {
    Ok(match a.scenario {
        ScenarioKind::Baseline | ScenarioKind::Combined => ScenarioData::Combined(table.clone()),
        ScenarioKind::CrossRegion => ScenarioData::CrossRegion {
            train: table.clone(),
            test: test
                .cloned()
                .ok_or_else(|| CliError::Config("cross-region artifact but no cross_region section".into()))?,
        },
    })
}

fn stored_models(l: &Loaded) -> Result<Vec<(&'static str, ModelArtifact)>, CliError> {
    let mut out = Vec::new();
    for (name, cross) in MODELS {
        if cross && !l.has_test() {
            continue;
        }
        let path = l.need(&model_path(name), "train")?;
        out.push((name, ModelArtifact::from_json(&read(&path)?)?));
    }
    Ok(out)
}

pub fn evaluate(l: &Loaded) -> Result<Summary, CliError> {
    let models = stored_models(l)?;
    let table = l.table("")?;
    let test = if l.has_test() { Some(l.table("_test")?) } else { None };
    let mut s = Summary::default();
    let primary = primary_model(l);
    for (name, a) in &models {
        let m = a.recompute_metrics(&scenario_data(a, &table, test.as_ref())?)?;
        if m != a.metrics {
            return Err(CliError::Validation(format!(
                "{name}: recomputed metrics {m:?} differ from stored {:?}",
                a.metrics
            )));
        }
        if *name == primary {
            s.0.insert(0, ("rmse".into(), f4(m.rmse)));
            s.0.insert(0, ("r2".into(), f4(m.r2)));
        }
        s.push(format!("{name}_r2"), f4(m.r2)).push(format!("{name}_rmse"), f4(m.rmse));
    }
    let rows: Vec<(&str, &ModelArtifact)> = models.iter().map(|(n, a)| (*n, a)).collect();
    write(&l.out("metrics.csv"), &metrics_csv(&rows))?;
    s.0.insert(0, ("models".into(), models.len().to_string()));
    Ok(s)
}

pub fn reduce(l: &Loaded) -> Result<Summary, CliError> {
    let report: ImportanceReport = read_json(&l.need("importance.json", "rank")?)?;
    let table = l.table("")?;
    let test = if l.has_test() { Some(l.table("_test")?) } else { None };
    let kind = l.config.model.kind.as_str();
    let mut targets = vec![(format!("combined_{kind}"), "")];
    if l.has_test() {
        targets.push((format!("cross_region_{kind}"), "cross_"));
    }
    let mut s = Summary::default();
    let mut reduced = Vec::new();
    for (name, prefix) in &targets {
        let mut a = ModelArtifact::from_json(&read(&l.need(&model_path(name), "train")?)?)?;
        if report.features != a.features {
            return Err(CliError::Validation("importance.json does not match the trained feature set; rerun `sdk rank`".into()));
        }
        a.importance = report.clone();
        let data = scenario_data(&a, &table, test.as_ref())?;
        s.push(format!("{prefix}full_r2"), f4(a.metrics.r2));
        for &n in &l.config.reduce_top_n {
            let r = run_reduced(&a, &data, n)?;
            let out = format!("{name}_top{n}");
            write(&l.out(&model_path(&out)), &r.to_json())?;
            s.push(format!("{prefix}top{n}_r2"), f4(r.metrics.r2))
                .push(format!("{prefix}top{n}_delta"), f4(r.reduced.as_ref().map_or(0.0, |x| x.delta_r2)));
            reduced.push((out, r));
        }
    }
    let rows: Vec<(&str, &ModelArtifact)> = reduced.iter().map(|(n, a)| (n.as_str(), a)).collect();
    write(&l.out("reduced.csv"), &metrics_csv(&rows))?;
    Ok(s)
}

pub fn heatmap(l: &Loaded, series: &str) -> Result<Summary, CliError> {
    let grid = l.grid("")?;
    let cells = if let Some((_, stage)) = CELL_SERIES.iter().find(|(n, _)| *n == series) {
        l.series(&format!("{series}.csv"), stage, grid)?
    } else {
        let table = l.table("")?;
        let values: Vec<f64> = if series == "target" {
            table.target.clone()
        } else {
            let j = table.column_index(series).map_err(|_| {
                let known: Vec<&str> = CELL_SERIES.iter().map(|(n, _)| *n).chain(["target"]).collect();
                CliError::Validation(format!(
                    "unknown series '{series}'; expected one of {} or a feature column ({})",
                    known.join(", "),
                    table.names.join(", ")
                ))
            })?;
            table.columns[j].clone()
        };
        let mut out = CellSeries::new(grid, series, "");
        out.values = table.cell_ids.iter().copied().zip(values).collect();
        out
    };
    let mut geo = serde_json::to_string(&cells.to_geojson()).expect("GeoJSON serializes");
    geo.push('\n');
    write(&l.out(&format!("heatmap_{series}.geojson")), &geo)?;
    write(&l.out(&format!("heatmap_{series}.csv")), &cells.to_csv())?;
    let max = cells.values.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = Summary::default();
    s.push("series", series).push("cells", cells.len()).push("max", f4(if cells.is_empty() { 0.0 } else { max }));
    Ok(s)
}

pub fn synth(l: &Loaded) -> Result<Summary, CliError> {
    let Some(cfg) = &l.config.synth else {
        return Err(CliError::Config("the config has no synth section".into()));
    };
    let dir = l
        .primary
        .dataset_dir
        .as_ref()
        .ok_or_else(|| CliError::Config("synth needs dataset_dir".into()))?;
    let city = generate(&cfg.city, dir)?;
    let mut s = Summary::default();
    s.push("cells", city.truth.grid.n_cells())
        .push("sites", city.truth.n_sites)
        .push("proxy_r2", f4(city.truth.achieved_proxy_r2));
    if let Some(test) = &l.test {
        let tdir = test
            .dataset_dir
            .as_ref()
            .ok_or_else(|| CliError::Config("synth needs cross_region.dataset_dir".into()))?;
        let spec = CitySpec {
            seed: cfg.twin_seed.unwrap_or(cfg.city.seed.wrapping_add(1)),
            ..cfg.city.clone()
        };
        let twin = generate(&spec, tdir)?;
        s.push("twin_cells", twin.truth.grid.n_cells())
            .push("twin_proxy_r2", f4(twin.truth.achieved_proxy_r2));
    }
    Ok(s)
}
