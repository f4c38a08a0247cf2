use spectrum_demand::demand::{
    deployed_bandwidth, demand_indicator, ntl_weight_series, ols_validate, user_weight_series, weighted_proxy,
    CellSeries, TemporalReduction,
};
use spectrum_demand::features::{assemble, rasterize_source, FeatureTable, Mask};
use spectrum_demand::geo::make_grid;
use spectrum_demand::ingest::{
    parse_feature_source_str, parse_measurements_str, parse_raster_str, parse_sites_str, parse_traffic_str,
};
use spectrum_demand::pipeline::{run_baseline, run_combined, run_cross_region, ModelArtifact, ModelConfig, ScenarioData};
use spectrum_demand::propagation::{footprints, PropagationParams};
use spectrum_demand::synth::{build, twin_cities, City, CitySpec};

fn small_spec() -> CitySpec {
    CitySpec {
        name: "small".into(),
        extent_km: 30.0,
        n_sites: 30,
        ..Default::default()
    }
}

struct Region {
    proxy: CellSeries,
    indicator: CellSeries,
    table: FeatureTable,
}

fn process(city: &City) -> Region {
    let t = &city.truth;
    let grid = make_grid(t.bbox_min, t.bbox_max, t.cell_size_m).unwrap();
    assert_eq!(grid, t.grid);
    let sites = parse_sites_str(&city.files["sites.csv"]).unwrap();
    let fps = footprints(&sites, &grid, &PropagationParams::default()).unwrap();
    let bandwidth = deployed_bandwidth(&sites, &fps, &grid).unwrap();
    let ntl = ntl_weight_series(&parse_raster_str(&city.files["ntl.asc"]).unwrap(), &grid).unwrap();
    let proxy = weighted_proxy(&bandwidth, &ntl).unwrap();
    let traffic = parse_traffic_str(&city.files["traffic.csv"]).unwrap();
    let weights = user_weight_series(&parse_measurements_str(&city.files["measurements.csv"]).unwrap(), &grid);
    let indicator = demand_indicator(&traffic, &fps, Some(&weights), &grid, TemporalReduction::Mean).unwrap();
    let columns: Vec<CellSeries> = city
        .sources
        .iter()
        .map(|e| {
            let src = parse_feature_source_str(&city.files[&e.path], e.kind, &e.name, e.allocation).unwrap();
            rasterize_source(&src, &grid).unwrap().column
        })
        .collect();
    let table = assemble(&columns, &proxy, &Mask::default()).unwrap();
    Region { proxy, indicator, table }
}

#[test]
fn library_chain_on_a_synthetic_city() {
    let city = build(&small_spec()).unwrap();
    let r = process(&city);
    assert_eq!(r.proxy.len(), city.truth.grid.n_cells());

    let fit = ols_validate(&r.proxy, &r.indicator).unwrap();
    assert!((fit.r_squared - city.truth.achieved_proxy_r2).abs() < 1e-9, "{fit:?}");
    assert!(fit.slope > 0.0);

    let cfg = ModelConfig::default();
    let combined = run_combined(&r.table, &cfg, 42, None).unwrap();
    let baseline = run_baseline(&r.table, "day_population").unwrap();
    assert!(combined.metrics.r2 > baseline.metrics.r2, "{:?} vs {:?}", combined.metrics, baseline.metrics);
    assert_eq!(combined.metrics.n_train + combined.metrics.n_test, r.table.n_rows());

    let reloaded = ModelArtifact::from_json(&combined.to_json()).unwrap();
    let data = ScenarioData::Combined(r.table.clone());
    assert_eq!(reloaded.recompute_metrics(&data).unwrap(), combined.metrics);
    assert_eq!(run_combined(&r.table, &cfg, 42, None).unwrap().to_json(), combined.to_json());
}

#[test]
fn cross_region_uses_every_test_cell() {
    let (a, b) = twin_cities(&small_spec(), 5, 6).unwrap();
    let (ra, rb) = (process(&a), process(&b));
    assert_eq!(ra.table.names, rb.table.names);
    let m = run_cross_region(&ra.table, &rb.table, &ModelConfig::default(), 42).unwrap();
    assert_eq!(m.metrics.n_train, ra.table.n_rows());
    assert_eq!(m.metrics.n_test, rb.table.n_rows());
    assert!(m.metrics.r2 > 0.3, "{:?}", m.metrics);
}
