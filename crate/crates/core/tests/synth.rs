use std::collections::BTreeMap;

use spectrum_demand::demand::{deployed_bandwidth, ntl_weight_series, weighted_proxy};
use spectrum_demand::features::{assemble, rasterize_source, Mask};
use spectrum_demand::ingest::{parse_feature_source, parse_measurements, parse_raster, parse_sites, parse_traffic};
use spectrum_demand::ml::fit_ols;
use spectrum_demand::propagation::{footprints, PropagationParams};
use spectrum_demand::synth::{generate, CitySpec, SourceEntry, Truth};

fn small(seed: u64) -> CitySpec {
    CitySpec {
        seed,
        extent_km: 21.0,
        n_sites: 15,
        ..Default::default()
    }
}

#[test]
fn dataset_files_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let city = generate(&small(5), dir.path()).unwrap();
    let d = dir.path();
    let sites = parse_sites(d.join("sites.csv")).unwrap();
    assert_eq!(sites.len(), city.truth.n_sites);
    let traffic = parse_traffic(d.join("traffic.csv")).unwrap();
    assert_eq!(traffic.len(), 24 * sites.len());
    let meas = parse_measurements(d.join("measurements.csv")).unwrap();
    assert_eq!(meas.len(), city.truth.grid.n_cells());
    let raster = parse_raster(d.join("ntl.asc")).unwrap();
    assert!(raster.valid_pixels().count() >= city.truth.grid.n_cells());
    let truth: Truth = serde_json::from_str(&std::fs::read_to_string(d.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth, city.truth);
    let sources: Vec<SourceEntry> = serde_json::from_str(&std::fs::read_to_string(d.join("sources.json")).unwrap()).unwrap();
    assert_eq!(sources.len(), city.spec.layers.len());
    for s in &sources {
        let src = parse_feature_source(d.join(&s.path), s.kind, &s.name, s.allocation).unwrap();
        assert_eq!(src.name, s.name);
    }
}

#[test]
fn noiseless_linear_law_recovers_betas() {
    let spec = CitySpec {
        law_rho: 1.0,
        rho_target: 1.0,
        terms: Vec::new(),
        ntl_saturation: None,
        ..small(9)
    };
    let dir = tempfile::tempdir().unwrap();
    let city = generate(&spec, dir.path()).unwrap();
    let d = dir.path();
    let grid = city.truth.grid;
    let mut columns = Vec::new();
    for s in &city.sources {
        let src = parse_feature_source(d.join(&s.path), s.kind, &s.name, s.allocation).unwrap();
        columns.push(rasterize_source(&src, &grid).unwrap().column);
    }
    let sites = parse_sites(d.join("sites.csv")).unwrap();
    let fps = footprints(&sites, &grid, &PropagationParams::default()).unwrap();
    let bw = deployed_bandwidth(&sites, &fps, &grid).unwrap();
    let ntl = ntl_weight_series(&parse_raster(d.join("ntl.asc")).unwrap(), &grid).unwrap();
    let target = weighted_proxy(&bw, &ntl).unwrap().scaled(city.truth.proxy_scale);
    let table = assemble(&columns, &target, &Mask::All).unwrap();
    let fit = fit_ols(table.matrix().view(), &table.target).unwrap();
    let raw: BTreeMap<&str, f64> = table.names.iter().map(String::as_str).zip(fit.raw_coefficients()).collect();
    for (name, beta) in &city.truth.beta {
        let got = raw[name.as_str()];
        if *beta > 0.0 {
            assert!(((got - beta) / beta).abs() < 0.01, "{name}: {got} vs {beta}");
        } else {
            assert!(got.abs() < 1e-6 * city.truth.beta.values().fold(0.0_f64, |m, b| m.max(*b)), "{name}: {got}");
        }
    }
    assert!((fit.raw_intercept() - city.truth.intercept).abs() < 1e-6 * city.truth.intercept.max(1.0));
}

#[test]
fn generation_is_byte_stable() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let spec = small(12);
    let city = generate(&spec, a.path()).unwrap();
    generate(&spec, b.path()).unwrap();
    for rel in city.files.keys() {
        assert_eq!(std::fs::read(a.path().join(rel)).unwrap(), std::fs::read(b.path().join(rel)).unwrap(), "{rel}");
    }
}
