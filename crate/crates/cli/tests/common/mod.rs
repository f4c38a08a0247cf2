#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

pub const CHAIN: [&str; 11] = [
    "synth",
    "grid",
    "proxy",
    "indicator",
    "validate-proxy",
    "features",
    "rank",
    "split",
    "train",
    "evaluate",
    "reduce",
];

pub fn demo_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("demo").join("demo.json")
}

pub fn sdk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdk"))
        .args(args)
        .env("SDK_LOG_LEVEL", "error")
        .output()
        .expect("sdk runs")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Parses `stage=<name> status=ok k=v ...` into a map.
pub fn parse_summary(line: &str) -> BTreeMap<String, String> {
    line.split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

pub fn stage(name: &str, config: &Path, extra: &[&str]) -> (BTreeMap<String, String>, Duration) {
    let cfg = config.to_str().unwrap();
    let mut args = vec![name, "--config", cfg];
    args.extend_from_slice(extra);
    let t = Instant::now();
    let out = sdk(&args);
    let elapsed = t.elapsed();
    assert!(out.status.success(), "{name} failed: {}", stderr(&out));
    let line = stdout(&out);
    let map = parse_summary(line.trim());
    assert_eq!(map.get("stage").map(String::as_str), Some(name), "{line}");
    assert_eq!(map.get("status").map(String::as_str), Some("ok"), "{line}");
    (map, elapsed)
}

/// Copies `config` into `dir` and returns the copy's path.
pub fn place_config(dir: &Path, config: &Path) -> PathBuf {
    let dest = dir.join("config.json");
    std::fs::copy(config, &dest).unwrap();
    dest
}

pub fn write_config(dir: &Path, json: &str) -> PathBuf {
    let dest = dir.join("config.json");
    std::fs::write(&dest, json).unwrap();
    dest
}

pub type Summaries = BTreeMap<&'static str, (BTreeMap<String, String>, Duration)>;

pub fn run_chain(config: &Path) -> Summaries {
    CHAIN.iter().map(|s| (*s, stage(s, config, &[]))).collect()
}

/// Every file under `dir` keyed by its relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

pub fn num(map: &BTreeMap<String, String>, key: &str) -> f64 {
    map.get(key).unwrap_or_else(|| panic!("missing {key} in {map:?}")).parse().unwrap()
}
