#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use walkforge::config::{load_config, PipelineConfig};

pub fn house_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/house")
}

/// The shipped house config with the run directory moved to `run_dir` and
/// any further `KEY=value` overrides applied through the environment.
pub fn house_config(run_dir: &Path, extra: &[(&str, &str)]) -> PipelineConfig {
    let mut env = vec![("WALKFORGE_RUN_DIR".to_string(), run_dir.display().to_string())];
    env.extend(extra.iter().map(|(k, v)| (format!("WALKFORGE_{k}"), v.to_string())));
    load_config(&house_dir().join("walkforge.conf"), env).unwrap()
}

/// Every file under `root`, keyed by relative path.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

pub fn lines(path: &Path) -> usize {
    std::fs::read_to_string(path).map(|t| t.lines().filter(|l| !l.trim().is_empty()).count()).unwrap_or(0)
}
