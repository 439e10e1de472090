//! Long-format results CSV and table pivots.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const RESULT_COLUMNS: [&str; 7] = ["task", "method", "seed", "n_train", "metric", "value", "std"];

/// One metric value. Aggregate rows have no seed and carry the across-seed std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub task: String,
    pub method: String,
    pub seed: Option<u64>,
    pub n_train: usize,
    pub metric: String,
    pub value: f64,
    pub std: Option<f64>,
}

/// Appends rows, writing the header only when the file is new or empty.
pub fn emit_results(rows: &[ResultRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(RESULT_COLUMNS)?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Into::into)).collect()
}

/// Task-by-method table of aggregate `metric` values as `mean ± std`. When a
/// key has several budgets, the largest `n_train` wins.
pub fn pivot(rows: &[ResultRow], metric: &str) -> String {
    let mut cells: BTreeMap<(String, String), (usize, f64, Option<f64>)> = BTreeMap::new();
    let mut methods: Vec<String> = Vec::new();
    for r in rows.iter().filter(|r| r.seed.is_none() && r.metric == metric) {
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
        let key = (r.task.clone(), r.method.clone());
        if cells.get(&key).is_none_or(|c| r.n_train >= c.0) {
            cells.insert(key, (r.n_train, r.value, r.std));
        }
    }
    let tasks: Vec<String> = {
        let mut t: Vec<String> = cells.keys().map(|k| k.0.clone()).collect();
        t.dedup();
        t
    };
    let mut out = String::from("task");
    for m in &methods {
        out.push_str(&format!("\t{m}"));
    }
    out.push('\n');
    for t in &tasks {
        out.push_str(t);
        for m in &methods {
            match cells.get(&(t.clone(), m.clone())) {
                Some((_, v, Some(s))) => out.push_str(&format!("\t{v:.3} ± {s:.2}")),
                Some((_, v, None)) => out.push_str(&format!("\t{v:.3}")),
                None => out.push_str("\t-"),
            }
        }
        out.push('\n');
    }
    out
}
