//! Aggregation of run reports into best-model and average tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cv::RunReport;
use crate::error::{Error, Result};

/// Column labels of a complete comparison, in table order.
pub const CANONICAL_COLUMNS: [&str; 8] = ["CMI_1", "CI_1", "CMI_2", "CI_2", "CMI_3", "CI_3", "MI", "I"];

pub const ROW_LABELS: [&str; 4] = ["F1_train", "F1_valid", "T_train (s)", "T_test (s)"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanRow {
    pub arch: String,
    pub models: usize,
    pub f1_train: f64,
    pub f1_valid: f64,
    pub t_train_seconds: f64,
    pub t_test_seconds: f64,
    pub parameter_count: f64,
    pub serialized_bytes: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub best: RunReport,
    pub mean: MeanRow,
}

/// Best report by validation F1 (ties to the lower model index) and the
/// arithmetic mean of every numeric field.
pub fn aggregate_reports(reports: &[RunReport]) -> Result<Aggregate> {
    let first = reports.first().ok_or_else(|| Error::Invalid("no reports to aggregate".into()))?;
    let mut best = first;
    for r in &reports[1..] {
        if r.f1_valid > best.f1_valid || (r.f1_valid == best.f1_valid && r.model_index < best.model_index) {
            best = r;
        }
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&RunReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Ok(Aggregate {
        best: best.clone(),
        mean: MeanRow {
            arch: first.arch.clone(),
            models: reports.len(),
            f1_train: mean(|r| r.f1_train),
            f1_valid: mean(|r| r.f1_valid),
            t_train_seconds: mean(|r| r.t_train_seconds),
            t_test_seconds: mean(|r| r.t_test_seconds),
            parameter_count: mean(|r| r.parameter_count as f64),
            serialized_bytes: mean(|r| r.serialized_bytes as f64),
        },
    })
}

/// Aggregates per architecture label.
pub fn aggregate_by_arch(reports: &[RunReport]) -> Result<BTreeMap<String, Aggregate>> {
    let mut groups: BTreeMap<String, Vec<RunReport>> = BTreeMap::new();
    for r in reports {
        groups.entry(r.arch.clone()).or_default().push(r.clone());
    }
    groups.into_iter().map(|(k, v)| Ok((k, aggregate_reports(&v)?))).collect()
}

/// Table columns: the eight canonical labels, present or not, followed by
/// any other labels in sorted order.
pub fn column_order(groups: &BTreeMap<String, Aggregate>) -> Vec<String> {
    let mut cols: Vec<String> = CANONICAL_COLUMNS.iter().map(|s| s.to_string()).collect();
    cols.extend(groups.keys().filter(|k| !CANONICAL_COLUMNS.contains(&k.as_str())).cloned());
    cols
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub title: String,
    pub columns: Vec<String>,
    /// `rows[i][j]` is row `ROW_LABELS[i]` of column `j`; `None` when the
    /// column has no reports.
    pub rows: Vec<Vec<Option<f64>>>,
}

fn build_table(title: &str, groups: &BTreeMap<String, Aggregate>, pick: impl Fn(&Aggregate) -> [f64; 4]) -> Table {
    let columns = column_order(groups);
    let mut rows = vec![Vec::with_capacity(columns.len()); 4];
    for c in &columns {
        let values = groups.get(c).map(&pick);
        for (i, row) in rows.iter_mut().enumerate() {
            row.push(values.map(|v| v[i]));
        }
    }
    Table {
        title: title.to_string(),
        columns,
        rows,
    }
}

pub fn best_table(groups: &BTreeMap<String, Aggregate>) -> Table {
    build_table("Best models by validation F1", groups, |a| {
        [a.best.f1_train, a.best.f1_valid, a.best.t_train_seconds, a.best.t_test_seconds]
    })
}

pub fn mean_table(groups: &BTreeMap<String, Aggregate>) -> Table {
    build_table("Average over models", groups, |a| {
        [a.mean.f1_train, a.mean.f1_valid, a.mean.t_train_seconds, a.mean.t_test_seconds]
    })
}

fn cell(row: usize, v: Option<f64>) -> String {
    match v {
        None => "-".into(),
        Some(v) if row < 2 => format!("{v:.4}"),
        Some(v) => format!("{v:.2}"),
    }
}

impl Table {
    pub fn to_markdown(&self) -> String {
        let mut s = format!("### {}\n\n| |", self.title);
        for c in &self.columns {
            write!(s, " {c} |").unwrap();
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(self.columns.len()));
        s.push('\n');
        for (i, row) in self.rows.iter().enumerate() {
            write!(s, "| {} |", ROW_LABELS[i]).unwrap();
            for &v in row {
                write!(s, " {} |", cell(i, v)).unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["metric".to_string()];
        header.extend(self.columns.iter().cloned());
        w.write_record(&header)?;
        for (i, row) in self.rows.iter().enumerate() {
            let mut rec = vec![ROW_LABELS[i].to_string()];
            rec.extend(row.iter().map(|v| v.map_or(String::new(), |v| format!("{v}"))));
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

/// Reads every `*.json` report in `dir`, sorted by file name.
pub fn read_reports(dir: &Path) -> Result<Vec<RunReport>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(serde_json::from_str(&text)?)
        })
        .collect()
}

/// Renders best and average tables as `(markdown, best csv, mean csv)`.
pub fn render_tables(reports: &[RunReport]) -> Result<(String, String, String)> {
    let groups = aggregate_by_arch(reports)?;
    let best = best_table(&groups);
    let mean = mean_table(&groups);
    let md = format!("{}\n{}", best.to_markdown(), mean.to_markdown());
    Ok((md, best.to_csv()?, mean.to_csv()?))
}
