//! CSV artifacts: per-run rows, per-cell summaries and per-node load.

use std::io;
use std::path::Path;

use crate::harness::{on_off, reduction_factor, Aggregate, RunRow};

pub const RUNS_HEADER: &[&str] = &[
    "scenario_id",
    "hops",
    "p_data",
    "dtc",
    "seed",
    "e2e_retx",
    "sender_data_tx",
    "local_retx",
    "completion_time_us",
    "delivered",
];

pub const SUMMARY_HEADER: &[&str] = &[
    "scenario_id",
    "hops",
    "p_data",
    "dtc",
    "runs",
    "e2e_retx_mean",
    "e2e_retx_stddev",
    "sender_data_tx_mean",
    "sender_data_tx_stddev",
    "local_retx_mean",
    "local_retx_stddev",
    "completion_time_us_mean",
    "completion_time_us_stddev",
    "throughput_mean",
    "throughput_stddev",
    "node_cv",
    "reduction_factor",
];

pub const NODES_HEADER: &[&str] = &["dtc", "node_index", "mean_data_tx", "stddev_data_tx"];

fn writer(path: &Path) -> io::Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(io::Error::from)
}

pub fn write_runs(path: &Path, rows: &[RunRow]) -> io::Result<()> {
    let mut w = writer(path)?;
    w.write_record(RUNS_HEADER)?;
    for r in rows {
        let m = &r.metrics;
        w.write_record([
            r.key.id(),
            r.key.hops.to_string(),
            r.key.p_data.to_string(),
            on_off(r.key.dtc_enabled).to_string(),
            r.seed.to_string(),
            m.e2e_retransmissions.to_string(),
            m.sender_data_tx.to_string(),
            m.local_retransmissions_total.to_string(),
            m.completion_time.as_micros().to_string(),
            m.delivered_segments.to_string(),
        ])?;
    }
    w.flush()
}

/// The reduction factor column is filled on caching rows that have a
/// baseline partner in `aggs`.
pub fn write_summary(path: &Path, aggs: &[Aggregate]) -> io::Result<()> {
    let mut w = writer(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for a in aggs {
        let factor = if a.key.dtc_enabled {
            aggs.iter()
                .find(|b| !b.key.dtc_enabled && b.key.hops == a.key.hops && b.key.p_data == a.key.p_data)
                .and_then(|b| reduction_factor(b, a).ok())
                .map(|f| f.to_string())
                .unwrap_or_default()
        } else {
            String::new()
        };
        w.write_record([
            a.key.id(),
            a.key.hops.to_string(),
            a.key.p_data.to_string(),
            on_off(a.key.dtc_enabled).to_string(),
            a.runs.to_string(),
            a.e2e_retransmissions.mean.to_string(),
            a.e2e_retransmissions.stddev.to_string(),
            a.sender_data_tx.mean.to_string(),
            a.sender_data_tx.stddev.to_string(),
            a.local_retransmissions.mean.to_string(),
            a.local_retransmissions.stddev.to_string(),
            a.completion_time_us.mean.to_string(),
            a.completion_time_us.stddev.to_string(),
            a.throughput.mean.to_string(),
            a.throughput.stddev.to_string(),
            a.per_node_flatness().coefficient_of_variation().to_string(),
            factor,
        ])?;
    }
    w.flush()
}

pub fn write_nodes(path: &Path, aggs: &[Aggregate]) -> io::Result<()> {
    let mut w = writer(path)?;
    w.write_record(NODES_HEADER)?;
    for a in aggs {
        for (i, s) in a.per_node_data_tx.iter().enumerate() {
            w.write_record([
                on_off(a.key.dtc_enabled).to_string(),
                i.to_string(),
                s.mean.to_string(),
                s.stddev.to_string(),
            ])?;
        }
    }
    w.flush()
}

/// One parsed `summary.csv` row, as much as the report needs.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub hops: usize,
    pub p_data: f64,
    pub dtc: bool,
    pub runs: usize,
    pub e2e_mean: f64,
    pub completion_mean: f64,
    pub throughput_mean: f64,
    pub node_cv: f64,
    pub reduction_factor: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeRow {
    pub dtc: bool,
    pub node_index: usize,
    pub mean: f64,
    pub stddev: f64,
}

fn records(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>, String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let found = r.headers().map_err(|e| format!("{}: {e}", path.display()))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(format!("{}: unexpected header", path.display()));
    }
    r.records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| format!("{}: {e}", path.display()))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, path: &Path) -> Result<T, String> {
    let line = rec.position().map_or(0, |p| p.line());
    rec.get(i)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| format!("{}:{line}: bad value in column {}", path.display(), i + 1))
}

fn dtc_field(rec: &csv::StringRecord, i: usize, path: &Path) -> Result<bool, String> {
    match rec.get(i) {
        Some("on") => Ok(true),
        Some("off") => Ok(false),
        _ => {
            let line = rec.position().map_or(0, |p| p.line());
            Err(format!("{}:{line}: dtc must be on or off", path.display()))
        }
    }
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryRow>, String> {
    records(path, SUMMARY_HEADER)?
        .iter()
        .map(|r| {
            let factor = match r.get(16) {
                Some("") => None,
                _ => Some(field(r, 16, path)?),
            };
            Ok(SummaryRow {
                hops: field(r, 1, path)?,
                p_data: field(r, 2, path)?,
                dtc: dtc_field(r, 3, path)?,
                runs: field(r, 4, path)?,
                e2e_mean: field(r, 5, path)?,
                completion_mean: field(r, 11, path)?,
                throughput_mean: field(r, 13, path)?,
                node_cv: field(r, 15, path)?,
                reduction_factor: factor,
            })
        })
        .collect()
}

pub fn read_nodes(path: &Path) -> Result<Vec<NodeRow>, String> {
    records(path, NODES_HEADER)?
        .iter()
        .map(|r| {
            Ok(NodeRow {
                dtc: dtc_field(r, 0, path)?,
                node_index: field(r, 1, path)?,
                mean: field(r, 2, path)?,
                stddev: field(r, 3, path)?,
            })
        })
        .collect()
}
