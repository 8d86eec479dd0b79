//! Plain-text tables rendered from the CSV artifacts.

use std::fmt::Write;
use std::path::Path;

use super::output::{read_nodes, read_summary, NodeRow, SummaryRow};

/// Cells with a baseline/caching pair, in first-seen order.
fn pairs(rows: &[SummaryRow]) -> Vec<(&SummaryRow, &SummaryRow)> {
    let mut out = Vec::new();
    for base in rows.iter().filter(|r| !r.dtc) {
        if let Some(dtc) = rows
            .iter()
            .find(|r| r.dtc && r.hops == base.hops && r.p_data == base.p_data)
        {
            out.push((base, dtc));
        }
    }
    out
}

fn factor_cell(base: &SummaryRow, dtc: &SummaryRow) -> String {
    if base.p_data == 0.0 || (base.e2e_mean == 0.0 && dtc.e2e_mean == 0.0) {
        return "no retransmissions".to_string();
    }
    let f = dtc.reduction_factor.unwrap_or(base.e2e_mean / dtc.e2e_mean.max(1.0));
    let flag = if f < 10.0 { "  (below 10)" } else { "" };
    format!("{f:>8.2}{flag}")
}

pub fn render(dir: &Path) -> Result<String, String> {
    let summary = read_summary(&dir.join("summary.csv"))?;
    let nodes_path = dir.join("nodes.csv");
    let nodes = if nodes_path.exists() {
        Some(read_nodes(&nodes_path)?)
    } else {
        None
    };

    let mut s = String::new();
    let pairs = pairs(&summary);

    writeln!(s, "End-to-end retransmissions (mean per run)").unwrap();
    writeln!(
        s,
        "{:>5} {:>7} {:>10} {:>10}  {:>8}",
        "hops", "p_data", "baseline", "dtc", "factor"
    )
    .unwrap();
    for (b, d) in &pairs {
        writeln!(
            s,
            "{:>5} {:>7.2} {:>10.1} {:>10.1}  {}",
            b.hops,
            b.p_data,
            b.e2e_mean,
            d.e2e_mean,
            factor_cell(b, d)
        )
        .unwrap();
    }

    writeln!(s).unwrap();
    writeln!(s, "Per-node load spread (coefficient of variation of node means)").unwrap();
    writeln!(s, "{:>5} {:>7} {:>10} {:>10}", "hops", "p_data", "baseline", "dtc").unwrap();
    for (b, d) in &pairs {
        writeln!(
            s,
            "{:>5} {:>7.2} {:>10.4} {:>10.4}",
            b.hops, b.p_data, b.node_cv, d.node_cv
        )
        .unwrap();
    }

    writeln!(s).unwrap();
    writeln!(s, "Throughput (segments/s)").unwrap();
    writeln!(
        s,
        "{:>5} {:>7} {:>10} {:>10} {:>10}",
        "hops", "p_data", "baseline", "dtc", "dtc/base"
    )
    .unwrap();
    for (b, d) in &pairs {
        let rel = if b.throughput_mean > 0.0 {
            d.throughput_mean / b.throughput_mean
        } else {
            f64::NAN
        };
        writeln!(
            s,
            "{:>5} {:>7.2} {:>10.3} {:>10.3} {:>10.2}",
            b.hops, b.p_data, b.throughput_mean, d.throughput_mean, rel
        )
        .unwrap();
    }

    let unpaired: Vec<&SummaryRow> = summary
        .iter()
        .filter(|r| !pairs.iter().any(|(b, d)| std::ptr::eq(*b, *r) || std::ptr::eq(*d, *r)))
        .collect();
    if !unpaired.is_empty() {
        writeln!(s).unwrap();
        writeln!(s, "Unpaired cells").unwrap();
        writeln!(
            s,
            "{:>5} {:>7} {:>4} {:>5} {:>10} {:>14}",
            "hops", "p_data", "dtc", "runs", "e2e_retx", "completion_s"
        )
        .unwrap();
        for r in unpaired {
            writeln!(
                s,
                "{:>5} {:>7.2} {:>4} {:>5} {:>10.1} {:>14.3}",
                r.hops,
                r.p_data,
                if r.dtc { "on" } else { "off" },
                r.runs,
                r.e2e_mean,
                r.completion_mean / 1e6
            )
            .unwrap();
        }
    }

    if let Some(nodes) = nodes {
        render_nodes(&mut s, &nodes);
    }
    Ok(s)
}

fn render_nodes(s: &mut String, nodes: &[NodeRow]) {
    let series = |dtc: bool| -> Vec<&NodeRow> {
        let mut v: Vec<&NodeRow> = nodes.iter().filter(|n| n.dtc == dtc).collect();
        v.sort_by_key(|n| n.node_index);
        v
    };
    let (off, on) = (series(false), series(true));
    let len = off.len().max(on.len());
    let cell = |v: &[&NodeRow], i: usize| v.get(i).map_or_else(|| "-".to_string(), |n| format!("{:.1}", n.mean));

    writeln!(s).unwrap();
    writeln!(s, "Data transmissions per node (mean per run)").unwrap();
    writeln!(s, "{:>5} {:>10} {:>10}", "node", "baseline", "dtc").unwrap();
    for i in 0..len {
        writeln!(s, "{:>5} {:>10} {:>10}", i, cell(&off, i), cell(&on, i)).unwrap();
    }
    for (name, v) in [("baseline", &off), ("dtc", &on)] {
        if v.len() < 2 {
            continue;
        }
        let first = v[0].mean;
        let last = v[v.len() - 1].mean;
        let falling = v.windows(2).all(|w| w[1].mean <= w[0].mean);
        writeln!(
            s,
            "{name}: first/last node = {:.3}, decreasing towards the receiver: {}",
            first / last,
            if falling { "yes" } else { "no" }
        )
        .unwrap();
    }
}
