//! CSV and markdown renderings. Every artifact starts with the config hash.

use crate::eval::{AblationTable, MetricsReport};

pub const METRICS_HEADER: &str = "split,ablation,seed,episodes,ne,sr,cr,tcr";

fn csv_row(r: &MetricsReport, seed: &str) -> String {
    format!("{},{},{},{},{:.6},{:.6},{:.6},{:.6}", r.split, r.ablation, seed, r.episodes, r.ne, r.sr, r.cr, r.tcr)
}

pub fn metrics_csv(hash: &str, reports: &[(String, MetricsReport)]) -> String {
    let mut out = format!("# config_hash={hash}\n{METRICS_HEADER}\n");
    for (seed, r) in reports {
        out.push_str(&csv_row(r, seed));
        out.push('\n');
    }
    out
}

pub fn metrics_markdown(hash: &str, reports: &[(String, MetricsReport)]) -> String {
    let mut out =
        format!("<!-- config_hash={hash} -->\n\n| Split | Variant | Seed | Episodes | NE (m) | SR | CR | TCR |\n");
    out.push_str("|---|---|---|---:|---:|---:|---:|---:|\n");
    for (seed, r) in reports {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {:.3} | {:.3} | {:.3} | {:.3} |\n",
            r.split, r.ablation, seed, r.episodes, r.ne, r.sr, r.cr, r.tcr
        ));
    }
    out
}

fn ablation_entries(table: &AblationTable) -> Vec<(String, MetricsReport)> {
    let mut entries: Vec<(String, MetricsReport)> =
        table.rows.iter().map(|r| (r.seed.to_string(), r.report.clone())).collect();
    entries.extend(table.medians.iter().map(|m| ("median".to_string(), m.clone())));
    entries
}

pub fn ablation_csv(table: &AblationTable) -> String {
    metrics_csv(&table.config_hash, &ablation_entries(table))
}

pub fn ablation_markdown(table: &AblationTable) -> String {
    metrics_markdown(&table.config_hash, &ablation_entries(table))
}
