//! Text emitters for evaluation results: a human-readable table with
//! Interviewer / Customer / Total columns, a per-turn-length table, and a
//! machine-readable key-value format.

use std::collections::BTreeMap;

use super::{WderReport, ALL_BUCKETS};

fn fmt_pct(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.2}"),
        None => "-".into(),
    }
}

/// WDER table with one row per system.
pub fn format_wder_table(rows: &[(String, &WderReport)]) -> String {
    let name_w = rows
        .iter()
        .map(|(n, _)| n.len())
        .chain(std::iter::once("System".len()))
        .max()
        .unwrap_or(6);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<name_w$}  {:>11}  {:>8}  {:>6}\n",
        "System", "Interviewer", "Customer", "Total"
    ));
    for (name, r) in rows {
        out.push_str(&format!(
            "{:<name_w$}  {:>11}  {:>8}  {:>6}\n",
            name,
            fmt_pct(r.interviewer),
            fmt_pct(r.customer),
            fmt_pct(Some(r.total)),
        ));
    }
    out
}

/// Total WDER per turn-length bucket, one row per system. Buckets with no
/// evaluated words print as `-`.
pub fn format_bucket_table(rows: &[(String, &WderReport)]) -> String {
    let name_w = rows
        .iter()
        .map(|(n, _)| n.len())
        .chain(std::iter::once("System".len()))
        .max()
        .unwrap_or(6);
    let mut out = String::new();
    out.push_str(&format!("{:<name_w$}", "System"));
    for b in ALL_BUCKETS {
        out.push_str(&format!("  {:>6}", b.to_string()));
    }
    out.push('\n');
    for (name, r) in rows {
        out.push_str(&format!("{name:<name_w$}"));
        for b in ALL_BUCKETS {
            let cell = fmt_pct(r.by_turn_length.get(&b).map(|s| s.wder));
            out.push_str(&format!("  {cell:>6}"));
        }
        out.push('\n');
    }
    out
}

/// Machine-readable `key value` lines. Percentages carry full precision.
pub fn format_kv(report: &WderReport, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in extra {
        out.push_str(&format!("{k} {v}\n"));
    }
    out.push_str(&format!("total_wder {}\n", report.total));
    if let Some(v) = report.interviewer {
        out.push_str(&format!("interviewer_wder {v}\n"));
    }
    if let Some(v) = report.customer {
        out.push_str(&format!("customer_wder {v}\n"));
    }
    out.push_str(&format!("evaluated_words {}\n", report.evaluated_words));
    out.push_str(&format!("unevaluated_words {}\n", report.unevaluated_words));
    out.push_str(&format!("total_errors {}\n", report.total_errors));
    for (bucket, stat) in &report.by_turn_length {
        out.push_str(&format!(
            "bucket_{bucket}_wder {}\nbucket_{bucket}_evaluated {}\nbucket_{bucket}_errors {}\n",
            stat.wder, stat.evaluated, stat.errors
        ));
    }
    out
}

/// Parses the key-value format back into a map.
pub fn parse_kv(content: &str) -> BTreeMap<String, String> {
    content
        .lines()
        .filter_map(|line| {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                return None;
            }
            line.split_once(' ')
                .map(|(k, v)| (k.to_string(), v.trim().to_string()))
        })
        .collect()
}

/// Rebuilds the subset of a [`WderReport`] needed for cross-run tables
/// from a parsed key-value map.
pub fn report_from_kv(kv: &BTreeMap<String, String>) -> Option<WderReport> {
    let get_f = |k: &str| kv.get(k).and_then(|v| v.parse::<f64>().ok());
    let get_u = |k: &str| kv.get(k).and_then(|v| v.parse::<usize>().ok());
    let mut by_turn_length = BTreeMap::new();
    for b in ALL_BUCKETS {
        if let (Some(wder), Some(evaluated), Some(errors)) = (
            get_f(&format!("bucket_{b}_wder")),
            get_u(&format!("bucket_{b}_evaluated")),
            get_u(&format!("bucket_{b}_errors")),
        ) {
            by_turn_length.insert(
                b,
                super::BucketStat {
                    evaluated,
                    errors,
                    wder,
                },
            );
        }
    }
    Some(WderReport {
        total: get_f("total_wder")?,
        interviewer: get_f("interviewer_wder"),
        customer: get_f("customer_wder"),
        evaluated_words: get_u("evaluated_words")?,
        unevaluated_words: get_u("unevaluated_words")?,
        total_errors: get_u("total_errors")?,
        by_turn_length,
    })
}
