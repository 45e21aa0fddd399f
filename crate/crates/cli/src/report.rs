//! Aggregates run CSVs into per-strategy summary tables.
//!
//! Files sharing a stem up to the `__s<seed>` suffix form one group; rows are
//! averaged per iteration, printed in the itr/query/Acc/Simi layout, and a
//! JSON summary with the final numbers is written alongside.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mimic_core::error::{Error, Result};
use serde_json::json;

#[derive(Debug, Clone, Default)]
pub struct GroupSummary {
    pub runs: usize,
    pub itrs: Vec<usize>,
    pub query: Vec<u64>,
    pub acc_mean: Vec<f64>,
    pub simi_mean: Vec<f64>,
}

#[derive(Debug, Clone, Copy, serde::Deserialize)]
struct Row {
    itr: usize,
    query: u64,
    acc: f64,
    simi: f64,
    #[allow(dead_code)]
    set_size: u64,
    #[allow(dead_code)]
    wall_ms: u64,
}

/// Strips a trailing `__s<digits>` seed suffix to form the group key.
fn group_key(stem: &str) -> String {
    if let Some(at) = stem.rfind("__s") {
        if stem[at + 3..].chars().all(|c| c.is_ascii_digit()) && at + 3 < stem.len() {
            return stem[..at].to_owned();
        }
    }
    stem.to_owned()
}

pub fn aggregate(dir: &Path) -> Result<BTreeMap<String, GroupSummary>> {
    let mut groups: BTreeMap<String, Vec<Vec<Row>>> = BTreeMap::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(Error::usage(format!(
            "no CSV files under {}",
            dir.display()
        )));
    }
    for path in entries {
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_owned();
        let mut reader = csv::Reader::from_path(&path)
            .map_err(|e| Error::usage(format!("cannot read {}: {e}", path.display())))?;
        let rows: Vec<Row> = reader
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::usage(format!("bad CSV {}: {e}", path.display())))?;
        groups.entry(group_key(&stem)).or_default().push(rows);
    }

    let mut out = BTreeMap::new();
    for (key, runs) in groups {
        let mut by_itr: BTreeMap<usize, (Vec<u64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for run in &runs {
            for row in run {
                let slot = by_itr.entry(row.itr).or_default();
                slot.0.push(row.query);
                slot.1.push(row.acc);
                slot.2.push(row.simi);
            }
        }
        let mut summary = GroupSummary {
            runs: runs.len(),
            ..GroupSummary::default()
        };
        for (itr, (queries, accs, simis)) in by_itr {
            summary.itrs.push(itr);
            summary
                .query
                .push(queries.iter().sum::<u64>() / queries.len() as u64);
            summary.acc_mean.push(mean(&accs));
            summary.simi_mean.push(mean(&simis));
        }
        out.insert(key, summary);
    }
    Ok(out)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Renders the aggregated table, one strategy block per group.
pub fn render(groups: &BTreeMap<String, GroupSummary>) -> String {
    let mut out = String::new();
    for (key, g) in groups {
        out.push_str(&format!("{key} (mean over {} runs)\n", g.runs));
        out.push_str(&format!(
            "{:>4} {:>8} {:>8} {:>8}\n",
            "itr", "query", "Acc", "Simi"
        ));
        for i in 0..g.itrs.len() {
            out.push_str(&format!(
                "{:>4} {:>8} {:>8.4} {:>8.4}\n",
                g.itrs[i], g.query[i], g.acc_mean[i], g.simi_mean[i]
            ));
        }
        out.push('\n');
    }
    out
}

/// Writes the machine-readable summary: per group, the full mean curves and
/// the final Acc/Simi.
pub fn write_summary_json(groups: &BTreeMap<String, GroupSummary>, path: &Path) -> Result<()> {
    let body: serde_json::Value = groups
        .iter()
        .map(|(key, g)| {
            (
                key.clone(),
                json!({
                    "runs": g.runs,
                    "itr": g.itrs,
                    "query": g.query,
                    "acc_mean": g.acc_mean,
                    "simi_mean": g.simi_mean,
                    "final_acc": g.acc_mean.last(),
                    "final_simi": g.simi_mean.last(),
                    "final_query": g.query.last(),
                }),
            )
        })
        .collect::<serde_json::Map<String, serde_json::Value>>()
        .into();
    std::fs::write(path, serde_json::to_string_pretty(&body).expect("serializable"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_key_strips_seed_suffixes() {
        assert_eq!(group_key("deepfool__me_div__s17"), "deepfool__me_div");
        assert_eq!(group_key("deepfool__me_div__s"), "deepfool__me_div__s");
        assert_eq!(group_key("plain"), "plain");
        assert_eq!(group_key("x__sabc"), "x__sabc");
    }
}
