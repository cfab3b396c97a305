//! Result files: metrics.csv, ledger.csv, summary.json, mask_stats.json,
//! mask_study.csv and config.resolved.json.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use ssfl_core::comm::{Direction, EncodingScheme, LedgerReport};
use ssfl_core::fl::{MaskStudyRow, RoundMetrics};
use ssfl_core::mask::{layer_densities, MaskStats};

use crate::config::{ExperimentConfig, Format};
use crate::runner::{ResultBundle, RunRecord};

const SCHEME_ORDER: [EncodingScheme; 4] = [
    EncodingScheme::ValuesOnly,
    EncodingScheme::Dense,
    EncodingScheme::Coo,
    EncodingScheme::Bitmask,
];

pub const METRICS_FILE: &str = "metrics.csv";
pub const LEDGER_FILE: &str = "ledger.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const MASK_STATS_FILE: &str = "mask_stats.json";
pub const MASK_STUDY_FILE: &str = "mask_study.csv";
pub const CONFIG_ECHO_FILE: &str = "config.resolved.json";

pub fn metrics_header() -> String {
    let mut cols = vec!["round", "variant", "seed", "global_acc", "mean_local_acc"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    for dir in ["uplink", "downlink"] {
        for s in SCHEME_ORDER {
            cols.push(format!("{dir}_bytes_{s}"));
        }
    }
    for c in ["p10_local_acc", "median_local_acc", "lr", "participants", "seen_acc", "heldout_acc"] {
        cols.push(c.into());
    }
    cols.join(",")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn metrics_row(out: &mut String, run: &RunRecord, m: &RoundMetrics) {
    write!(
        out,
        "{},{},{},{:.6},{:.6}",
        m.round, run.variant, run.seed, m.global_acc, m.mean_local_acc
    )
    .unwrap();
    for dir in [Direction::Uplink, Direction::Downlink] {
        for s in SCHEME_ORDER {
            write!(out, ",{}", m.traffic.get(dir, s)).unwrap();
        }
    }
    writeln!(
        out,
        ",{:.6},{:.6},{:.8},{},{},{}",
        m.p10_local_acc,
        m.median_local_acc,
        m.lr,
        m.participants,
        opt(m.seen_acc),
        opt(m.heldout_acc)
    )
    .unwrap();
}

pub fn metrics_csv(bundle: &ResultBundle) -> String {
    let mut out = metrics_header() + "\n";
    for run in &bundle.runs {
        for m in &run.metrics {
            metrics_row(&mut out, run, m);
        }
    }
    out
}

pub const LEDGER_HEADER: &str = "variant,seed,round,direction,client,scheme,bytes";

pub fn ledger_csv(bundle: &ResultBundle) -> String {
    let mut out = format!("{LEDGER_HEADER}\n");
    for run in &bundle.runs {
        for t in run.ledger.entries() {
            for s in EncodingScheme::ALL {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    run.variant,
                    run.seed,
                    t.stage,
                    t.direction,
                    t.client,
                    s,
                    t.bytes.get(s)
                )
                .unwrap();
            }
        }
    }
    out
}

pub fn mask_study_csv(rows: &[MaskStudyRow]) -> String {
    let mut out = String::from("count,seed,mask_error\n");
    for r in rows {
        writeln!(out, "{},{},{:.6}", r.count, r.seed, r.mask_error).unwrap();
    }
    out
}

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    variant: String,
    seed: u64,
    #[serde(rename = "final")]
    last: &'a RoundMetrics,
    ledger: LedgerReport,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    /// Mean and sample standard deviation (0 for a single value).
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Serialize)]
struct VariantSummary {
    seeds: Vec<u64>,
    final_global_acc: Spread,
    final_mean_local_acc: Spread,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    variants: BTreeMap<String, VariantSummary>,
    runs: Vec<RunSummary<'a>>,
    config: &'a ExperimentConfig,
}

pub fn summary_json(bundle: &ResultBundle) -> String {
    let mut variants = BTreeMap::new();
    for &v in &bundle.config.variants {
        let runs: Vec<&RunRecord> = bundle.runs_of(v).collect();
        let global: Vec<f64> = runs.iter().map(|r| r.final_metrics().global_acc).collect();
        let local: Vec<f64> = runs.iter().map(|r| r.final_metrics().mean_local_acc).collect();
        variants.insert(
            v.to_string(),
            VariantSummary {
                seeds: runs.iter().map(|r| r.seed).collect(),
                final_global_acc: Spread::of(&global),
                final_mean_local_acc: Spread::of(&local),
            },
        );
    }
    let runs = bundle
        .runs
        .iter()
        .map(|r| RunSummary {
            variant: r.variant.to_string(),
            seed: r.seed,
            last: r.final_metrics(),
            ledger: r.ledger.summarize().report(),
        })
        .collect();
    let summary = Summary {
        variants,
        runs,
        config: &bundle.config,
    };
    serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n"
}

#[derive(Debug, Serialize)]
struct MaskRecord {
    round: usize,
    layout_hash: String,
    stats: MaskStats,
}

#[derive(Debug, Serialize)]
struct RunMasks {
    variant: String,
    seed: u64,
    masks: Vec<MaskRecord>,
}

pub fn mask_stats_json(bundle: &ResultBundle) -> Result<String> {
    let mut out = Vec::new();
    for r in &bundle.runs {
        let masks = r
            .mask_history
            .iter()
            .map(|e| {
                Ok(MaskRecord {
                    round: e.round,
                    layout_hash: r.layout.fingerprint(),
                    stats: layer_densities(&e.mask, &r.layout)?,
                })
            })
            .collect::<ssfl_core::Result<Vec<_>>>()?;
        out.push(RunMasks {
            variant: r.variant.to_string(),
            seed: r.seed,
            masks,
        });
    }
    Ok(serde_json::to_string_pretty(&out)? + "\n")
}

/// Writes `contents` to `dir/name` through a temporary file and a rename.
pub fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, &path).with_context(|| format!("moving {} into place", path.display()))?;
    Ok(path)
}

/// Writes the bundle files selected by the config's formats, plus the config
/// echo. Returns the written paths.
pub fn write_bundle(bundle: &ResultBundle, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let formats = &bundle.config.output.formats;
    let mut written = Vec::new();
    if formats.contains(&Format::Csv) {
        written.push(write_atomic(dir, METRICS_FILE, &metrics_csv(bundle))?);
        written.push(write_atomic(dir, LEDGER_FILE, &ledger_csv(bundle))?);
    }
    if formats.contains(&Format::Json) {
        written.push(write_atomic(dir, SUMMARY_FILE, &summary_json(bundle))?);
        written.push(write_atomic(dir, MASK_STATS_FILE, &mask_stats_json(bundle)?)?);
    }
    written.push(write_atomic(dir, CONFIG_ECHO_FILE, &bundle.config.to_json())?);
    Ok(written)
}

pub fn write_mask_study(cfg: &ExperimentConfig, rows: &[MaskStudyRow], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(vec![
        write_atomic(dir, MASK_STUDY_FILE, &mask_study_csv(rows))?,
        write_atomic(dir, CONFIG_ECHO_FILE, &cfg.to_json())?,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_starts_with_documented_columns() {
        assert!(metrics_header().starts_with("round,variant,seed,global_acc,mean_local_acc,uplink_bytes_values_only,"));
        assert_eq!(metrics_header().split(',').count(), 19);
    }

    #[test]
    fn spread_uses_sample_std() {
        let s = Spread::of(&[1.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.std - 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(Spread::of(&[5.0]).std, 0.0);
    }
}
