//! Executes the (variant, seed) grid of an experiment.

use std::sync::Arc;

use anyhow::{Context, Result};
use rayon::prelude::*;
use ssfl_core::comm::CommLedger;
use ssfl_core::data::{make_synthetic, Dataset};
use ssfl_core::fl::{mask_study, run, FlConfig, MaskEvent, MaskStudyRow, RoundMetrics, Variant};
use ssfl_core::nn::LayerLayout;
use ssfl_core::Scalar;

use crate::config::{DatasetConfig, ExperimentConfig, Precision};

/// Outcome of one (variant, seed) pair.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub variant: Variant,
    pub seed: u64,
    pub metrics: Vec<RoundMetrics>,
    pub ledger: CommLedger,
    pub mask_history: Vec<MaskEvent>,
    pub layout: Arc<LayerLayout>,
}

impl RunRecord {
    pub fn final_metrics(&self) -> &RoundMetrics {
        self.metrics.last().expect("round 0 is always recorded")
    }
}

/// All runs of an experiment, ordered by variant (as listed) then seed.
#[derive(Debug, Clone)]
pub struct ResultBundle {
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
}

impl ResultBundle {
    pub fn runs_of(&self, variant: Variant) -> impl Iterator<Item = &RunRecord> {
        self.runs.iter().filter(move |r| r.variant == variant)
    }
}

/// The federated config of one grid cell.
pub fn run_config(cfg: &ExperimentConfig, variant: Variant, seed: u64) -> FlConfig {
    FlConfig {
        variant,
        seed,
        ..cfg.fl.clone()
    }
}

fn load_data<T: Scalar>(cfg: &ExperimentConfig, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    match &cfg.dataset {
        DatasetConfig::Synthetic { seed: pinned, .. } => {
            let spec = cfg.dataset.synthetic_spec().expect("synthetic");
            let data = make_synthetic(&spec, pinned.unwrap_or(seed))?;
            Ok((data.train, data.test))
        }
        DatasetConfig::Csv {
            train,
            test,
            num_classes,
        } => {
            let tr = Dataset::read_csv(train, *num_classes).with_context(|| format!("loading {}", train.display()))?;
            let te = Dataset::read_csv(test, Some(num_classes.unwrap_or(tr.num_classes())))
                .with_context(|| format!("loading {}", test.display()))?;
            Ok((tr, te))
        }
    }
}

fn run_one<T: Scalar>(cfg: &ExperimentConfig, variant: Variant, seed: u64) -> Result<RunRecord> {
    let (train, test) = load_data::<T>(cfg, seed)?;
    let out = run(&run_config(cfg, variant, seed), &train, &test)
        .with_context(|| format!("variant {variant}, seed {seed}"))?;
    Ok(RunRecord {
        variant,
        seed,
        metrics: out.metrics,
        ledger: out.ledger,
        mask_history: out.mask_history,
        layout: out.layout,
    })
}

fn in_pool<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build()?;
            Ok(pool.install(f))
        }
    }
}

/// Runs every (variant, seed) pair; `jobs` caps the worker threads.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<ResultBundle> {
    let grid: Vec<(Variant, u64)> = cfg
        .variants
        .iter()
        .flat_map(|&v| cfg.seeds.iter().map(move |&s| (v, s)))
        .collect();
    let runs = in_pool(jobs, || {
        grid.par_iter()
            .map(|&(v, s)| match cfg.precision {
                Precision::F32 => run_one::<f32>(cfg, v, s),
                Precision::F64 => run_one::<f64>(cfg, v, s),
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(ResultBundle {
        config: cfg.clone(),
        runs,
    })
}

fn study_one<T: Scalar>(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<MaskStudyRow>> {
    let study = cfg
        .mask_study
        .as_ref()
        .context("mask_study: section missing from config")?;
    let (train, test) = load_data::<T>(cfg, seed)?;
    let rows = mask_study(&run_config(cfg, cfg.fl.variant, seed), &study.counts, &train, &test)
        .with_context(|| format!("mask study, seed {seed}"))?;
    Ok(rows)
}

/// Mask error against the full-data mask for each configured count and seed.
pub fn run_mask_study(cfg: &ExperimentConfig, jobs: Option<usize>) -> Result<Vec<MaskStudyRow>> {
    let per_seed = in_pool(jobs, || {
        cfg.seeds
            .par_iter()
            .map(|&s| match cfg.precision {
                Precision::F32 => study_one::<f32>(cfg, s),
                Precision::F64 => study_one::<f64>(cfg, s),
            })
            .collect::<Result<Vec<_>>>()
    })??;
    Ok(per_seed.into_iter().flatten().collect())
}
