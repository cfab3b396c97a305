//! How fast an aggregated-minibatch mask approaches the full-data mask.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{sample_balanced_minibatch, Dataset};
use crate::error::{Error, Result};
use crate::fl::config::FlConfig;
use crate::fl::simulation::build_clients;
use crate::mask::{aggregate_saliency, full_data_saliency, local_saliency, mask_error, oracle_mask, topk_mask};
use crate::nn::{init_kaiming, LayerLayout};
use crate::scalar::Scalar;
use crate::seed::SeedTree;

/// How many saliency estimates are aggregated: `c` single minibatches from
/// `c` distinct clients, or the whole training set as one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StudyCount {
    Minibatches(usize),
    All,
}

impl fmt::Display for StudyCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StudyCount::Minibatches(c) => write!(f, "{c}"),
            StudyCount::All => f.write_str("all"),
        }
    }
}

impl FromStr for StudyCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            return Ok(StudyCount::All);
        }
        match s.parse::<usize>() {
            Ok(c) if c > 0 => Ok(StudyCount::Minibatches(c)),
            _ => Err(Error::invalid(format!("minibatch count must be a positive integer or \"all\", got {s:?}"))),
        }
    }
}

impl Serialize for StudyCount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            StudyCount::Minibatches(c) => s.serialize_u64(*c as u64),
            StudyCount::All => s.serialize_str("all"),
        }
    }
}

impl<'de> Deserialize<'de> for StudyCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(n) => StudyCount::from_str(&n.to_string()),
            Raw::Text(t) => StudyCount::from_str(&t),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaskStudyRow {
    pub count: StudyCount,
    pub seed: u64,
    pub mask_error: f64,
}

/// Mask error against the full-data mask for every entry of `counts`.
///
/// The model is the run's initialization for `cfg.seed` and clients come from
/// the run's partition. Clients are visited in one seeded order, so the
/// minibatches behind count `c` are a prefix of those behind any larger count.
pub fn mask_study<T: Scalar>(
    cfg: &FlConfig,
    counts: &[StudyCount],
    train: &Dataset<T>,
    test: &Dataset<T>,
) -> Result<Vec<MaskStudyRow>> {
    cfg.validate()?;
    let seeds = SeedTree::new(cfg.seed);
    let layout = Arc::new(LayerLayout::mlp(train.num_features(), &cfg.hidden, train.num_classes())?);
    let clients = build_clients(cfg, &seeds, train, test, &layout)?;
    let largest = counts
        .iter()
        .filter_map(|c| match c {
            StudyCount::Minibatches(n) => Some(*n),
            StudyCount::All => None,
        })
        .max()
        .unwrap_or(0);
    if largest > clients.len() {
        return Err(Error::invalid(format!(
            "count {largest} needs that many clients but num_clients is {}",
            clients.len()
        )));
    }
    let params = init_kaiming::<T>(layout.clone(), seeds.seed("init"));
    let oracle = oracle_mask(&params, train, cfg.sparsity, &layout)?;

    let mut order: Vec<usize> = (0..clients.len()).collect();
    order.shuffle(&mut seeds.rng("study-order"));
    let stream = seeds.child("study");
    let mut scored = Vec::with_capacity(largest);
    for &i in &order[..largest] {
        let shard = &clients[i].shard;
        let seed = stream.indexed_seed("client", shard.client_id as u64);
        let batch = sample_balanced_minibatch(shard, train, cfg.batch_size, seed)?;
        scored.push((local_saliency(&params, &batch)?, shard.n()));
    }

    counts
        .iter()
        .map(|&count| {
            let saliency = match count {
                StudyCount::Minibatches(c) => aggregate_saliency(&scored[..c])?,
                StudyCount::All => full_data_saliency(&params, train, None)?,
            };
            let mask = topk_mask(&saliency, cfg.sparsity, &layout)?;
            Ok(MaskStudyRow {
                count,
                seed: cfg.seed,
                mask_error: mask_error(&mask, &oracle)?,
            })
        })
        .collect()
}
