use std::borrow::Cow;
use std::sync::Arc;

use rand::seq::index;
use rayon::prelude::*;

use crate::comm::{CommLedger, Direction, SchemeBytes, Traffic};
use crate::data::{partition_classes, ClientShard, Dataset, MinibatchSampler, PartitionSpec};
use crate::error::{Error, Result};
use crate::fl::aggregate::{aggregate, aggregate_sparse};
use crate::fl::client::{Client, LocalTraining};
use crate::fl::config::{FlConfig, Variant};
use crate::fl::discovery::discover_mask;
use crate::fl::metrics::{evaluate, RoundMetrics};
use crate::mask::{active_count, random_mask, shuffle_within_layers, topk_indices, Mask};
use crate::nn::{init_kaiming, LayerLayout, ParamVector};
use crate::scalar::Scalar;
use crate::seed::{Rng, SeedTree};

/// A mask that came into force once round `round` had finished.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskEvent {
    pub round: usize,
    pub mask: Mask,
}

/// Everything a finished run produces.
#[derive(Debug, Clone)]
pub struct RunOutput<T> {
    pub config: FlConfig,
    pub layout: Arc<LayerLayout>,
    pub metrics: Vec<RoundMetrics>,
    pub ledger: CommLedger,
    /// Shared mask in force at the end, if any.
    pub mask: Option<Mask>,
    pub mask_history: Vec<MaskEvent>,
    /// The model the server would deploy (masked where a shared mask applies).
    pub params: ParamVector<T>,
}

impl<T> RunOutput<T> {
    pub fn final_metrics(&self) -> &RoundMetrics {
        self.metrics.last().expect("round 0 is always recorded")
    }
}

/// Server-side state of a federated run.
///
/// The server keeps a full-length vector. Under a shared mask only active
/// coordinates are ever overwritten by aggregation; the others keep their
/// initial values, which matters only when the mask is later recomputed.
pub struct Simulation<'a, T: Scalar> {
    cfg: FlConfig,
    seeds: SeedTree,
    train: &'a Dataset<T>,
    test: &'a Dataset<T>,
    layout: Arc<LayerLayout>,
    clients: Vec<Client>,
    stored: ParamVector<T>,
    mask: Option<Mask>,
    mask_history: Vec<MaskEvent>,
    ledger: CommLedger,
    metrics: Vec<RoundMetrics>,
    round: usize,
    selection: Rng,
}

/// Builds and runs a simulation to completion.
pub fn run<T: Scalar>(cfg: &FlConfig, train: &Dataset<T>, test: &Dataset<T>) -> Result<RunOutput<T>> {
    Simulation::new(cfg.clone(), train, test)?.run()
}

impl<'a, T: Scalar> Simulation<'a, T> {
    pub fn new(cfg: FlConfig, train: &'a Dataset<T>, test: &'a Dataset<T>) -> Result<Self> {
        cfg.validate()?;
        Error::check_len("test features", train.num_features(), test.num_features())?;
        Error::check_len("test classes", train.num_classes(), test.num_classes())?;
        let seeds = SeedTree::new(cfg.seed);
        let layout = Arc::new(LayerLayout::mlp(train.num_features(), &cfg.hidden, train.num_classes())?);
        let clients = build_clients(&cfg, &seeds, train, test, &layout)?;
        let stored = init_kaiming(layout.clone(), seeds.seed("init"));
        let mut sim = Self {
            selection: seeds.rng("selection"),
            cfg,
            seeds,
            train,
            test,
            layout,
            clients,
            stored,
            mask: None,
            mask_history: Vec::new(),
            ledger: CommLedger::new(),
            metrics: Vec::new(),
            round: 0,
        };
        sim.setup_initial_mask()?;
        let row = sim.evaluate_row(0, Traffic::default())?;
        sim.metrics.push(row);
        Ok(sim)
    }

    pub fn config(&self) -> &FlConfig {
        &self.cfg
    }

    pub fn layout(&self) -> &Arc<LayerLayout> {
        &self.layout
    }

    pub fn clients(&self) -> &[Client] {
        &self.clients
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn mask(&self) -> Option<&Mask> {
        self.mask.as_ref()
    }

    pub fn ledger(&self) -> &CommLedger {
        &self.ledger
    }

    pub fn metrics(&self) -> &[RoundMetrics] {
        &self.metrics
    }

    /// Full server vector, including frozen coordinates off the mask.
    pub fn stored(&self) -> &ParamVector<T> {
        &self.stored
    }

    /// The deployed model: the stored vector with the shared mask applied.
    pub fn params(&self) -> Result<ParamVector<T>> {
        match &self.mask {
            Some(m) => self.stored.masked(m),
            None => Ok(self.stored.clone()),
        }
    }

    fn is_active(&self, client: &Client, round: usize) -> bool {
        client.joins_at <= round
    }

    fn shards_active_in(&self, round: usize) -> Vec<&ClientShard> {
        self.clients
            .iter()
            .filter(|c| self.is_active(c, round))
            .map(|c| &c.shard)
            .collect()
    }

    fn p(&self) -> u64 {
        self.layout.total_params() as u64
    }

    fn set_mask(&mut self, mask: Mask, after_round: usize) {
        self.mask_history.push(MaskEvent {
            round: after_round,
            mask: mask.clone(),
        });
        self.mask = Some(mask);
    }

    /// Saliency mask on the current stored weights from all clients active
    /// in the next round, using the seed stream `stream`.
    fn saliency_mask(&mut self, stream: &str) -> Result<Mask> {
        let shards = self.shards_active_in(self.round + 1);
        let found = discover_mask(
            &self.stored,
            &shards,
            self.train,
            self.cfg.sparsity,
            self.cfg.batch_size,
            &self.seeds.child(stream),
        )?;
        let ids: Vec<usize> = shards.iter().map(|s| s.client_id).collect();
        let p = self.p();
        for id in ids {
            self.ledger.record_saliency_upload(self.round, id, p);
            self.ledger.record_mask_broadcast(self.round, id, p);
        }
        let mut mask = found.mask;
        if self.cfg.variant == Variant::Shuffled {
            let seed = self.seeds.indexed_seed("shuffle", self.round as u64);
            mask = shuffle_within_layers(&mask, &self.layout, seed)?;
        }
        Ok(mask)
    }

    fn setup_initial_mask(&mut self) -> Result<()> {
        match self.cfg.variant {
            Variant::Ssfl | Variant::Shuffled => {
                let m = self.saliency_mask("discovery")?;
                self.set_mask(m, 0);
            }
            Variant::Warmup if self.cfg.warmup_rounds == 0 => {
                let m = self.saliency_mask("discovery")?;
                self.set_mask(m, 0);
            }
            Variant::RandomGlobal => {
                let m = random_mask(&self.layout, self.cfg.sparsity, self.seeds.seed("global-mask"))?;
                let p = self.p();
                let ids: Vec<usize> = self.shards_active_in(1).iter().map(|s| s.client_id).collect();
                for id in ids {
                    self.ledger.record_mask_broadcast(0, id, p);
                }
                self.set_mask(m, 0);
            }
            _ => {}
        }
        Ok(())
    }

    /// Recomputes the shared mask on the current stored weights with every
    /// client active in the next round, new arrivals included.
    pub fn ood_adapt(&mut self) -> Result<Mask> {
        let stream = format!("refresh-{}", self.round);
        let m = self.saliency_mask(&stream)?;
        self.set_mask(m.clone(), self.round);
        Ok(m)
    }

    /// Setup work due between round `self.round` and the next one.
    fn between_rounds(&mut self) -> Result<()> {
        let r = self.round;
        if self.cfg.variant == Variant::Warmup && r == self.cfg.warmup_rounds && r > 0 {
            let m = self.saliency_mask("discovery")?;
            self.set_mask(m, r);
        }
        let Some(ood) = self.cfg.ood.clone() else {
            return Ok(());
        };
        if r != ood.refresh_round {
            return Ok(());
        }
        let has_mask = self.mask.is_some();
        match self.cfg.variant {
            Variant::Ssfl | Variant::Shuffled | Variant::Warmup if has_mask && ood.refresh_mask => {
                self.ood_adapt()?;
            }
            Variant::Ssfl | Variant::Shuffled | Variant::Warmup | Variant::RandomGlobal if has_mask => {
                let p = self.p();
                let newcomers: Vec<usize> =
                    self.clients.iter().filter(|c| c.joins_at == r + 1).map(Client::id).collect();
                for id in newcomers {
                    self.ledger.record_mask_broadcast(r, id, p);
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn select(&mut self, round: usize) -> Vec<usize> {
        let active: Vec<usize> = (0..self.clients.len())
            .filter(|&i| self.is_active(&self.clients[i], round))
            .collect();
        let m = self.cfg.clients_per_round(active.len());
        let mut picked: Vec<usize> = index::sample(&mut self.selection, active.len(), m)
            .into_iter()
            .map(|j| active[j])
            .collect();
        picked.sort_unstable();
        picked
    }

    /// Runs the next round and returns its metrics.
    pub fn step(&mut self) -> Result<&RoundMetrics> {
        if self.round >= self.cfg.rounds {
            return Err(Error::invalid(format!("all {} rounds already ran", self.cfg.rounds)));
        }
        self.between_rounds()?;
        let round = self.round + 1;
        let lr = self.cfg.lr_at_round(round - 1);
        let selected = self.select(round);
        let shared_start = self.params()?;
        let shared_mask = self.mask.clone();
        let variant = self.cfg.variant;
        let cfg = &self.cfg;
        let train = self.train;
        let stored = &self.stored;

        let mut chosen: Vec<&mut Client> = Vec::with_capacity(selected.len());
        let mut rest = self.clients.as_mut_slice();
        let mut offset = 0;
        for &i in &selected {
            let (_, tail) = rest.split_at_mut(i - offset);
            let (head, tail) = tail.split_first_mut().expect("selected index in range");
            chosen.push(head);
            rest = tail;
            offset = i + 1;
        }

        let results: Vec<(usize, usize, ParamVector<T>, u64)> = chosen
            .into_par_iter()
            .map(|client| {
                let opts = LocalTraining {
                    steps: cfg.local_steps_for(client.n()),
                    lr,
                    weight_decay: cfg.weight_decay,
                    batch_size: cfg.batch_size,
                };
                let local_mask = client.local_mask.clone();
                let (start, mask): (Cow<ParamVector<T>>, Option<Mask>) = match (&local_mask, &shared_mask) {
                    (Some(m), _) => (Cow::Owned(stored.masked(m)?), Some(m.clone())),
                    (None, Some(m)) => (Cow::Borrowed(&shared_start), Some(m.clone())),
                    (None, None) => (Cow::Borrowed(&shared_start), None),
                };
                let nnz = mask.as_ref().map_or(stored.len(), Mask::count) as u64;
                let trained = client.train(train, &start, mask.as_ref(), &opts)?;
                Ok((client.id(), client.n(), trained, nnz))
            })
            .collect::<Result<_>>()?;

        let p = self.p();
        let mut traffic = Traffic::default();
        let mut log = |ledger: &mut CommLedger, dir: Direction, id: usize, k: u64| {
            ledger.record_model(round, dir, id, p, k);
            traffic.add(dir, &SchemeBytes::for_vector(p, k));
        };
        let sizes: Vec<usize> = results.iter().map(|r| r.1).collect();
        match variant {
            Variant::TopkWeights => {
                let k = active_count(p as usize, self.cfg.sparsity)?;
                let uploads: Vec<(Vec<usize>, Vec<T>, usize)> = results
                    .iter()
                    .map(|(_, n, w, _)| {
                        let mags: Vec<T> = w.values().iter().map(|v| v.abs()).collect();
                        let idx = topk_indices(&mags, k);
                        let vals = idx.iter().map(|&j| w.values()[j]).collect();
                        (idx, vals, *n)
                    })
                    .collect();
                self.stored = aggregate_sparse(&self.stored, &uploads)?;
                for (id, ..) in &results {
                    log(&mut self.ledger, Direction::Downlink, *id, p);
                    log(&mut self.ledger, Direction::Uplink, *id, k as u64);
                }
            }
            _ => {
                let models: Vec<ParamVector<T>> = results.iter().map(|r| r.2.clone()).collect();
                let avg = aggregate(&models, &sizes)?;
                match (&self.mask, variant) {
                    (Some(m), v) if v.uses_shared_mask() => {
                        let dst = self.stored.values_mut();
                        for j in m.active_indices() {
                            dst[j] = avg.values()[j];
                        }
                    }
                    _ => self.stored = avg,
                }
                for (id, _, _, nnz) in &results {
                    log(&mut self.ledger, Direction::Downlink, *id, *nnz);
                    log(&mut self.ledger, Direction::Uplink, *id, *nnz);
                }
            }
        }

        self.round = round;
        let mut row = self.evaluate_row(round, traffic)?;
        row.participants = results.len();
        row.lr = lr;
        self.metrics.push(row);
        Ok(self.metrics.last().expect("just pushed"))
    }

    fn evaluate_row(&self, round: usize, traffic: Traffic) -> Result<RoundMetrics> {
        let params = self.params()?;
        let tests: Vec<&[usize]> = self
            .clients
            .iter()
            .filter(|c| self.is_active(c, round.max(1)))
            .map(|c| c.test_indices.as_slice())
            .collect();
        let heldout = self.cfg.ood.as_ref().map(|o| o.holdout_classes.as_slice());
        let eval = evaluate(&params, self.test, &tests, heldout)?;
        Ok(RoundMetrics {
            round,
            lr: self.cfg.lr_at_round(round.saturating_sub(1)),
            participants: 0,
            global_acc: eval.global_acc,
            mean_local_acc: eval.mean_local(),
            p10_local_acc: eval.local_quantile(0.1),
            median_local_acc: eval.local_quantile(0.5),
            seen_acc: eval.seen_acc,
            heldout_acc: eval.heldout_acc,
            traffic,
        })
    }

    /// Runs the remaining rounds.
    pub fn run(mut self) -> Result<RunOutput<T>> {
        while self.round < self.cfg.rounds {
            self.step()?;
        }
        let params = self.params()?;
        Ok(RunOutput {
            config: self.cfg,
            layout: self.layout,
            metrics: self.metrics,
            ledger: self.ledger,
            mask: self.mask,
            mask_history: self.mask_history,
            params,
        })
    }
}

pub(crate) fn build_clients<T: Scalar>(
    cfg: &FlConfig,
    seeds: &SeedTree,
    train: &Dataset<T>,
    test: &Dataset<T>,
    layout: &LayerLayout,
) -> Result<Vec<Client>> {
    let n = train.num_classes();
    let spec = |clients: usize, stream: &str| PartitionSpec {
        mode: cfg.partition.clone(),
        num_clients: clients,
        prior: cfg.prior.clone(),
        seed: seeds.seed(stream),
    };
    let mut groups = Vec::new();
    match &cfg.ood {
        None => {
            let all: Vec<usize> = (0..n).collect();
            groups.push((partition_classes(train, Some(test), &spec(cfg.num_clients, "partition"), &all)?, 1));
        }
        Some(ood) => {
            if let Some(&c) = ood.holdout_classes.iter().find(|&&c| c >= n) {
                return Err(Error::invalid(format!("ood.holdout_classes: class {c} out of range")));
            }
            let seen: Vec<usize> = (0..n).filter(|c| !ood.holdout_classes.contains(c)).collect();
            if seen.is_empty() {
                return Err(Error::invalid("ood.holdout_classes: nothing left for the initial clients"));
            }
            groups.push((partition_classes(train, Some(test), &spec(cfg.num_clients, "partition"), &seen)?, 1));
            let late = spec(ood.new_clients, "partition-ood");
            groups.push((
                partition_classes(train, Some(test), &late, &ood.holdout_classes)?,
                ood.refresh_round + 1,
            ));
        }
    }
    let mut clients = Vec::new();
    for (split, joins_at) in groups {
        for (mut shard, test_indices) in split.train.into_iter().zip(split.test) {
            let id = clients.len();
            shard.client_id = id;
            let sampler = MinibatchSampler::new(&shard, seeds.indexed_rng("sampler", id as u64))?;
            let local_mask = match cfg.variant {
                Variant::RandomLocal => Some(random_mask(layout, cfg.sparsity, seeds.indexed_seed("local-mask", id as u64))?),
                _ => None,
            };
            clients.push(Client {
                shard,
                test_indices,
                joins_at,
                sampler,
                local_mask,
            });
        }
    }
    Ok(clients)
}
