//! Non-IID client partitioning.
//!
//! Dirichlet mode: every client draws a class-proportion vector
//! `q_k ~ Dir(alpha * p)`; the examples of class `c` are then split across
//! clients in proportion to `q_{k,c}` with largest-remainder rounding, so
//! every example lands on exactly one client. Proportions are kept in log
//! space because for small `alpha` the gamma variates underflow `f64`.
//!
//! Pathological mode: every client holds exactly `classes_per_client`
//! classes and each class is split evenly between the clients holding it.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::seed::{rng_from_seed, Rng};

const EMPTY_SHARD_RETRIES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionMode {
    Dirichlet { alpha: f64 },
    Pathological { classes_per_client: usize },
    Iid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    #[serde(flatten)]
    pub mode: PartitionMode,
    pub num_clients: usize,
    /// Class prior `p`; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn dirichlet(alpha: f64, num_clients: usize, seed: u64) -> Self {
        Self {
            mode: PartitionMode::Dirichlet { alpha },
            num_clients,
            prior: None,
            seed,
        }
    }

    pub fn pathological(classes_per_client: usize, num_clients: usize, seed: u64) -> Self {
        Self {
            mode: PartitionMode::Pathological { classes_per_client },
            num_clients,
            prior: None,
            seed,
        }
    }

    pub fn iid(num_clients: usize, seed: u64) -> Self {
        Self {
            mode: PartitionMode::Iid,
            num_clients,
            prior: None,
            seed,
        }
    }

    fn prior_for(&self, num_classes: usize) -> Result<Vec<f64>> {
        match &self.prior {
            None => Ok(vec![1.0 / num_classes as f64; num_classes]),
            Some(p) => {
                Error::check_len("class prior", num_classes, p.len())?;
                let sum: f64 = p.iter().sum();
                if p.iter().any(|&v| v.is_nan() || v < 0.0) || (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::invalid("class prior must be non-negative and sum to 1"));
                }
                Ok(p.clone())
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 {
            return Err(Error::invalid("partition needs at least one client"));
        }
        match self.mode {
            PartitionMode::Dirichlet { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                Err(Error::invalid(format!("dirichlet alpha must be positive, got {alpha}")))
            }
            PartitionMode::Pathological { classes_per_client: 0 } => {
                Err(Error::invalid("classes_per_client must be at least 1"))
            }
            _ => Ok(()),
        }
    }
}

/// One client's share of the training data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientShard {
    pub client_id: usize,
    pub indices: Vec<usize>,
}

impl ClientShard {
    pub fn n(&self) -> usize {
        self.indices.len()
    }
}

/// Train shards plus per-client test index sets carved from a held-out pool
/// with the same per-client class proportions.
#[derive(Debug, Clone, PartialEq)]
pub struct FederatedSplit {
    pub train: Vec<ClientShard>,
    pub test: Vec<Vec<usize>>,
}

/// Per-client, per-class weights in log space: `log_q[k][c]`.
struct ClassWeights {
    log_q: Vec<Vec<f64>>,
}

impl ClassWeights {
    /// Weight of each client for class `c`, normalised across clients.
    fn split_of_class(&self, c: usize) -> Vec<f64> {
        let col: Vec<f64> = self.log_q.iter().map(|q| q[c]).collect();
        let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return vec![1.0 / col.len() as f64; col.len()];
        }
        let exp: Vec<f64> = col.iter().map(|&v| (v - max).exp()).collect();
        let sum: f64 = exp.iter().sum();
        exp.into_iter().map(|v| v / sum).collect()
    }
}

/// `log` of a `Dir(concentration)` draw.
fn sample_log_dirichlet(rng: &mut Rng, concentration: &[f64]) -> Vec<f64> {
    let log_gammas: Vec<f64> = concentration
        .iter()
        .map(|&a| {
            if a <= 0.0 {
                return f64::NEG_INFINITY;
            }
            // Gamma(a) = Gamma(a + 1) * U^(1/a) for a < 1.
            let boosted = if a < 1.0 { a + 1.0 } else { a };
            let g: f64 = Gamma::new(boosted, 1.0).expect("positive shape").sample(rng);
            let mut lg = g.ln();
            if a < 1.0 {
                let u: f64 = 1.0 - rng.random::<f64>();
                lg += u.ln() / a;
            }
            lg
        })
        .collect();
    let max = log_gammas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + log_gammas.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    log_gammas.into_iter().map(|v| v - lse).collect()
}

/// Integer counts summing to `total`, proportional to `weights`; leftover
/// units go to the largest fractional parts, lower index first on ties.
fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let raw: Vec<f64> = weights.iter().map(|w| w * total as f64).collect();
    let mut counts: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Splits each class's (already shuffled) examples across clients.
fn allocate(class_pools: &[Vec<usize>], weights: &ClassWeights) -> Vec<Vec<usize>> {
    let k = weights.log_q.len();
    let mut out = vec![Vec::new(); k];
    for (c, pool) in class_pools.iter().enumerate() {
        let counts = largest_remainder(pool.len(), &weights.split_of_class(c));
        let mut cursor = 0;
        for (client, n) in counts.into_iter().enumerate() {
            out[client].extend_from_slice(&pool[cursor..cursor + n]);
            cursor += n;
        }
    }
    out.iter_mut().for_each(|v| v.sort_unstable());
    out
}

/// Example indices of each class in `classes`, shuffled. Position `j` of
/// the result holds class `classes[j]`.
fn shuffled_class_pools<T: Scalar>(data: &Dataset<T>, classes: &[usize], rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut all = data.class_indices();
    classes
        .iter()
        .map(|&c| {
            let mut pool = std::mem::take(&mut all[c]);
            pool.shuffle(rng);
            pool
        })
        .collect()
}

fn into_shards(parts: Vec<Vec<usize>>) -> Vec<ClientShard> {
    parts
        .into_iter()
        .enumerate()
        .map(|(client_id, indices)| ClientShard { client_id, indices })
        .collect()
}

fn dirichlet_weights(
    pools: &[Vec<usize>],
    prior: &[f64],
    num_clients: usize,
    alpha: f64,
    rng: &mut Rng,
) -> Result<(ClassWeights, Vec<Vec<usize>>)> {
    let concentration: Vec<f64> = prior.iter().map(|p| alpha * p).collect();
    let mut weights = ClassWeights {
        log_q: (0..num_clients)
            .map(|_| sample_log_dirichlet(rng, &concentration))
            .collect(),
    };
    let mut parts = allocate(pools, &weights);
    for _ in 0..EMPTY_SHARD_RETRIES {
        let empty: Vec<usize> = (0..parts.len()).filter(|&k| parts[k].is_empty()).collect();
        if empty.is_empty() {
            break;
        }
        for k in empty {
            weights.log_q[k] = sample_log_dirichlet(rng, &concentration);
        }
        parts = allocate(pools, &weights);
    }
    // Last resort: move one random example from the largest shard.
    while let Some(k) = parts.iter().position(Vec::is_empty) {
        let donor = (0..parts.len()).max_by_key(|&j| (parts[j].len(), std::cmp::Reverse(j))).unwrap();
        if parts[donor].len() < 2 {
            return Err(Error::Infeasible("not enough examples to give every client one".into()));
        }
        let pick = rng.random_range(0..parts[donor].len());
        let moved = parts[donor].remove(pick);
        parts[k].push(moved);
    }
    Ok((weights, parts))
}

/// Dirichlet label-skew partition of `data` across `spec.num_clients`.
pub fn partition_dirichlet<T: Scalar>(data: &Dataset<T>, spec: &PartitionSpec) -> Result<Vec<ClientShard>> {
    if !matches!(spec.mode, PartitionMode::Dirichlet { .. }) {
        return Err(Error::invalid("partition_dirichlet needs a dirichlet spec"));
    }
    partition(data, spec)
}

/// Class sets for the pathological split: a random class permutation is laid
/// out cyclically so client `k` gets `cpc` consecutive (distinct) classes and
/// every class is held by at least one client.
fn pathological_classes(num_classes: usize, num_clients: usize, cpc: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut perm: Vec<usize> = (0..num_classes).collect();
    perm.shuffle(rng);
    let mut client_order: Vec<usize> = (0..num_clients).collect();
    client_order.shuffle(rng);
    let mut out = vec![Vec::new(); num_clients];
    for (slot, &client) in client_order.iter().enumerate() {
        out[client] = (0..cpc).map(|j| perm[(slot * cpc + j) % num_classes]).collect();
        out[client].sort_unstable();
    }
    out
}

fn split_evenly(pools: &[Vec<usize>], holders: &[Vec<usize>], num_clients: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); num_clients];
    for (c, pool) in pools.iter().enumerate() {
        let owners: Vec<usize> = (0..num_clients).filter(|&k| holders[k].contains(&c)).collect();
        if owners.is_empty() {
            continue;
        }
        let weights = vec![1.0 / owners.len() as f64; owners.len()];
        let counts = largest_remainder(pool.len(), &weights);
        let mut cursor = 0;
        for (&k, n) in owners.iter().zip(counts) {
            out[k].extend_from_slice(&pool[cursor..cursor + n]);
            cursor += n;
        }
    }
    out.iter_mut().for_each(|v| v.sort_unstable());
    out
}

/// Pathological partition: each client holds exactly
/// `min(classes_per_client, N)` classes.
pub fn partition_pathological<T: Scalar>(data: &Dataset<T>, spec: &PartitionSpec) -> Result<Vec<ClientShard>> {
    if !matches!(spec.mode, PartitionMode::Pathological { .. }) {
        return Err(Error::invalid("partition_pathological needs a pathological spec"));
    }
    partition(data, spec)
}

fn pathological_holders(
    n: usize,
    num_clients: usize,
    classes_per_client: usize,
    rng: &mut Rng,
) -> Result<Vec<Vec<usize>>> {
    let cpc = classes_per_client.min(n);
    if num_clients * cpc < n {
        return Err(Error::Infeasible(format!(
            "{num_clients} clients with {cpc} classes each cannot cover {n} classes"
        )));
    }
    Ok(pathological_classes(n, num_clients, cpc, rng))
}

fn check_holders(pools: &[Vec<usize>], holders: &[Vec<usize>]) -> Result<()> {
    for (c, pool) in pools.iter().enumerate() {
        let owners = holders.iter().filter(|h| h.contains(&c)).count();
        if pool.len() < owners {
            return Err(Error::Infeasible(format!(
                "class {c} has {} examples but {owners} clients hold it",
                pool.len()
            )));
        }
    }
    Ok(())
}

fn iid_parts(pools: &[Vec<usize>], num_clients: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut all: Vec<usize> = pools.concat();
    all.sort_unstable();
    all.shuffle(rng);
    let counts = largest_remainder(all.len(), &vec![1.0 / num_clients as f64; num_clients]);
    let mut cursor = 0;
    counts
        .into_iter()
        .map(|n| {
            let mut part = all[cursor..cursor + n].to_vec();
            cursor += n;
            part.sort_unstable();
            part
        })
        .collect()
}

/// Partitions `data` according to `spec.mode`.
pub fn partition<T: Scalar>(data: &Dataset<T>, spec: &PartitionSpec) -> Result<Vec<ClientShard>> {
    Ok(partition_with_test(data, None, spec)?.train)
}

/// Partitions the training data and, when a test pool is given, carves
/// per-client test sets from it using the same drawn class proportions
/// (Dirichlet), the same class sets (pathological) or a uniform split (IID).
pub fn partition_with_test<T: Scalar>(
    train: &Dataset<T>,
    test: Option<&Dataset<T>>,
    spec: &PartitionSpec,
) -> Result<FederatedSplit> {
    let all: Vec<usize> = (0..train.num_classes()).collect();
    partition_classes(train, test, spec, &all)
}

/// Like [`partition_with_test`] but only examples whose label is in
/// `classes` are distributed; the prior is restricted to those classes.
pub fn partition_classes<T: Scalar>(
    train: &Dataset<T>,
    test: Option<&Dataset<T>>,
    spec: &PartitionSpec,
    classes: &[usize],
) -> Result<FederatedSplit> {
    spec.validate()?;
    if classes.is_empty() {
        return Err(Error::Empty("classes to partition"));
    }
    let mut seen = vec![false; train.num_classes()];
    for &c in classes {
        if c >= train.num_classes() || std::mem::replace(&mut seen[c], true) {
            return Err(Error::invalid(format!("class {c} is out of range or repeated")));
        }
    }
    if let Some(t) = test {
        if t.num_classes() != train.num_classes() {
            return Err(Error::DimensionMismatch {
                what: "test classes",
                expected: train.num_classes(),
                actual: t.num_classes(),
            });
        }
    }
    let full_prior = spec.prior_for(train.num_classes())?;
    let mass: f64 = classes.iter().map(|&c| full_prior[c]).sum();
    if mass.is_nan() || mass <= 0.0 {
        return Err(Error::invalid("class prior puts no mass on the partitioned classes"));
    }
    let prior: Vec<f64> = classes.iter().map(|&c| full_prior[c] / mass).collect();

    let mut rng = rng_from_seed(spec.seed);
    let k = spec.num_clients;
    let (train_parts, test_parts) = match spec.mode {
        PartitionMode::Dirichlet { alpha } => {
            let pools = shuffled_class_pools(train, classes, &mut rng);
            check_feasible(&pools, k)?;
            let (weights, parts) = dirichlet_weights(&pools, &prior, k, alpha, &mut rng)?;
            let test_parts = test.map(|t| allocate(&shuffled_class_pools(t, classes, &mut rng), &weights));
            (parts, test_parts)
        }
        PartitionMode::Pathological { classes_per_client } => {
            let holders = pathological_holders(classes.len(), k, classes_per_client, &mut rng)?;
            let pools = shuffled_class_pools(train, classes, &mut rng);
            check_feasible(&pools, k)?;
            check_holders(&pools, &holders)?;
            let test_parts = test.map(|t| split_evenly(&shuffled_class_pools(t, classes, &mut rng), &holders, k));
            (split_evenly(&pools, &holders, k), test_parts)
        }
        PartitionMode::Iid => {
            let pools = shuffled_class_pools(train, classes, &mut rng);
            check_feasible(&pools, k)?;
            let parts = iid_parts(&pools, k, &mut rng);
            let test_parts = test.map(|t| iid_parts(&shuffled_class_pools(t, classes, &mut rng), k, &mut rng));
            (parts, test_parts)
        }
    };
    Ok(FederatedSplit {
        train: into_shards(train_parts),
        test: test_parts.unwrap_or_else(|| vec![Vec::new(); k]),
    })
}

fn check_feasible(pools: &[Vec<usize>], num_clients: usize) -> Result<()> {
    let total: usize = pools.iter().map(Vec::len).sum();
    if num_clients > total {
        return Err(Error::Infeasible(format!("{num_clients} clients but only {total} examples")));
    }
    Ok(())
}

/// Shannon entropy (nats) of a shard's label histogram.
pub fn label_entropy<T: Scalar>(data: &Dataset<T>, shard: &ClientShard) -> f64 {
    let hist = label_histogram(data, shard);
    hist.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

/// Normalised label histogram of a shard.
pub fn label_histogram<T: Scalar>(data: &Dataset<T>, shard: &ClientShard) -> Vec<f64> {
    let mut counts = vec![0.0; data.num_classes()];
    for &i in &shard.indices {
        counts[data.labels()[i]] += 1.0;
    }
    let n = shard.n().max(1) as f64;
    counts.iter().map(|c| c / n).collect()
}
