use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::PartitionMode;
use crate::error::{Error, Result};

/// Training/masking strategy of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Saliency mask discovered once at initialization, then sparse FedAvg.
    Ssfl,
    /// Plain FedAvg, no mask.
    Dense,
    /// One uniformly random mask shared by every client.
    RandomGlobal,
    /// An independent random mask per client.
    RandomLocal,
    /// The saliency mask with its bits permuted inside each layer.
    Shuffled,
    /// Dense local training; each client uploads only its top-k magnitude weights.
    TopkWeights,
    /// Dense rounds first, then saliency discovery on the trained weights.
    Warmup,
}

impl Variant {
    pub const ALL: [Variant; 7] = [
        Variant::Ssfl,
        Variant::Dense,
        Variant::RandomGlobal,
        Variant::RandomLocal,
        Variant::Shuffled,
        Variant::TopkWeights,
        Variant::Warmup,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Ssfl => "ssfl",
            Variant::Dense => "dense",
            Variant::RandomGlobal => "random_global",
            Variant::RandomLocal => "random_local",
            Variant::Shuffled => "shuffled",
            Variant::TopkWeights => "topk_weights",
            Variant::Warmup => "warmup",
        }
    }

    /// Whether every client trains under one common mask (once it exists).
    pub fn uses_shared_mask(self) -> bool {
        matches!(
            self,
            Variant::Ssfl | Variant::RandomGlobal | Variant::Shuffled | Variant::Warmup
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown variant {s:?}")))
    }
}

/// Out-of-distribution schedule: classes withheld from the initial clients
/// and introduced, with new clients, once round `refresh_round` is over.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OodSchedule {
    pub holdout_classes: Vec<usize>,
    pub refresh_round: usize,
    pub new_clients: usize,
    /// Re-run mask discovery when the new clients join (shared-mask variants).
    #[serde(default = "yes")]
    pub refresh_mask: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlConfig {
    pub num_clients: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    /// Fixed number of local steps; overrides `local_epochs` when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub local_steps: Option<usize>,
    pub client_fraction: f64,
    pub sparsity: f64,
    pub batch_size: usize,
    pub lr0: f64,
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub partition: PartitionMode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
    pub variant: Variant,
    pub warmup_rounds: usize,
    pub hidden: Vec<usize>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ood: Option<OodSchedule>,
}

impl Default for FlConfig {
    fn default() -> Self {
        Self {
            num_clients: 100,
            rounds: 500,
            local_epochs: 5,
            local_steps: None,
            client_fraction: 0.1,
            sparsity: 0.5,
            batch_size: 16,
            lr0: 0.1,
            lr_decay: 0.998,
            weight_decay: 0.0005,
            partition: PartitionMode::Dirichlet { alpha: 0.3 },
            prior: None,
            variant: Variant::Ssfl,
            warmup_rounds: 10,
            hidden: vec![64, 64],
            seed: 0,
            ood: None,
        }
    }
}

impl FlConfig {
    /// Checks every field, naming the first offending one.
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::invalid(format!("{field}: {why}")));
        if self.num_clients == 0 {
            return bad("num_clients", "must be at least 1".into());
        }
        if !(self.client_fraction > 0.0 && self.client_fraction <= 1.0) {
            return bad("client_fraction", format!("must lie in (0, 1], got {}", self.client_fraction));
        }
        if !(self.sparsity > 0.0 && self.sparsity < 1.0) {
            return bad("sparsity", format!("must lie in (0, 1), got {}", self.sparsity));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1".into());
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad("lr0", format!("must be positive, got {}", self.lr0));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return bad("lr_decay", format!("must lie in (0, 1], got {}", self.lr_decay));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay", format!("must be non-negative, got {}", self.weight_decay));
        }
        if self.local_steps.is_none() && self.local_epochs == 0 {
            return bad("local_epochs", "must be at least 1 unless local_steps is set".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden", "layer widths must be positive".into());
        }
        match self.partition {
            PartitionMode::Dirichlet { alpha } if !(alpha > 0.0 && alpha.is_finite()) => {
                return bad("partition.alpha", format!("must be positive, got {alpha}"));
            }
            PartitionMode::Pathological { classes_per_client: 0 } => {
                return bad("partition.classes_per_client", "must be at least 1".into());
            }
            _ => {}
        }
        if let Some(ood) = &self.ood {
            if ood.holdout_classes.is_empty() {
                return bad("ood.holdout_classes", "must not be empty".into());
            }
            if ood.new_clients == 0 {
                return bad("ood.new_clients", "must be at least 1".into());
            }
            if ood.refresh_round == 0 || ood.refresh_round >= self.rounds {
                return bad("ood.refresh_round", format!("must lie in [1, {}), got {}", self.rounds, ood.refresh_round));
            }
        }
        Ok(())
    }

    /// Clients taking part in a round when `available` are online.
    pub fn clients_per_round(&self, available: usize) -> usize {
        ((self.client_fraction * available as f64).ceil() as usize).clamp(1, available.max(1))
    }

    /// Local steps for a client holding `n` examples.
    pub fn local_steps_for(&self, n: usize) -> usize {
        self.local_steps
            .unwrap_or_else(|| (self.local_epochs * n).div_ceil(self.batch_size))
    }

    pub fn lr_at_round(&self, round: usize) -> f64 {
        self.lr0 * self.lr_decay.powi(round as i32)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_training_protocol() {
        let c = FlConfig::default();
        assert_eq!((c.lr0, c.lr_decay, c.weight_decay, c.batch_size, c.local_epochs), (0.1, 0.998, 0.0005, 16, 5));
        assert!(c.validate().is_ok());
        assert_eq!(c.local_steps_for(312), 98);
        assert_eq!(c.clients_per_round(16), 2);
    }

    #[test]
    fn validation_names_field() {
        let c = FlConfig {
            client_fraction: 0.0,
            ..Default::default()
        };
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("client_fraction"), "{msg}");
        let c = FlConfig {
            partition: PartitionMode::Dirichlet { alpha: -1.0 },
            ..Default::default()
        };
        assert!(c.validate().unwrap_err().to_string().contains("partition.alpha"));
    }

    #[test]
    fn variant_names_roundtrip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.as_str()));
        }
    }
}
