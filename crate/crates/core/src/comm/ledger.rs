use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::comm::{payload_bytes, percent_of_dense, EncodingScheme};
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Uplink,
    Downlink,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Uplink => "uplink",
            Direction::Downlink => "downlink",
        })
    }
}

/// When a transmission happened: inside training round `r`, or as a one-time
/// setup step (mask discovery or refresh) once round `r` has finished; `0` is
/// before any training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Round(usize),
    Setup(usize),
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Round(r) => write!(f, "{r}"),
            Stage::Setup(r) => write!(f, "setup-{r}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Model,
    Saliency,
    Mask,
}

/// Byte count of one transmission under every encoding scheme.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchemeBytes([u64; 4]);

impl SchemeBytes {
    /// A `p`-parameter vector with `k` non-zeros.
    pub fn for_vector(p: u64, k: u64) -> Self {
        Self(EncodingScheme::ALL.map(|s| payload_bytes(p, k, s)))
    }

    /// A payload whose size does not depend on the scheme.
    pub fn uniform(bytes: u64) -> Self {
        Self([bytes; 4])
    }

    pub fn get(&self, scheme: EncodingScheme) -> u64 {
        self.0[scheme.index()]
    }

    pub fn add(&mut self, other: &SchemeBytes) {
        for (a, b) in self.0.iter_mut().zip(other.0) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transmission {
    pub stage: Stage,
    pub direction: Direction,
    pub client: usize,
    pub payload: Payload,
    pub bytes: SchemeBytes,
}

/// Append-only record of everything sent between server and clients.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommLedger {
    entries: Vec<Transmission>,
}

impl CommLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[Transmission] {
        &self.entries
    }

    pub fn record(&mut self, t: Transmission) {
        self.entries.push(t);
    }

    /// A model (or model update) with `k` of `p` coordinates on the wire.
    pub fn record_model(&mut self, round: usize, direction: Direction, client: usize, p: u64, k: u64) {
        self.record(Transmission {
            stage: Stage::Round(round),
            direction,
            client,
            payload: Payload::Model,
            bytes: SchemeBytes::for_vector(p, k),
        });
    }

    /// Dense saliency vector sent in the setup after round `round`; always
    /// `4p` bytes, since a fully dense vector is sent as plain values.
    pub fn record_saliency_upload(&mut self, round: usize, client: usize, p: u64) {
        self.record(Transmission {
            stage: Stage::Setup(round),
            direction: Direction::Uplink,
            client,
            payload: Payload::Saliency,
            bytes: SchemeBytes::uniform(4 * p),
        });
    }

    /// Packed mask broadcast in the setup after round `round`; always `ceil(p / 8)` bytes.
    pub fn record_mask_broadcast(&mut self, round: usize, client: usize, p: u64) {
        self.record(Transmission {
            stage: Stage::Setup(round),
            direction: Direction::Downlink,
            client,
            payload: Payload::Mask,
            bytes: SchemeBytes::uniform(p.div_ceil(8)),
        });
    }

    pub fn summarize(&self) -> LedgerSummary {
        let mut rounds: BTreeMap<usize, RoundTraffic> = BTreeMap::new();
        let mut setup = Traffic::default();
        for t in &self.entries {
            match t.stage {
                Stage::Round(r) => rounds
                    .entry(r)
                    .or_insert_with(|| RoundTraffic {
                        round: r,
                        ..Default::default()
                    })
                    .traffic
                    .add(t.direction, &t.bytes),
                Stage::Setup(_) => setup.add(t.direction, &t.bytes),
            }
        }
        let mut cumulative = Traffic::default();
        let per_round: Vec<RoundTraffic> = rounds
            .into_values()
            .map(|mut rt| {
                cumulative.uplink.add(&rt.traffic.uplink);
                cumulative.downlink.add(&rt.traffic.downlink);
                rt.cumulative = cumulative;
                rt
            })
            .collect();
        LedgerSummary {
            per_round,
            rounds_total: cumulative,
            setup,
        }
    }

    /// `round,direction,client,scheme,bytes`; one row per scheme per entry.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        self.write_csv_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_to<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record(["round", "direction", "client", "scheme", "bytes"])?;
        for t in &self.entries {
            for scheme in EncodingScheme::ALL {
                w.write_record([
                    t.stage.to_string(),
                    t.direction.to_string(),
                    t.client.to_string(),
                    scheme.to_string(),
                    t.bytes.get(scheme).to_string(),
                ])?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Traffic {
    pub uplink: SchemeBytes,
    pub downlink: SchemeBytes,
}

impl Traffic {
    pub fn add(&mut self, direction: Direction, bytes: &SchemeBytes) {
        match direction {
            Direction::Uplink => self.uplink.add(bytes),
            Direction::Downlink => self.downlink.add(bytes),
        }
    }

    pub fn get(&self, direction: Direction, scheme: EncodingScheme) -> u64 {
        match direction {
            Direction::Uplink => self.uplink.get(scheme),
            Direction::Downlink => self.downlink.get(scheme),
        }
    }

    pub fn total(&self, scheme: EncodingScheme) -> u64 {
        self.uplink.get(scheme) + self.downlink.get(scheme)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTraffic {
    pub round: usize,
    pub traffic: Traffic,
    pub cumulative: Traffic,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub per_round: Vec<RoundTraffic>,
    /// Sum over training rounds, setup excluded.
    pub rounds_total: Traffic,
    pub setup: Traffic,
}

impl LedgerSummary {
    /// Per-round totals under `scheme` as a percentage of the dense scheme,
    /// one decimal.
    pub fn percent_of_dense(&self, scheme: EncodingScheme) -> f64 {
        percent_of_dense(
            self.rounds_total.total(scheme),
            self.rounds_total.total(EncodingScheme::Dense),
        )
    }

    /// Serializable flat view used in result files.
    pub fn report(&self) -> LedgerReport {
        let schemes = EncodingScheme::ALL
            .iter()
            .map(|&s| {
                (
                    s.as_str().to_string(),
                    SchemeReport {
                        round_uplink: self.rounds_total.uplink.get(s),
                        round_downlink: self.rounds_total.downlink.get(s),
                        setup_uplink: self.setup.uplink.get(s),
                        setup_downlink: self.setup.downlink.get(s),
                        percent_of_dense: self.percent_of_dense(s),
                    },
                )
            })
            .collect();
        LedgerReport {
            rounds: self.per_round.len(),
            schemes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeReport {
    pub round_uplink: u64,
    pub round_downlink: u64,
    pub setup_uplink: u64,
    pub setup_downlink: u64,
    pub percent_of_dense: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub rounds: usize,
    pub schemes: BTreeMap<String, SchemeReport>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_ledger_sums_to_zero() {
        let s = CommLedger::new().summarize();
        for scheme in EncodingScheme::ALL {
            assert_eq!(s.rounds_total.total(scheme), 0);
            assert_eq!(s.setup.total(scheme), 0);
        }
        assert!(s.per_round.is_empty());
    }

    #[test]
    fn identical_entries_add_up() {
        let mut l = CommLedger::new();
        l.record_model(0, Direction::Uplink, 3, 100, 50);
        let one = l.summarize().rounds_total.uplink;
        l.record_model(0, Direction::Uplink, 3, 100, 50);
        let two = l.summarize().rounds_total.uplink;
        for s in EncodingScheme::ALL {
            assert_eq!(two.get(s), 2 * one.get(s));
        }
    }

    #[test]
    fn setup_is_kept_apart_from_rounds() {
        let mut l = CommLedger::new();
        for c in 0..3 {
            l.record_saliency_upload(0, c, 16);
            l.record_mask_broadcast(0, c, 16);
        }
        l.record_model(0, Direction::Downlink, 0, 16, 8);
        let s = l.summarize();
        let expected = crate::comm::setup_costs(16, 3);
        for scheme in EncodingScheme::ALL {
            assert_eq!(s.setup.uplink.get(scheme), expected.saliency_upload);
            assert_eq!(s.setup.downlink.get(scheme), expected.mask_broadcast);
        }
        assert_eq!(s.rounds_total.downlink.get(EncodingScheme::ValuesOnly), 32);
        assert_eq!(s.rounds_total.uplink.get(EncodingScheme::ValuesOnly), 0);
    }

    #[test]
    fn cumulative_and_percentages() {
        let mut l = CommLedger::new();
        for r in 0..4 {
            for c in 0..2 {
                l.record_model(r, Direction::Downlink, c, 1000, 500);
                l.record_model(r, Direction::Uplink, c, 1000, 500);
            }
        }
        let s = l.summarize();
        assert_eq!(s.per_round.len(), 4);
        assert_eq!(s.per_round[3].cumulative, s.rounds_total);
        assert_eq!(s.per_round[1].cumulative.uplink.get(EncodingScheme::ValuesOnly), 2 * 2 * 2000);
        assert_eq!(s.percent_of_dense(EncodingScheme::ValuesOnly), 50.0);
        assert_eq!(s.percent_of_dense(EncodingScheme::Bitmask), 53.1);
    }

    #[test]
    fn csv_has_one_row_per_scheme() {
        let mut l = CommLedger::new();
        l.record_saliency_upload(0, 1, 8);
        l.record_model(2, Direction::Uplink, 1, 8, 4);
        let mut w = csv::Writer::from_writer(vec![]);
        l.write_csv_to(&mut w).unwrap();
        let text = String::from_utf8(w.into_inner().unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "round,direction,client,scheme,bytes");
        assert_eq!(lines.len(), 1 + 8);
        assert_eq!(lines[1], "setup-0,uplink,1,dense,32");
        assert!(lines.contains(&"2,uplink,1,values_only,16"));
        assert!(lines.contains(&"2,uplink,1,bitmask,17"));
    }
}
