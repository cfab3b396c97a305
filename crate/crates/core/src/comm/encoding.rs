use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bytes per transmitted value (fp32) and per COO index.
pub const VALUE_BYTES: u64 = 4;
pub const INDEX_BYTES: u64 = 4;

/// How a (possibly sparse) parameter vector is put on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncodingScheme {
    /// Every one of the `P` values.
    Dense,
    /// Only the `k` non-zero values; receiver already knows the positions.
    ValuesOnly,
    /// `k` values plus `k` explicit indices.
    Coo,
    /// `k` values plus a `P`-bit occupancy mask.
    Bitmask,
}

impl EncodingScheme {
    pub const ALL: [EncodingScheme; 4] = [
        EncodingScheme::Dense,
        EncodingScheme::ValuesOnly,
        EncodingScheme::Coo,
        EncodingScheme::Bitmask,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EncodingScheme::Dense => "dense",
            EncodingScheme::ValuesOnly => "values_only",
            EncodingScheme::Coo => "coo",
            EncodingScheme::Bitmask => "bitmask",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for EncodingScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncodingScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EncodingScheme::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown encoding scheme {s:?}")))
    }
}

/// Size in bytes of a `p`-parameter vector with `k` non-zeros.
pub fn payload_bytes(p: u64, k: u64, scheme: EncodingScheme) -> u64 {
    match scheme {
        EncodingScheme::Dense => VALUE_BYTES * p,
        EncodingScheme::ValuesOnly => VALUE_BYTES * k,
        EncodingScheme::Coo => (VALUE_BYTES + INDEX_BYTES) * k,
        EncodingScheme::Bitmask => VALUE_BYTES * k + p.div_ceil(8),
    }
}

/// Non-zero count `round(s * p)` for density `s` in `(0, 1]`.
pub fn nonzeros_at_density(p: u64, density: f64) -> Result<u64> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(Error::invalid(format!("density must lie in (0, 1], got {density}")));
    }
    Ok(((density * p as f64).round() as u64).min(p))
}

pub fn payload_bytes_at_density(p: u64, density: f64, scheme: EncodingScheme) -> Result<u64> {
    if p == 0 {
        return Err(Error::invalid("parameter count must be positive"));
    }
    Ok(payload_bytes(p, nonzeros_at_density(p, density)?, scheme))
}

/// `100 * bytes / dense_bytes`, rounded to one decimal.
pub fn percent_of_dense(bytes: u64, dense_bytes: u64) -> f64 {
    if dense_bytes == 0 {
        return 0.0;
    }
    (1000.0 * bytes as f64 / dense_bytes as f64).round() / 10.0
}

/// One-time costs of mask discovery for `clients` clients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetupCosts {
    /// Dense fp32 saliency vectors, one per client.
    pub saliency_upload: u64,
    /// Packed bitmask, one per client.
    pub mask_broadcast: u64,
}

pub fn setup_costs(p: u64, clients: u64) -> SetupCosts {
    SetupCosts {
        saliency_upload: clients * VALUE_BYTES * p,
        mask_broadcast: clients * p.div_ceil(8),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pct(p: u64, s: f64, scheme: EncodingScheme) -> f64 {
        percent_of_dense(
            payload_bytes_at_density(p, s, scheme).unwrap(),
            payload_bytes_at_density(p, s, EncodingScheme::Dense).unwrap(),
        )
    }

    #[test]
    fn encoding_table() {
        let p = 1_730_000;
        assert_eq!(pct(p, 0.5, EncodingScheme::ValuesOnly), 50.0);
        assert_eq!(pct(p, 0.5, EncodingScheme::Bitmask), 53.1);
        assert_eq!(pct(p, 0.5, EncodingScheme::Coo), 100.0);
        assert_eq!(pct(p, 0.05, EncodingScheme::ValuesOnly), 5.0);
        assert_eq!(pct(p, 0.05, EncodingScheme::Bitmask), 8.1);
        assert_eq!(pct(p, 0.05, EncodingScheme::Coo), 10.0);
    }

    #[test]
    fn full_density_values_only_is_dense() {
        assert_eq!(payload_bytes_at_density(1234, 1.0, EncodingScheme::ValuesOnly).unwrap(), 4 * 1234);
    }

    #[test]
    fn setup_examples() {
        assert_eq!(
            setup_costs(8, 1),
            SetupCosts {
                saliency_upload: 32,
                mask_broadcast: 1
            }
        );
        assert_eq!(setup_costs(8, 0), SetupCosts { saliency_upload: 0, mask_broadcast: 0 });
        assert_eq!(setup_costs(1_730_000, 100).saliency_upload, 692_000_000);
    }

    #[test]
    fn scheme_names_roundtrip() {
        for e in EncodingScheme::ALL {
            assert_eq!(e.as_str().parse::<EncodingScheme>().unwrap(), e);
        }
        assert!("csr".parse::<EncodingScheme>().is_err());
    }

    #[test]
    fn bitmask_coo_crossover_at_one_over_32() {
        let p = 3200;
        // k = 100 = p / 32: bitmask and coo cost the same.
        assert_eq!(payload_bytes(p, 100, EncodingScheme::Bitmask), payload_bytes(p, 100, EncodingScheme::Coo));
        assert!(payload_bytes(p, 99, EncodingScheme::Bitmask) > payload_bytes(p, 99, EncodingScheme::Coo));
        assert!(payload_bytes(p, 101, EncodingScheme::Bitmask) < payload_bytes(p, 101, EncodingScheme::Coo));
    }

    proptest! {
        #[test]
        fn scheme_ordering(p in 1u64..5_000_000, s in 0.0001f64..=1.0) {
            let k = nonzeros_at_density(p, s).unwrap();
            let v = payload_bytes(p, k, EncodingScheme::ValuesOnly);
            let b = payload_bytes(p, k, EncodingScheme::Bitmask);
            let c = payload_bytes(p, k, EncodingScheme::Coo);
            prop_assert!(v <= b);
            prop_assert!(v <= c);
            prop_assert_eq!(b < c, p.div_ceil(8) < 4 * k);
            if 32 * k >= p + 31 {
                prop_assert!(b <= c);
            }
        }
    }
}
