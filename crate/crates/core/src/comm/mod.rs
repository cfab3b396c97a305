//! Byte-exact accounting of server/client traffic under several encodings.

mod encoding;
mod ledger;

pub use encoding::{
    nonzeros_at_density, payload_bytes, payload_bytes_at_density, percent_of_dense, setup_costs, EncodingScheme,
    SetupCosts, INDEX_BYTES, VALUE_BYTES,
};
pub use ledger::{
    CommLedger, Direction, LedgerReport, LedgerSummary, Payload, RoundTraffic, SchemeBytes, SchemeReport, Stage,
    Traffic, Transmission,
};
