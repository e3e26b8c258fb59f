//! Analysis toolkit for origin-destination flows of an urban transit network.
//!
//! The crate is organised along the stages of the analysis:
//!
//! * [`ingest`]: tap events and trip records, period assignment, working-day filtering.
//! * [`flowgraph`]: directed origin-destination count matrices per date and period.
//! * [`community`]: directed-modularity Louvain, consensus partitions, snapshot
//!   variability and model-based clustering of daily snapshots.
//! * [`activity`]: daily trip chains, H/W/E place labels and `NxEy` pattern codes.
//! * [`spatial`]: topic popularity, sigmoid attraction, destination choice,
//!   gravity baseline and correlation evaluation.
//! * [`temporal`]: the evening volume recurrence, its estimation, and penalized
//!   spline additive models linking station features to its parameters.
//! * [`synth`]: seeded generators with known ground truth for all of the above.

pub mod activity;
pub mod community;
pub mod error;
pub mod flowgraph;
pub mod ingest;
pub mod seeds;
pub mod spatial;
pub mod synth;
pub mod temporal;

pub use error::{Error, Result};
