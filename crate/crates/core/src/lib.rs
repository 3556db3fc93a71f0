//! Algebraic watchdog: probabilistic detection of misbehaving relays in
//! network-coded wireless networks.
//!
//! A source overhears its peers and the relay that combines their packets,
//! then runs a trellis over the hash-consistent candidates to estimate how
//! plausible the relay's output is. Low plausibility flags the relay.

pub mod analysis;
pub mod channel;
pub mod cli;
pub mod error;
pub mod field;
pub mod hashing;
pub mod inference;
pub mod multihop;
pub mod packet;
pub mod sim;

pub use channel::Bsc;
pub use error::{Error, Result};
pub use field::{FieldElement, FieldParams, GaloisField};
pub use hashing::{HashFamily, HashSpec};
pub use inference::{Pruning, Verdict, WatchdogObservation};
pub use packet::{Codebook, NodeId, Packet};
