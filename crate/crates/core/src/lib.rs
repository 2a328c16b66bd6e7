//! Donation tracking on a signed, hash-linked ledger.
//!
//! The crate is organised by subsystem:
//!
//! * [`ledger`] – canonical transaction encoding, signatures, Merkle
//!   commitments, block production, state replay, persistence and
//!   tamper verification.
//! * [`contracts`] – the campaign escrow and donation tracking state
//!   machines executed by the ledger.
//! * [`identity`] – keypairs, `did:dnb` identifiers, wallets and
//!   challenge-response authentication.
//! * [`content_store`] – content-addressed blob storage and share links.
//! * [`simnet`] – a seeded virtual-time network simulator measuring
//!   latency and throughput.
//!
//! Everything runs on virtual time; nothing in the core reads a wall clock.

pub mod content_store;
pub mod contracts;
pub mod error;
pub mod identity;
pub mod ledger;
pub mod simnet;
pub mod types;

pub use content_store::{Cid, ContentStore, Platform};
pub use contracts::{ContractError, DonationEventState, DonationRecord, EventStatus};
pub use error::ParseError;
pub use identity::{Did, KeyPair, PublicKey, Wallet};
pub use ledger::{Block, Chain, GenesisConfig, LedgerError, Transaction};
pub use simnet::{SimConfig, SimMetrics, Workload};
pub use types::{Address, Amount, Hash32, Timestamp};
