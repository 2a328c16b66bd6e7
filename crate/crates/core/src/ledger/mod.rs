//! Signed, hash-linked block store.
//!
//! A single producer appends blocks; each block commits to its ordered
//! transactions through a Merkle root and to its predecessor through
//! `prev_hash`. State is never stored, only re-derived by replay.

mod block;
mod chain;
mod merkle;
mod state;
mod store;
mod transaction;

use thiserror::Error;

pub use block::{Allocation, Block, GenesisConfig, DEFAULT_FEE};
pub use chain::{validate_chain, Chain, Failure, FailureKind, ValidationReport};
pub use merkle::merkle_root;
pub use state::{apply_transaction, ChainParams, TxEffect, WorldState};
pub use store::{
    chain_path, decode_chain, encode_block, encode_chain, load_chain, save_chain,
    verify_chain_bytes, verify_chain_dir, CHAIN_FILE,
};
pub use transaction::{
    canonical_encode, create_event_tx, donate_tx, event_params, length_prefix, sign_transaction,
    verify_transaction, DonatePayload, Payload, Transaction, TxKind, UnsignedTx,
};

use crate::contracts::ContractError;
use crate::types::{Address, Amount, Hash32, Timestamp};

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("field of {0} bytes exceeds the 4-byte length prefix")]
    EncodingOverflow(usize),
    #[error("signature or hash check failed for tx {0}")]
    BadSignature(Hash32),
    #[error("expected nonce {expected}, got {got}")]
    BadNonce { expected: u64, got: u64 },
    #[error("expected fee {expected}, got {got}")]
    WrongFee { expected: Amount, got: Amount },
    #[error("balance {available} is less than required {needed}")]
    InsufficientBalance { needed: Amount, available: Amount },
    #[error("{0} may not perform this action")]
    Unauthorized(Address),
    #[error("amount overflow")]
    Overflow,
    #[error(transparent)]
    Contract(#[from] ContractError),
    #[error("transaction {index} rejected: {cause}")]
    InvalidTransaction {
        index: usize,
        cause: Box<LedgerError>,
    },
    #[error("block timestamp {got} precedes previous block at {prev}")]
    NonMonotoneTimestamp { prev: Timestamp, got: Timestamp },
    #[error("refunds for event {0} not settled in the finalizing block")]
    UnsettledRefunds(Hash32),
    #[error("invalid genesis: {0}")]
    InvalidGenesis(String),
    #[error("invalid block at height {height} ({kind}): {detail}")]
    InvalidBlock {
        height: u64,
        kind: FailureKind,
        detail: String,
    },
    #[error("corrupt chain at height {height}: {cause}")]
    CorruptChain { height: u64, cause: String },
    #[error("no chain stored")]
    EmptyStore,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl LedgerError {
    /// Short name of the root cause, as shown to operators.
    pub fn kind(&self) -> &'static str {
        match self {
            LedgerError::EncodingOverflow(_) => "EncodingOverflow",
            LedgerError::BadSignature(_) => "BadSignature",
            LedgerError::BadNonce { .. } => "BadNonce",
            LedgerError::WrongFee { .. } => "WrongFee",
            LedgerError::InsufficientBalance { .. } => "InsufficientBalance",
            LedgerError::Unauthorized(_) => "Unauthorized",
            LedgerError::Overflow => "Overflow",
            LedgerError::Contract(e) => e.kind(),
            LedgerError::InvalidTransaction { cause, .. } => cause.kind(),
            LedgerError::NonMonotoneTimestamp { .. } => "NonMonotoneTimestamp",
            LedgerError::UnsettledRefunds(_) => "UnsettledRefunds",
            LedgerError::InvalidGenesis(_) => "InvalidGenesis",
            LedgerError::InvalidBlock { .. } => "InvalidBlock",
            LedgerError::CorruptChain { .. } => "CorruptChain",
            LedgerError::EmptyStore => "EmptyStore",
            LedgerError::Io(_) => "IoError",
        }
    }

    /// The innermost error, looking through `InvalidTransaction`.
    pub fn root(&self) -> &LedgerError {
        match self {
            LedgerError::InvalidTransaction { cause, .. } => cause.root(),
            other => other,
        }
    }
}
