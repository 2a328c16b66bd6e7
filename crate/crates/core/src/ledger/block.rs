use serde::{Deserialize, Serialize};

use crate::identity::{PublicKey, SIGNATURE_SCHEME};
use crate::ledger::merkle::merkle_root;
use crate::ledger::transaction::{length_prefix, Transaction};
use crate::ledger::LedgerError;
use crate::types::{Address, Amount, Hash32, Timestamp};

pub const DEFAULT_FEE: Amount = Amount(1000);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Allocation {
    pub address: Address,
    pub amount: Amount,
}

/// Parameters fixed at genesis and committed to by the genesis block hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenesisConfig {
    /// Signature scheme every transaction on this chain uses.
    pub scheme: String,
    /// Block producer; the only sender allowed to emit refunds.
    pub producer: PublicKey,
    /// Flat fee charged on every user transaction.
    pub fee: Amount,
    pub allocations: Vec<Allocation>,
}

impl GenesisConfig {
    pub fn new(producer: PublicKey, fee: Amount, allocations: Vec<Allocation>) -> Self {
        GenesisConfig {
            scheme: SIGNATURE_SCHEME.to_string(),
            producer,
            fee,
            allocations,
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>, LedgerError> {
        let mut out = Vec::new();
        out.extend_from_slice(&length_prefix(self.scheme.len())?);
        out.extend_from_slice(self.scheme.as_bytes());
        out.extend_from_slice(self.producer.as_bytes());
        out.extend_from_slice(&self.fee.to_be_bytes());
        out.extend_from_slice(&length_prefix(self.allocations.len())?);
        for a in &self.allocations {
            out.extend_from_slice(a.address.as_bytes());
            out.extend_from_slice(&a.amount.to_be_bytes());
        }
        Ok(out)
    }

    pub fn digest(&self) -> Result<Hash32, LedgerError> {
        Ok(Hash32::digest(&self.encode()?))
    }

    pub fn check(&self) -> Result<(), LedgerError> {
        if self.scheme != SIGNATURE_SCHEME {
            return Err(LedgerError::InvalidGenesis(format!(
                "unsupported signature scheme {:?}",
                self.scheme
            )));
        }
        let mut total = Amount::ZERO;
        let mut seen = std::collections::BTreeSet::new();
        for a in &self.allocations {
            if a.address == Address::FEE_SINK {
                return Err(LedgerError::InvalidGenesis(
                    "allocation to the fee sink".into(),
                ));
            }
            if !seen.insert(a.address) {
                return Err(LedgerError::InvalidGenesis(format!(
                    "duplicate allocation for {}",
                    a.address
                )));
            }
            total = total.checked_add(a.amount).ok_or(LedgerError::Overflow)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Block {
    pub height: u64,
    pub prev_hash: Hash32,
    pub merkle_root: Hash32,
    pub timestamp: Timestamp,
    pub txs: Vec<Transaction>,
    pub block_hash: Hash32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genesis: Option<GenesisConfig>,
}

impl Block {
    /// Assemble a block and compute its commitments.
    pub fn new(
        height: u64,
        prev_hash: Hash32,
        timestamp: Timestamp,
        txs: Vec<Transaction>,
        genesis: Option<GenesisConfig>,
    ) -> Result<Self, LedgerError> {
        let merkle_root = merkle_root(&txs.iter().map(|t| t.tx_hash).collect::<Vec<_>>());
        let mut block = Block {
            height,
            prev_hash,
            merkle_root,
            timestamp,
            txs,
            block_hash: Hash32::ZERO,
            genesis,
        };
        block.block_hash = block.compute_hash()?;
        Ok(block)
    }

    pub fn genesis(config: GenesisConfig, timestamp: Timestamp) -> Result<Self, LedgerError> {
        Self::new(0, Hash32::ZERO, timestamp, Vec::new(), Some(config))
    }

    /// height (8, BE) ‖ prev_hash ‖ merkle_root ‖ timestamp (8, BE) ‖
    /// genesis digest (zero bytes on non-genesis blocks).
    pub fn header_preimage(&self) -> Result<Vec<u8>, LedgerError> {
        let extra = match &self.genesis {
            Some(g) => g.digest()?,
            None => Hash32::ZERO,
        };
        let mut out = Vec::with_capacity(8 + 32 + 32 + 8 + 32);
        out.extend_from_slice(&self.height.to_be_bytes());
        out.extend_from_slice(self.prev_hash.as_bytes());
        out.extend_from_slice(self.merkle_root.as_bytes());
        out.extend_from_slice(&self.timestamp.0.to_be_bytes());
        out.extend_from_slice(extra.as_bytes());
        Ok(out)
    }

    pub fn compute_hash(&self) -> Result<Hash32, LedgerError> {
        Ok(Hash32::digest(&self.header_preimage()?))
    }

    pub fn computed_merkle_root(&self) -> Hash32 {
        merkle_root(&self.txs.iter().map(|t| t.tx_hash).collect::<Vec<_>>())
    }
}
