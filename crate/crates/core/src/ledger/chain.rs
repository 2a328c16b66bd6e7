use std::fmt;

use serde::Serialize;

use crate::contracts::RefundDue;
use crate::identity::{KeyPair, SIGNATURE_SCHEME};
use crate::ledger::block::{Block, GenesisConfig};
use crate::ledger::state::{ChainParams, WorldState};
use crate::ledger::transaction::{Payload, Transaction, UnsignedTx};
use crate::ledger::LedgerError;
use crate::types::{Amount, Hash32, Timestamp};

/// Hash-linked blocks plus the state derived from replaying them.
#[derive(Clone, Debug)]
pub struct Chain {
    blocks: Vec<Block>,
    state: WorldState,
    params: ChainParams,
}

impl Chain {
    pub fn new(genesis: GenesisConfig, timestamp: Timestamp) -> Result<Self, LedgerError> {
        let state = WorldState::from_genesis(&genesis)?;
        let params = ChainParams::from_genesis(&genesis);
        let block = Block::genesis(genesis, timestamp)?;
        Ok(Chain {
            blocks: vec![block],
            state,
            params,
        })
    }

    /// Rebuild a chain by replaying `blocks` with full validation.
    pub fn from_blocks(blocks: Vec<Block>) -> Result<Self, LedgerError> {
        let mut replay = Replay::default();
        for block in &blocks {
            replay.step(block).map_err(|f| LedgerError::CorruptChain {
                height: f.height,
                cause: format!("{}: {}", f.kind, f.detail),
            })?;
        }
        let (state, params) = replay.finish().ok_or(LedgerError::EmptyStore)?;
        Ok(Chain {
            blocks,
            state,
            params,
        })
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("a chain always holds its genesis block")
    }

    pub fn height(&self) -> u64 {
        self.tip().height
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn params(&self) -> &ChainParams {
        &self.params
    }

    pub fn fee(&self) -> Amount {
        self.params.fee
    }

    pub fn genesis_config(&self) -> &GenesisConfig {
        self.blocks[0]
            .genesis
            .as_ref()
            .expect("genesis block carries its config")
    }

    /// Next nonce for the given signer, from committed state.
    pub fn next_nonce(&self, keys: &KeyPair) -> u64 {
        self.state.nonce(&keys.address())
    }

    /// Refunds the producer would have to emit in a block at `timestamp`.
    pub fn refunds_due_at(&self, timestamp: Timestamp) -> Result<Vec<RefundDue>, LedgerError> {
        let mut state = self.state.clone();
        state.begin_block(timestamp)
    }

    /// Assemble the next block: producer refunds for campaigns failing at
    /// `timestamp` first, then `pending` in order. Does not modify the chain.
    pub fn build_block(
        &self,
        producer: &KeyPair,
        pending: &[Transaction],
        timestamp: Timestamp,
    ) -> Result<Block, LedgerError> {
        self.assemble(producer, pending, timestamp).map(|(block, _)| block)
    }

    fn assemble(
        &self,
        producer: &KeyPair,
        pending: &[Transaction],
        timestamp: Timestamp,
    ) -> Result<(Block, WorldState), LedgerError> {
        let tip = self.tip();
        if timestamp < tip.timestamp {
            return Err(LedgerError::NonMonotoneTimestamp {
                prev: tip.timestamp,
                got: timestamp,
            });
        }
        if *producer.public() != self.params.producer {
            return Err(LedgerError::Unauthorized(producer.address()));
        }
        let mut state = self.state.clone();
        let refunds = state.begin_block(timestamp)?;
        let mut txs = Vec::with_capacity(refunds.len() + pending.len());
        for refund in refunds {
            let tx = UnsignedTx {
                sender_pk: *producer.public(),
                nonce: state.nonce(&producer.address()),
                fee: Amount::ZERO,
                payload: Payload::Refund(refund),
            }
            .sign(producer)?;
            state.apply_transaction(&self.params, &tx, timestamp)?;
            txs.push(tx);
        }
        for (index, tx) in pending.iter().enumerate() {
            state
                .apply_transaction(&self.params, tx, timestamp)
                .map_err(|cause| LedgerError::InvalidTransaction {
                    index,
                    cause: Box::new(cause),
                })?;
            txs.push(tx.clone());
        }
        state.end_block()?;
        let block = Block::new(tip.height + 1, tip.block_hash, timestamp, txs, None)?;
        Ok((block, state))
    }

    /// Build the next block and append it.
    pub fn produce_block(
        &mut self,
        producer: &KeyPair,
        pending: &[Transaction],
        timestamp: Timestamp,
    ) -> Result<&Block, LedgerError> {
        let (block, state) = self.assemble(producer, pending, timestamp)?;
        self.blocks.push(block);
        self.state = state;
        Ok(self.tip())
    }

    /// Validate and append an externally built block.
    pub fn append_block(&mut self, block: Block) -> Result<(), LedgerError> {
        let tip = self.tip();
        let failure = |kind: FailureKind, detail: String| LedgerError::InvalidBlock {
            height: block.height,
            kind,
            detail,
        };
        if block.height != tip.height + 1 {
            return Err(failure(
                FailureKind::Height,
                format!("expected {}", tip.height + 1),
            ));
        }
        if block.genesis.is_some() {
            return Err(failure(FailureKind::Genesis, "unexpected genesis config".into()));
        }
        let state = check_block(&self.state, &self.params, tip, &block)
            .map_err(|(kind, detail)| failure(kind, detail))?;
        self.blocks.push(block);
        self.state = state;
        Ok(())
    }

    pub fn validate(&self) -> ValidationReport {
        validate_chain(&self.blocks)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FailureKind {
    /// Record could not be decoded or is not in canonical form.
    Decode,
    Genesis,
    Height,
    PrevHash,
    Timestamp,
    TxHash,
    Signature,
    MerkleRoot,
    BlockHash,
    /// Replaying the transactions against state failed.
    StateTransition,
}

impl fmt::Display for FailureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub height: u64,
    pub kind: FailureKind,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub blocks_checked: u64,
    pub tip_hash: Option<Hash32>,
    pub failure: Option<Failure>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }

    pub fn failing_height(&self) -> Option<u64> {
        self.failure.as_ref().map(|f| f.height)
    }

    pub(crate) fn failed(blocks_checked: u64, failure: Failure) -> Self {
        ValidationReport {
            blocks_checked,
            tip_hash: None,
            failure: Some(failure),
        }
    }
}

/// Check headers, signatures and commitments of `block` on top of `prev`,
/// then replay it. Returns the resulting state.
fn check_block(
    state: &WorldState,
    params: &ChainParams,
    prev: &Block,
    block: &Block,
) -> Result<WorldState, (FailureKind, String)> {
    if block.prev_hash != prev.block_hash {
        return Err((
            FailureKind::PrevHash,
            format!("prev_hash {} != {}", block.prev_hash, prev.block_hash),
        ));
    }
    if block.timestamp < prev.timestamp {
        return Err((
            FailureKind::Timestamp,
            format!("{} < {}", block.timestamp, prev.timestamp),
        ));
    }
    check_commitments(block)?;
    let mut next = state.clone();
    let refunds = next
        .begin_block(block.timestamp)
        .map_err(|e| (FailureKind::StateTransition, e.to_string()))?;
    // Producer refunds must lead the block, in the order they were owed.
    let leading: Vec<RefundDue> = block
        .txs
        .iter()
        .take(refunds.len())
        .filter_map(|tx| match &tx.payload {
            Payload::Refund(r) => Some(*r),
            _ => None,
        })
        .collect();
    if leading != refunds {
        return Err((
            FailureKind::StateTransition,
            "refund transactions do not match finalized campaigns".into(),
        ));
    }
    for (i, tx) in block.txs.iter().enumerate() {
        next.apply_verified(params, tx, block.timestamp)
            .map_err(|e| (FailureKind::StateTransition, format!("tx {i}: {e}")))?;
    }
    next.end_block()
        .map_err(|e| (FailureKind::StateTransition, e.to_string()))?;
    Ok(next)
}

fn check_commitments(block: &Block) -> Result<(), (FailureKind, String)> {
    for (i, tx) in block.txs.iter().enumerate() {
        if !tx.hash_matches() {
            return Err((FailureKind::TxHash, format!("tx {i} hash mismatch")));
        }
        if !tx.verify() {
            return Err((FailureKind::Signature, format!("tx {i} signature invalid")));
        }
    }
    if block.computed_merkle_root() != block.merkle_root {
        return Err((FailureKind::MerkleRoot, "merkle root mismatch".into()));
    }
    match block.compute_hash() {
        Ok(h) if h == block.block_hash => Ok(()),
        _ => Err((FailureKind::BlockHash, "block hash mismatch".into())),
    }
}

/// Incremental replay used by validation and loading.
#[derive(Default)]
pub(crate) struct Replay {
    state: Option<(WorldState, ChainParams)>,
    prev: Option<Block>,
    checked: u64,
}

impl Replay {
    pub(crate) fn step(&mut self, block: &Block) -> Result<(), Failure> {
        let height = self.checked;
        let fail = |kind, detail| Failure {
            height,
            kind,
            detail,
        };
        if block.height != height {
            return Err(fail(
                FailureKind::Height,
                format!("record {height} claims height {}", block.height),
            ));
        }
        match (&self.state, &self.prev) {
            (Some((state, params)), Some(prev)) => {
                if block.genesis.is_some() {
                    return Err(fail(FailureKind::Genesis, "unexpected genesis config".into()));
                }
                let next = check_block(state, params, prev, block)
                    .map_err(|(kind, detail)| fail(kind, detail))?;
                self.state = Some((next, params.clone()));
            }
            _ => {
                let Some(genesis) = &block.genesis else {
                    return Err(fail(FailureKind::Genesis, "missing genesis config".into()));
                };
                if genesis.scheme != SIGNATURE_SCHEME {
                    return Err(fail(
                        FailureKind::Genesis,
                        format!("unknown scheme {:?}", genesis.scheme),
                    ));
                }
                if !block.prev_hash.is_zero() || !block.txs.is_empty() {
                    return Err(fail(
                        FailureKind::Genesis,
                        "genesis must have zero prev_hash and no transactions".into(),
                    ));
                }
                check_commitments(block).map_err(|(kind, detail)| fail(kind, detail))?;
                let state = WorldState::from_genesis(genesis)
                    .map_err(|e| fail(FailureKind::Genesis, e.to_string()))?;
                self.state = Some((state, ChainParams::from_genesis(genesis)));
            }
        }
        self.prev = Some(block.clone());
        self.checked += 1;
        Ok(())
    }

    pub(crate) fn checked(&self) -> u64 {
        self.checked
    }

    pub(crate) fn tip_hash(&self) -> Option<Hash32> {
        self.prev.as_ref().map(|b| b.block_hash)
    }

    pub(crate) fn finish(self) -> Option<(WorldState, ChainParams)> {
        self.state
    }
}

/// Replay `blocks` from genesis and report the first failure, if any.
pub fn validate_chain(blocks: &[Block]) -> ValidationReport {
    let mut replay = Replay::default();
    for block in blocks {
        if let Err(failure) = replay.step(block) {
            return ValidationReport::failed(replay.checked(), failure);
        }
    }
    if blocks.is_empty() {
        return ValidationReport::failed(
            0,
            Failure {
                height: 0,
                kind: FailureKind::Genesis,
                detail: "empty chain".into(),
            },
        );
    }
    ValidationReport {
        blocks_checked: replay.checked(),
        tip_hash: replay.tip_hash(),
        failure: None,
    }
}
