use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::contracts::{ContractState, Finalization, RefundDue};
use crate::identity::PublicKey;
use crate::ledger::block::GenesisConfig;
use crate::ledger::transaction::{Payload, Transaction};
use crate::ledger::LedgerError;
use crate::types::{Address, Amount, Hash32, Timestamp};

/// Chain-wide constants taken from the genesis block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainParams {
    pub fee: Amount,
    pub producer: PublicKey,
}

impl ChainParams {
    pub fn from_genesis(genesis: &GenesisConfig) -> Self {
        ChainParams {
            fee: genesis.fee,
            producer: genesis.producer,
        }
    }
}

/// Everything derived by replaying the chain.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    balances: BTreeMap<Address, Amount>,
    nonces: BTreeMap<Address, u64>,
    contracts: ContractState,
}

/// Result of applying one transaction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TxEffect {
    EventCreated(Hash32),
    Donated(crate::contracts::DonationRecord),
    Refunded(RefundDue),
}

impl WorldState {
    pub fn from_genesis(genesis: &GenesisConfig) -> Result<Self, LedgerError> {
        genesis.check()?;
        let mut state = WorldState::default();
        for a in &genesis.allocations {
            state.balances.insert(a.address, a.amount);
        }
        Ok(state)
    }

    pub fn balance(&self, address: &Address) -> Amount {
        self.balances.get(address).copied().unwrap_or_default()
    }

    pub fn balances(&self) -> &BTreeMap<Address, Amount> {
        &self.balances
    }

    pub fn nonce(&self, address: &Address) -> u64 {
        self.nonces.get(address).copied().unwrap_or_default()
    }

    pub fn contracts(&self) -> &ContractState {
        &self.contracts
    }

    /// Σ balances (fee sink included) + Σ escrow pools.
    pub fn total_supply(&self) -> u128 {
        self.balances.values().map(|a| a.0).sum::<u128>() + self.contracts.total_escrowed()
    }

    /// Deterministic serialization of the whole state.
    pub fn snapshot_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("state is always serializable")
    }

    pub fn snapshot_hash(&self) -> Hash32 {
        Hash32::digest(&self.snapshot_bytes())
    }

    fn credit(&mut self, address: Address, amount: Amount) -> Result<(), LedgerError> {
        let balance = self.balance(&address);
        let updated = balance.checked_add(amount).ok_or(LedgerError::Overflow)?;
        self.balances.insert(address, updated);
        Ok(())
    }

    /// Finalize every active campaign whose deadline is at or before
    /// `timestamp`. Successful ones pay out immediately; the refunds owed by
    /// failed ones are returned and must be settled by Refund transactions
    /// in the same block.
    pub fn begin_block(&mut self, timestamp: Timestamp) -> Result<Vec<RefundDue>, LedgerError> {
        let mut refunds = Vec::new();
        for event_id in self.contracts.due_for_finalization(timestamp) {
            match self.contracts.finalize_event(&event_id, timestamp)? {
                Finalization::Payout { owner, amount } => self.credit(owner, amount)?,
                Finalization::Refunds(due) => refunds.extend(due),
            }
        }
        Ok(refunds)
    }

    pub fn end_block(&self) -> Result<(), LedgerError> {
        match self.contracts.outstanding_refunds().first() {
            Some(r) => Err(LedgerError::UnsettledRefunds(r.event_id)),
            None => Ok(()),
        }
    }

    /// State transition for one transaction. On error the state is left
    /// unchanged.
    pub fn apply_transaction(
        &mut self,
        params: &ChainParams,
        tx: &Transaction,
        now: Timestamp,
    ) -> Result<TxEffect, LedgerError> {
        if !tx.verify() {
            return Err(LedgerError::BadSignature(tx.tx_hash));
        }
        self.apply_verified(params, tx, now)
    }

    /// As [`Self::apply_transaction`] for a transaction whose signature and
    /// hash have already been checked.
    pub(crate) fn apply_verified(
        &mut self,
        params: &ChainParams,
        tx: &Transaction,
        now: Timestamp,
    ) -> Result<TxEffect, LedgerError> {
        let sender = tx.sender();
        let is_refund = matches!(tx.payload, Payload::Refund(_));
        if is_refund && tx.sender_pk != params.producer {
            return Err(LedgerError::Unauthorized(sender));
        }
        let expected_fee = if is_refund { Amount::ZERO } else { params.fee };
        if tx.fee != expected_fee {
            return Err(LedgerError::WrongFee {
                expected: expected_fee,
                got: tx.fee,
            });
        }
        let expected_nonce = self.nonce(&sender);
        if tx.nonce != expected_nonce {
            return Err(LedgerError::BadNonce {
                expected: expected_nonce,
                got: tx.nonce,
            });
        }
        let spend = match &tx.payload {
            Payload::Donate(d) => d.amount,
            _ => Amount::ZERO,
        };
        let debit = tx.fee.checked_add(spend).ok_or(LedgerError::Overflow)?;
        let available = self.balance(&sender);
        if available < debit {
            return Err(LedgerError::InsufficientBalance {
                needed: debit,
                available,
            });
        }
        // Credits cannot overflow: supply is bounded by the genesis total,
        // which fits in u128. Checked anyway before any mutation.
        self.balance(&Address::FEE_SINK)
            .checked_add(tx.fee)
            .ok_or(LedgerError::Overflow)?;
        if let Payload::Refund(r) = &tx.payload {
            self.balance(&r.recipient)
                .checked_add(r.amount)
                .ok_or(LedgerError::Overflow)?;
        }

        let effect = match &tx.payload {
            Payload::CreateEvent(p) => {
                TxEffect::EventCreated(self.contracts.create_donation_event(tx.tx_hash, p, now)?)
            }
            Payload::Donate(d) => TxEffect::Donated(self.contracts.donate_to_event(
                &d.event_id,
                sender,
                d.amount,
                now,
                tx.tx_hash,
            )?),
            Payload::Refund(r) => {
                self.contracts.apply_refund(r)?;
                TxEffect::Refunded(*r)
            }
        };

        self.balances.insert(sender, Amount(available.0 - debit.0));
        self.credit(Address::FEE_SINK, tx.fee)?;
        if let Payload::Refund(r) = &tx.payload {
            self.credit(r.recipient, r.amount)?;
        }
        self.nonces.insert(sender, expected_nonce + 1);
        Ok(effect)
    }
}

/// Pure form of [`WorldState::apply_transaction`].
pub fn apply_transaction(
    state: &WorldState,
    params: &ChainParams,
    tx: &Transaction,
    now: Timestamp,
) -> Result<WorldState, LedgerError> {
    let mut next = state.clone();
    next.apply_transaction(params, tx, now)?;
    Ok(next)
}
