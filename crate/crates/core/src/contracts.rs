//! Campaign escrow (`DonationEvent`) and public donation record
//! (`DonationTracking`) state machines.
//!
//! These functions only touch contract state. Token balances belong to the
//! ledger, which debits and credits accounts according to the outcomes
//! returned here. Every operation validates fully before mutating, so an
//! error leaves the state untouched.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::content_store::Cid;
use crate::types::{Address, Amount, Hash32, Timestamp};

pub const MAX_TITLE_BYTES: usize = 256;
pub const MAX_DESCRIPTION_BYTES: usize = 64 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContractError {
    #[error("target amount must be positive")]
    ZeroTarget,
    #[error("deadline {deadline} is not after current time {now}")]
    DeadlineInPast { deadline: Timestamp, now: Timestamp },
    #[error("title must be 1..={MAX_TITLE_BYTES} bytes, got {0}")]
    TitleInvalid(usize),
    #[error("description exceeds {MAX_DESCRIPTION_BYTES} bytes ({0})")]
    DescriptionTooLong(usize),
    #[error("event {0} already exists")]
    DuplicateEventId(Hash32),
    #[error("no event {0}")]
    UnknownEvent(Hash32),
    #[error("event {0} is not active")]
    EventNotActive(Hash32),
    #[error("event {0} deadline has passed")]
    DeadlinePassed(Hash32),
    #[error("donation amount must be positive")]
    ZeroAmount,
    #[error("event {0} deadline not reached")]
    NotYetDue(Hash32),
    #[error("event {0} is already finalized")]
    AlreadyFinal(Hash32),
    #[error("no refund of {amount} owed to {recipient} by event {event_id}")]
    NoRefundOwed {
        event_id: Hash32,
        recipient: Address,
        amount: Amount,
    },
    #[error("amount overflow")]
    Overflow,
}

impl ContractError {
    pub fn kind(&self) -> &'static str {
        match self {
            ContractError::ZeroTarget => "ZeroTarget",
            ContractError::DeadlineInPast { .. } => "DeadlineInPast",
            ContractError::TitleInvalid(_) => "TitleInvalid",
            ContractError::DescriptionTooLong(_) => "DescriptionTooLong",
            ContractError::DuplicateEventId(_) => "DuplicateEventId",
            ContractError::UnknownEvent(_) => "UnknownEvent",
            ContractError::EventNotActive(_) => "EventNotActive",
            ContractError::DeadlinePassed(_) => "DeadlinePassed",
            ContractError::ZeroAmount => "ZeroAmount",
            ContractError::NotYetDue(_) => "NotYetDue",
            ContractError::AlreadyFinal(_) => "AlreadyFinal",
            ContractError::NoRefundOwed { .. } => "NoRefundOwed",
            ContractError::Overflow => "Overflow",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventStatus {
    Active,
    Succeeded,
    Failed,
    Refunded,
}

impl EventStatus {
    /// The only legal status transitions.
    pub fn can_transition_to(self, next: EventStatus) -> bool {
        use EventStatus::*;
        matches!(
            (self, next),
            (Active, Succeeded) | (Active, Failed) | (Failed, Refunded)
        )
    }
}

/// Parameters of a new campaign, as carried by a `CreateEvent` transaction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventParams {
    pub owner: Address,
    pub owner_name: String,
    pub title: String,
    pub description: String,
    pub target: Amount,
    pub deadline: Timestamp,
    pub image: Cid,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DonationEventState {
    pub event_id: Hash32,
    pub owner: Address,
    pub owner_name: String,
    pub title: String,
    pub description: String,
    pub target: Amount,
    pub deadline: Timestamp,
    pub image: Cid,
    pub pool: Amount,
    pub total_donated: Amount,
    pub donors: Vec<Address>,
    pub status: EventStatus,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DonationRecord {
    pub event_id: Hash32,
    pub donor: Address,
    pub amount: Amount,
    pub timestamp: Timestamp,
    pub tx_hash: Hash32,
}

/// Append-only public record of every donation with per-donor and
/// per-event position indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackingLedger {
    records: Vec<DonationRecord>,
    by_donor: BTreeMap<Address, Vec<usize>>,
    by_event: BTreeMap<Hash32, Vec<usize>>,
}

impl TrackingLedger {
    fn append(&mut self, record: DonationRecord) {
        let pos = self.records.len();
        self.by_donor.entry(record.donor).or_default().push(pos);
        self.by_event.entry(record.event_id).or_default().push(pos);
        self.records.push(record);
    }

    pub fn records(&self) -> &[DonationRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn for_donor(&self, donor: &Address) -> impl Iterator<Item = &DonationRecord> {
        self.positions(self.by_donor.get(donor))
    }

    pub fn for_event(&self, event_id: &Hash32) -> impl Iterator<Item = &DonationRecord> {
        self.positions(self.by_event.get(event_id))
    }

    fn positions<'a>(
        &'a self,
        positions: Option<&'a Vec<usize>>,
    ) -> impl Iterator<Item = &'a DonationRecord> {
        positions
            .into_iter()
            .flatten()
            .map(move |&i| &self.records[i])
    }

    /// True iff both indices are exactly the partition of `records`.
    pub fn indices_consistent(&self) -> bool {
        let mut by_donor: BTreeMap<Address, Vec<usize>> = BTreeMap::new();
        let mut by_event: BTreeMap<Hash32, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            by_donor.entry(r.donor).or_default().push(i);
            by_event.entry(r.event_id).or_default().push(i);
        }
        by_donor == self.by_donor && by_event == self.by_event
    }
}

/// Money leaving an event's escrow at finalization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Finalization {
    /// Threshold met: the whole pool goes to the owner.
    Payout { owner: Address, amount: Amount },
    /// Threshold missed: each donor is owed their total contribution.
    Refunds(Vec<RefundDue>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefundDue {
    pub event_id: Hash32,
    pub recipient: Address,
    pub amount: Amount,
}

/// What has left an event's escrow so far.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Settlement {
    pub payout: Amount,
    pub refunds_paid: Amount,
    pub refunds_owed: Vec<RefundDue>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractState {
    events: Vec<DonationEventState>,
    index: BTreeMap<Hash32, usize>,
    tracking: TrackingLedger,
    settlements: BTreeMap<Hash32, Settlement>,
}

fn check_params(params: &EventParams, now: Timestamp) -> Result<(), ContractError> {
    if params.target.is_zero() {
        return Err(ContractError::ZeroTarget);
    }
    if params.deadline <= now {
        return Err(ContractError::DeadlineInPast {
            deadline: params.deadline,
            now,
        });
    }
    let title_len = params.title.len();
    if title_len == 0 || title_len > MAX_TITLE_BYTES {
        return Err(ContractError::TitleInvalid(title_len));
    }
    if params.description.len() > MAX_DESCRIPTION_BYTES {
        return Err(ContractError::DescriptionTooLong(params.description.len()));
    }
    Ok(())
}

impl ContractState {
    /// Validate `params` without creating anything.
    pub fn check_create(
        &self,
        event_id: Hash32,
        params: &EventParams,
        now: Timestamp,
    ) -> Result<(), ContractError> {
        check_params(params, now)?;
        if self.index.contains_key(&event_id) {
            return Err(ContractError::DuplicateEventId(event_id));
        }
        Ok(())
    }

    /// Open a new campaign identified by its creating transaction's hash.
    pub fn create_donation_event(
        &mut self,
        event_id: Hash32,
        params: &EventParams,
        now: Timestamp,
    ) -> Result<Hash32, ContractError> {
        self.check_create(event_id, params, now)?;
        self.index.insert(event_id, self.events.len());
        self.events.push(DonationEventState {
            event_id,
            owner: params.owner,
            owner_name: params.owner_name.clone(),
            title: params.title.clone(),
            description: params.description.clone(),
            target: params.target,
            deadline: params.deadline,
            image: params.image,
            pool: Amount::ZERO,
            total_donated: Amount::ZERO,
            donors: Vec::new(),
            status: EventStatus::Active,
        });
        Ok(event_id)
    }

    pub fn check_donation(
        &self,
        event_id: &Hash32,
        amount: Amount,
        now: Timestamp,
    ) -> Result<(), ContractError> {
        let event = self.event(event_id)?;
        if event.status != EventStatus::Active {
            return Err(ContractError::EventNotActive(*event_id));
        }
        if now >= event.deadline {
            return Err(ContractError::DeadlinePassed(*event_id));
        }
        if amount.is_zero() {
            return Err(ContractError::ZeroAmount);
        }
        if event.pool.checked_add(amount).is_none()
            || event.total_donated.checked_add(amount).is_none()
        {
            return Err(ContractError::Overflow);
        }
        Ok(())
    }

    /// Escrow a donation and append it to the public record.
    pub fn donate_to_event(
        &mut self,
        event_id: &Hash32,
        donor: Address,
        amount: Amount,
        now: Timestamp,
        tx_hash: Hash32,
    ) -> Result<DonationRecord, ContractError> {
        self.check_donation(event_id, amount, now)?;
        let idx = self.index[event_id];
        let event = &mut self.events[idx];
        event.pool = Amount(event.pool.0 + amount.0);
        event.total_donated = Amount(event.total_donated.0 + amount.0);
        if !event.donors.contains(&donor) {
            event.donors.push(donor);
        }
        let record = DonationRecord {
            event_id: *event_id,
            donor,
            amount,
            timestamp: now,
            tx_hash,
        };
        self.tracking.append(record.clone());
        Ok(record)
    }

    /// Close a campaign whose deadline has arrived.
    ///
    /// On success the pool is released to the owner. On failure the event
    /// moves to `Failed` and records one refund per donor; it becomes
    /// `Refunded` once every refund has been applied (immediately if there
    /// were no donors).
    pub fn finalize_event(
        &mut self,
        event_id: &Hash32,
        now: Timestamp,
    ) -> Result<Finalization, ContractError> {
        let event = self.event(event_id)?;
        if event.status != EventStatus::Active {
            return Err(ContractError::AlreadyFinal(*event_id));
        }
        if now < event.deadline {
            return Err(ContractError::NotYetDue(*event_id));
        }
        let idx = self.index[event_id];
        if event.total_donated >= event.target {
            let event = &mut self.events[idx];
            let amount = event.pool;
            event.pool = Amount::ZERO;
            event.status = EventStatus::Succeeded;
            self.settlements.entry(*event_id).or_default().payout = amount;
            return Ok(Finalization::Payout {
                owner: event.owner,
                amount,
            });
        }
        let refunds: Vec<RefundDue> = self
            .donor_totals(event_id)
            .into_iter()
            .map(|(recipient, amount)| RefundDue {
                event_id: *event_id,
                recipient,
                amount,
            })
            .collect();
        let event = &mut self.events[idx];
        event.status = if refunds.is_empty() {
            EventStatus::Refunded
        } else {
            EventStatus::Failed
        };
        self.settlements.entry(*event_id).or_default().refunds_owed = refunds.clone();
        Ok(Finalization::Refunds(refunds))
    }

    pub fn check_refund(&self, refund: &RefundDue) -> Result<usize, ContractError> {
        let event = self.event(&refund.event_id)?;
        let not_owed = || ContractError::NoRefundOwed {
            event_id: refund.event_id,
            recipient: refund.recipient,
            amount: refund.amount,
        };
        if event.status != EventStatus::Failed {
            return Err(not_owed());
        }
        self.settlements
            .get(&refund.event_id)
            .and_then(|s| s.refunds_owed.iter().position(|r| r == refund))
            .ok_or_else(not_owed)
    }

    /// Release one owed refund from escrow.
    pub fn apply_refund(&mut self, refund: &RefundDue) -> Result<(), ContractError> {
        let pos = self.check_refund(refund)?;
        let settlement = self
            .settlements
            .get_mut(&refund.event_id)
            .expect("checked above");
        settlement.refunds_owed.remove(pos);
        settlement.refunds_paid = Amount(settlement.refunds_paid.0 + refund.amount.0);
        let done = settlement.refunds_owed.is_empty();
        let event = &mut self.events[self.index[&refund.event_id]];
        event.pool = Amount(event.pool.0 - refund.amount.0);
        if done {
            event.status = EventStatus::Refunded;
        }
        Ok(())
    }

    /// Active events whose deadline is at or before `now`, in creation order.
    pub fn due_for_finalization(&self, now: Timestamp) -> Vec<Hash32> {
        self.events
            .iter()
            .filter(|e| e.status == EventStatus::Active && e.deadline <= now)
            .map(|e| e.event_id)
            .collect()
    }

    /// Refunds recorded at finalization but not yet applied.
    pub fn outstanding_refunds(&self) -> Vec<RefundDue> {
        self.events
            .iter()
            .filter_map(|e| self.settlements.get(&e.event_id))
            .flat_map(|s| s.refunds_owed.iter().copied())
            .collect()
    }

    pub fn event(&self, event_id: &Hash32) -> Result<&DonationEventState, ContractError> {
        self.index
            .get(event_id)
            .map(|&i| &self.events[i])
            .ok_or(ContractError::UnknownEvent(*event_id))
    }

    pub fn settlement(&self, event_id: &Hash32) -> Settlement {
        self.settlements.get(event_id).cloned().unwrap_or_default()
    }

    /// Distinct donors in first-donation order with their totals.
    pub fn get_donors(&self, event_id: &Hash32) -> Result<Vec<(Address, Amount)>, ContractError> {
        self.event(event_id)?;
        Ok(self.donor_totals(event_id))
    }

    fn donor_totals(&self, event_id: &Hash32) -> Vec<(Address, Amount)> {
        let mut totals: Vec<(Address, Amount)> = Vec::new();
        for record in self.tracking.for_event(event_id) {
            match totals.iter_mut().find(|(a, _)| *a == record.donor) {
                Some((_, total)) => total.0 += record.amount.0,
                None => totals.push((record.donor, record.amount)),
            }
        }
        totals
    }

    /// All campaigns in creation order, finalized ones included.
    pub fn get_donation_events(&self) -> &[DonationEventState] {
        &self.events
    }

    /// A donor's records across all events, in chain order.
    pub fn get_donation_history(&self, donor: &Address) -> Vec<DonationRecord> {
        self.tracking.for_donor(donor).cloned().collect()
    }

    pub fn tracking(&self) -> &TrackingLedger {
        &self.tracking
    }

    /// Σ pool over all events.
    pub fn total_escrowed(&self) -> u128 {
        self.events.iter().map(|e| e.pool.0).sum()
    }
}
