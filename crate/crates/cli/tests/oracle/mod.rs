//! Independent reference models used by the acceptance suite. They are
//! written from the contract rules directly and share no code with the
//! ledger's state machine.

#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use dnb_core::contracts::{EventParams, EventStatus};
use dnb_core::ledger::{create_event_tx, donate_tx, Allocation, GenesisConfig, Payload};
use dnb_core::{Address, Amount, Chain, Cid, Hash32, KeyPair, LedgerError, Timestamp};

// ---------------------------------------------------------------------------
// Debit/credit accounting

#[derive(Clone, Debug)]
struct BookEvent {
    id: Hash32,
    owner: Address,
    target: u128,
    deadline: u64,
    pool: u128,
    total: u128,
    /// Contribution per donor, first-donation order.
    donors: Vec<(Address, u128)>,
    open: bool,
}

/// Brute-force bookkeeping: every movement of funds is a debit on one
/// account and a credit on another.
#[derive(Clone, Debug, Default)]
pub struct Books {
    balances: BTreeMap<Address, u128>,
    nonces: BTreeMap<Address, u64>,
    events: Vec<BookEvent>,
    fee: u128,
    supply: u128,
}

impl Books {
    fn debit(&mut self, who: Address, amount: u128) {
        let b = self.balances.entry(who).or_default();
        *b = b.checked_sub(amount).expect("oracle debit within balance");
    }

    fn credit(&mut self, who: Address, amount: u128) {
        *self.balances.entry(who).or_default() += amount;
    }

    fn balance(&self, who: &Address) -> u128 {
        self.balances.get(who).copied().unwrap_or(0)
    }

    fn nonce(&self, who: &Address) -> u64 {
        self.nonces.get(who).copied().unwrap_or(0)
    }

    fn bump(&mut self, who: Address) {
        *self.nonces.entry(who).or_default() += 1;
    }

    /// Close every open campaign due at `ts`, paying out successes.
    /// Returns the number of payouts and the refunds owed as
    /// (event, donor, amount).
    fn close_due(&mut self, ts: u64) -> (usize, Vec<(Hash32, Address, u128)>) {
        let mut refunds = Vec::new();
        let mut payouts = 0;
        for i in 0..self.events.len() {
            let e = &mut self.events[i];
            if !e.open || e.deadline > ts {
                continue;
            }
            e.open = false;
            if e.total >= e.target {
                let (owner, amount) = (e.owner, e.pool);
                e.pool = 0;
                payouts += 1;
                self.credit(owner, amount);
            } else {
                refunds.extend(e.donors.iter().map(|&(d, a)| (e.id, d, a)));
            }
        }
        (payouts, refunds)
    }

    fn refund(&mut self, event: Hash32, donor: Address, amount: u128) {
        let e = self.events.iter_mut().find(|e| e.id == event).expect("known event");
        e.pool -= amount;
        self.credit(donor, amount);
    }

    fn pools(&self) -> u128 {
        self.events.iter().map(|e| e.pool).sum()
    }

    fn total(&self) -> u128 {
        self.balances.values().sum::<u128>() + self.pools()
    }
}

pub struct ConservationStats {
    pub blocks: usize,
    pub txs: usize,
    pub rejected: usize,
    pub refunds: usize,
    pub payouts: usize,
}

fn campaign(owner: Address, title: String, target: u128, deadline: u64) -> EventParams {
    EventParams {
        owner,
        owner_name: "org".into(),
        image: Cid::for_bytes(title.as_bytes()),
        title,
        description: String::new(),
        target: Amount(target),
        deadline: Timestamp(deadline),
    }
}

/// One seeded random workload of `n_txs` user transactions. After every
/// block the chain's supply must equal the genesis supply and every
/// balance and pool must match the bookkeeping oracle.
pub fn conservation_run(seed: u64, n_txs: usize) -> Result<ConservationStats, String> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let producer = KeyPair::from_rng(&mut rng);
    let wallets: Vec<KeyPair> = (0..8).map(|_| KeyPair::from_rng(&mut rng)).collect();
    let fee: u128 = rng.gen_range(1..=50);

    let mut books = Books {
        fee,
        ..Books::default()
    };
    let allocations: Vec<Allocation> = wallets
        .iter()
        .map(|w| {
            let amount = rng.gen_range(1_000_000..=5_000_000u128);
            books.credit(w.address(), amount);
            Allocation {
                address: w.address(),
                amount: Amount(amount),
            }
        })
        .collect();
    books.supply = books.total();
    let genesis = GenesisConfig::new(*producer.public(), Amount(fee), allocations);
    let mut chain = Chain::new(genesis, Timestamp(0)).map_err(|e| e.to_string())?;

    let mut stats = ConservationStats {
        blocks: 0,
        txs: 0,
        rejected: 0,
        refunds: 0,
        payouts: 0,
    };
    let mut ts = 0u64;
    let mut titles = 0u64;
    while stats.txs < n_txs {
        ts += rng.gen_range(1..=5_000);
        let (payouts, expected_refunds) = books.close_due(ts);
        stats.payouts += payouts;
        for &(event, donor, amount) in &expected_refunds {
            books.refund(event, donor, amount);
        }
        let producer_address = producer.address();
        for _ in &expected_refunds {
            books.bump(producer_address);
        }

        let size = rng.gen_range(1..=15).min(n_txs - stats.txs);
        let mut batch = Vec::with_capacity(size + 1);
        for _ in 0..size {
            let active: Vec<usize> = books
                .events
                .iter()
                .enumerate()
                .filter(|(_, e)| e.open && e.deadline > ts)
                .map(|(i, _)| i)
                .collect();
            let funded: Vec<usize> = (0..wallets.len())
                .filter(|&i| books.balance(&wallets[i].address()) > fee)
                .collect();
            if funded.is_empty() {
                break;
            }
            let w = &wallets[funded[rng.gen_range(0..funded.len())]];
            let who = w.address();
            let nonce = books.nonce(&who);
            let balance = books.balance(&who);
            let tx = if active.is_empty() || rng.gen_bool(0.2) {
                titles += 1;
                let params = campaign(
                    who,
                    format!("campaign {seed}/{titles}"),
                    rng.gen_range(1..=20_000),
                    ts + rng.gen_range(1..=60_000),
                );
                let tx = create_event_tx(w, nonce, Amount(fee), params.clone())
                    .map_err(|e| e.to_string())?;
                books.events.push(BookEvent {
                    id: tx.tx_hash,
                    owner: who,
                    target: params.target.0,
                    deadline: params.deadline.0,
                    pool: 0,
                    total: 0,
                    donors: Vec::new(),
                    open: true,
                });
                books.debit(who, fee);
                tx
            } else {
                let idx = active[rng.gen_range(0..active.len())];
                let amount = rng.gen_range(1..=(balance - fee).min(8_000));
                let event = &mut books.events[idx];
                let tx = donate_tx(w, nonce, Amount(fee), event.id, Amount(amount))
                    .map_err(|e| e.to_string())?;
                event.pool += amount;
                event.total += amount;
                match event.donors.iter_mut().find(|(d, _)| *d == who) {
                    Some((_, sum)) => *sum += amount,
                    None => event.donors.push((who, amount)),
                }
                books.debit(who, fee + amount);
                tx
            };
            books.credit(Address::FEE_SINK, fee);
            books.bump(who);
            batch.push(tx);
        }
        if batch.is_empty() {
            break;
        }

        // Now and then, append an overdraft the ledger must refuse.
        if rng.gen_ratio(1, 20) {
            let w = &wallets[rng.gen_range(0..wallets.len())];
            let who = w.address();
            if let Some(e) = books.events.iter().find(|e| e.open && e.deadline > ts) {
                let overdraft = donate_tx(
                    w,
                    books.nonce(&who),
                    Amount(fee),
                    e.id,
                    Amount(books.balance(&who).max(1)),
                )
                .map_err(|e| e.to_string())?;
                let mut with_bad = batch.clone();
                with_bad.push(overdraft);
                match chain.build_block(&producer, &with_bad, Timestamp(ts)) {
                    Err(LedgerError::InvalidTransaction { index, cause })
                        if index == batch.len() && cause.kind() == "InsufficientBalance" => {}
                    other => {
                        return Err(format!(
                            "seed {seed}: overdraft not rejected as expected: {:?}",
                            other.map(|b| b.height)
                        ))
                    }
                }
                stats.rejected += 1;
            }
        }

        let block = chain
            .produce_block(&producer, &batch, Timestamp(ts))
            .map_err(|e| format!("seed {seed} ts {ts}: block refused: {e}"))?
            .clone();
        stats.blocks += 1;
        stats.txs += batch.len();

        let mut got_refunds: Vec<(Hash32, Address, u128)> = block
            .txs
            .iter()
            .filter_map(|tx| match &tx.payload {
                Payload::Refund(r) => Some((r.event_id, r.recipient, r.amount.0)),
                _ => None,
            })
            .collect();
        let mut want = expected_refunds.clone();
        got_refunds.sort();
        want.sort();
        if got_refunds != want {
            return Err(format!("seed {seed} h {}: refunds differ", block.height));
        }
        stats.refunds += want.len();

        let state = chain.state();
        if state.total_supply() != books.supply {
            return Err(format!(
                "seed {seed} h {}: supply {} != {}",
                block.height,
                state.total_supply(),
                books.supply
            ));
        }
        if books.total() != books.supply {
            return Err(format!("seed {seed}: oracle lost track of funds"));
        }
        for (address, amount) in state.balances() {
            if books.balance(address) != amount.0 {
                return Err(format!(
                    "seed {seed} h {}: balance of {address}: ledger {} oracle {}",
                    block.height,
                    amount.0,
                    books.balance(address)
                ));
            }
        }
        for (address, amount) in &books.balances {
            if state.balance(address).0 != *amount {
                return Err(format!("seed {seed}: {address} missing from ledger"));
            }
        }
        for e in &books.events {
            let got = state
                .contracts()
                .event(&e.id)
                .map_err(|err| format!("seed {seed}: {err}"))?;
            if got.pool.0 != e.pool || got.total_donated.0 != e.total {
                return Err(format!("seed {seed}: pool mismatch for {}", e.id));
            }
        }
    }
    Ok(stats)
}

// ---------------------------------------------------------------------------
// Contract reference interpreter

pub const FEE: u128 = 10;
pub const START_BALANCE: u128 = 1_000;
/// Per template: (title, target, absolute deadline in ms).
pub const TEMPLATES: [(&str, u128, u64); 2] = [("harvest", 5, 2_500), ("school", 4, 100_000)];
/// Donation amount per wallet.
pub const GIFTS: [u128; 2] = [3, 4];
pub const STEP_MS: u64 = 1_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Create { wallet: usize, template: usize },
    Donate { wallet: usize, template: usize },
    /// Move time to the template's deadline (or one step, if already past).
    Finalize { template: usize },
}

pub fn alphabet() -> Vec<Op> {
    let mut ops = Vec::new();
    for wallet in 0..2 {
        for template in 0..2 {
            ops.push(Op::Create { wallet, template });
            ops.push(Op::Donate { wallet, template });
        }
    }
    for template in 0..2 {
        ops.push(Op::Finalize { template });
    }
    ops
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefEvent {
    pub template: usize,
    pub owner: usize,
    pub status: EventStatus,
    pub pool: u128,
    pub total: u128,
    pub donors: Vec<(usize, u128)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefRecord {
    pub event: usize,
    pub donor: usize,
    pub amount: u128,
    pub timestamp: u64,
}

/// Wallets are indices 0 and 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RefState {
    pub time: u64,
    pub balances: [u128; 2],
    pub nonces: [u64; 2],
    pub fee_sink: u128,
    pub events: Vec<RefEvent>,
    pub records: Vec<RefRecord>,
}

impl Default for RefState {
    fn default() -> Self {
        RefState {
            time: 0,
            balances: [START_BALANCE; 2],
            nonces: [0; 2],
            fee_sink: 0,
            events: Vec::new(),
            records: Vec::new(),
        }
    }
}

impl RefState {
    pub fn block_time(&self, op: Op) -> u64 {
        match op {
            Op::Finalize { template } => (self.time + STEP_MS).max(TEMPLATES[template].2),
            _ => self.time + STEP_MS,
        }
    }

    /// Apply `op` in a new block; on rejection nothing changes and the
    /// root error name is returned.
    pub fn step(&self, op: Op) -> Result<RefState, &'static str> {
        let mut s = self.clone();
        let now = self.block_time(op);
        for e in s.events.iter_mut() {
            if e.status == EventStatus::Active && TEMPLATES[e.template].2 <= now {
                if e.total >= TEMPLATES[e.template].1 {
                    e.status = EventStatus::Succeeded;
                    s.balances[e.owner] += e.pool;
                } else {
                    e.status = EventStatus::Refunded;
                    for &(donor, amount) in &e.donors {
                        s.balances[donor] += amount;
                    }
                }
                e.pool = 0;
            }
        }
        match op {
            Op::Create { wallet, template } => {
                if TEMPLATES[template].2 <= now {
                    return Err("DeadlineInPast");
                }
                s.balances[wallet] -= FEE;
                s.fee_sink += FEE;
                s.nonces[wallet] += 1;
                s.events.push(RefEvent {
                    template,
                    owner: wallet,
                    status: EventStatus::Active,
                    pool: 0,
                    total: 0,
                    donors: Vec::new(),
                });
            }
            Op::Donate { wallet, template } => {
                let Some(idx) = s.events.iter().rposition(|e| e.template == template) else {
                    return Err("UnknownEvent");
                };
                let e = &mut s.events[idx];
                if e.status != EventStatus::Active {
                    return Err("EventNotActive");
                }
                let amount = GIFTS[wallet];
                if s.balances[wallet] < amount + FEE {
                    return Err("InsufficientBalance");
                }
                e.pool += amount;
                e.total += amount;
                match e.donors.iter_mut().find(|(d, _)| *d == wallet) {
                    Some((_, sum)) => *sum += amount,
                    None => e.donors.push((wallet, amount)),
                }
                s.balances[wallet] -= amount + FEE;
                s.fee_sink += FEE;
                s.nonces[wallet] += 1;
                s.records.push(RefRecord {
                    event: idx,
                    donor: wallet,
                    amount,
                    timestamp: now,
                });
            }
            Op::Finalize { .. } => {}
        }
        s.time = now;
        Ok(s)
    }
}

/// The real ledger driven by the same operations.
#[derive(Clone)]
pub struct Harness {
    pub chain: Chain,
    pub producer: KeyPair,
    pub wallets: [KeyPair; 2],
}

impl Harness {
    pub fn new() -> Self {
        let producer = KeyPair::from_seed(900);
        let wallets = [KeyPair::from_seed(901), KeyPair::from_seed(902)];
        let genesis = GenesisConfig::new(
            *producer.public(),
            Amount(FEE),
            wallets
                .iter()
                .map(|w| Allocation {
                    address: w.address(),
                    amount: Amount(START_BALANCE),
                })
                .collect(),
        );
        Harness {
            chain: Chain::new(genesis, Timestamp(0)).expect("genesis"),
            producer,
            wallets,
        }
    }

    fn latest_event(&self, template: usize) -> Option<Hash32> {
        self.chain
            .state()
            .contracts()
            .get_donation_events()
            .iter()
            .rev()
            .find(|e| e.title == TEMPLATES[template].0)
            .map(|e| e.event_id)
    }

    pub fn step(&mut self, op: Op, now: u64) -> Result<(), &'static str> {
        let txs = match op {
            Op::Create { wallet, template } => {
                let keys = &self.wallets[wallet];
                let (title, target, deadline) = TEMPLATES[template];
                let params = campaign(keys.address(), title.into(), target, deadline);
                vec![create_event_tx(keys, self.chain.next_nonce(keys), Amount(FEE), params).unwrap()]
            }
            Op::Donate { wallet, template } => {
                let keys = &self.wallets[wallet];
                let event = self.latest_event(template).unwrap_or(Hash32([0xee; 32]));
                vec![donate_tx(
                    keys,
                    self.chain.next_nonce(keys),
                    Amount(FEE),
                    event,
                    Amount(GIFTS[wallet]),
                )
                .unwrap()]
            }
            Op::Finalize { .. } => Vec::new(),
        };
        self.chain
            .produce_block(&self.producer, &txs, Timestamp(now))
            .map(|_| ())
            .map_err(|e| e.kind())
    }

    /// Field-by-field comparison with the reference state.
    pub fn matches(&self, r: &RefState) -> Result<(), String> {
        let state = self.chain.state();
        let contracts = state.contracts();
        let events = contracts.get_donation_events();
        if events.len() != r.events.len() {
            return Err(format!("{} events, reference has {}", events.len(), r.events.len()));
        }
        let addr = |i: usize| self.wallets[i].address();
        for (e, want) in events.iter().zip(&r.events) {
            let donors: Vec<(Address, Amount)> = contracts.get_donors(&e.event_id).unwrap();
            let want_donors: Vec<(Address, Amount)> =
                want.donors.iter().map(|&(d, a)| (addr(d), Amount(a))).collect();
            if e.status != want.status
                || e.pool.0 != want.pool
                || e.total_donated.0 != want.total
                || e.owner != addr(want.owner)
                || e.title != TEMPLATES[want.template].0
                || donors != want_donors
            {
                return Err(format!("event {} differs: {e:?} vs {want:?}", e.event_id));
            }
        }
        let records = contracts.tracking().records();
        if records.len() != r.records.len() {
            return Err("tracking record count differs".into());
        }
        for (got, want) in records.iter().zip(&r.records) {
            if got.event_id != events[want.event].event_id
                || got.donor != addr(want.donor)
                || got.amount.0 != want.amount
                || got.timestamp.0 != want.timestamp
            {
                return Err(format!("tracking record differs: {got:?} vs {want:?}"));
            }
        }
        for i in 0..2 {
            if state.balance(&addr(i)).0 != r.balances[i] || state.nonce(&addr(i)) != r.nonces[i] {
                return Err(format!("wallet {i} balance or nonce differs"));
            }
        }
        if state.balance(&Address::FEE_SINK).0 != r.fee_sink {
            return Err("fee sink differs".into());
        }
        if self.chain.tip().timestamp.0 != r.time {
            return Err("block time differs".into());
        }
        Ok(())
    }
}

impl Default for Harness {
    fn default() -> Self {
        Self::new()
    }
}

/// Depth-first enumeration of every op sequence up to `max_len`, sharing
/// prefixes. Returns the number of sequences checked.
pub fn enumerate_sequences(max_len: usize) -> Result<usize, String> {
    fn go(
        h: &Harness,
        r: &RefState,
        ops: &[Op],
        path: &mut Vec<Op>,
        max_len: usize,
        count: &mut usize,
    ) -> Result<(), String> {
        if path.len() == max_len {
            return Ok(());
        }
        for &op in ops {
            path.push(op);
            *count += 1;
            let now = r.block_time(op);
            let mut next_h = h.clone();
            let got = next_h.step(op, now);
            let want = r.step(op);
            let next_r = match (got, want) {
                (Ok(()), Ok(next_r)) => next_r,
                (Err(g), Err(w)) if g == w => r.clone(),
                (g, w) => {
                    return Err(format!(
                        "{path:?}: ledger {:?}, reference {:?}",
                        g,
                        w.map(|_| ())
                    ))
                }
            };
            next_h.matches(&next_r).map_err(|e| format!("{path:?}: {e}"))?;
            go(&next_h, &next_r, ops, path, max_len, count)?;
            path.pop();
        }
        Ok(())
    }
    let ops = alphabet();
    let mut count = 1; // the empty sequence
    let h = Harness::new();
    let r = RefState::default();
    h.matches(&r)?;
    go(&h, &r, &ops, &mut Vec::new(), max_len, &mut count)?;
    Ok(count)
}
