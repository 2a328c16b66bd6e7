//! Virtual-time event loop for submission, node approval and block
//! production. Produces only timing; the ledger is driven separately.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::simnet::{SimConfig, SimError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TxTiming {
    pub submitted_ms: u64,
    /// Submitted but unconfirmed transactions when this one arrived.
    pub pending_at_submission: u64,
    pub quorum_ms: u64,
    pub confirmed_ms: u64,
    /// Index into [`Schedule::blocks`].
    pub block: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BlockTiming {
    pub timestamp_ms: u64,
    /// Transaction indices in submission order.
    pub txs: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum LogEvent {
    Submitted { tx: usize, at: u64 },
    Approved { tx: usize, node: u64, at: u64 },
    QuorumReached { tx: usize, at: u64 },
    BlockProduced { at: u64, txs: Vec<usize> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Schedule {
    pub quorum: u64,
    pub txs: Vec<TxTiming>,
    pub blocks: Vec<BlockTiming>,
    /// Empty unless requested.
    pub log: Vec<LogEvent>,
}

#[derive(Clone, Copy, Debug)]
enum Event {
    Submit(usize),
    Approve(usize, u64),
    Block,
}

impl Event {
    // Within one instant: arrivals, then approvals, then block production.
    fn phase(self) -> u8 {
        match self {
            Event::Submit(_) => 0,
            Event::Approve(..) => 1,
            Event::Block => 2,
        }
    }
}

struct Queue {
    heap: BinaryHeap<Reverse<(u64, u8, u64)>>,
    events: Vec<Event>,
}

impl Queue {
    fn push(&mut self, at: u64, event: Event) {
        let seq = self.events.len() as u64;
        self.events.push(event);
        self.heap.push(Reverse((at, event.phase(), seq)));
    }

    fn pop(&mut self) -> Option<(u64, Event)> {
        self.heap
            .pop()
            .map(|Reverse((at, _, seq))| (at, self.events[seq as usize]))
    }
}

/// Run the timing model for `n_txs` transactions.
///
/// Transaction `i` arrives at `i · interarrival`. Each node approves it
/// after `base + per_pending · pending + U(0, jitter)`, where `pending` is
/// the number of submitted, unconfirmed transactions at arrival. Once
/// `ceil(q · N)` approvals have landed, it joins the next block; blocks
/// occur at positive multiples of the block interval and carry every
/// transaction that has reached quorum.
pub fn schedule(config: &SimConfig, n_txs: usize, record_log: bool) -> Result<Schedule, SimError> {
    config.validate()?;
    let quorum = config.quorum_size();
    let interval = config.block_interval_ms;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut queue = Queue {
        heap: BinaryHeap::with_capacity(n_txs * (config.num_nodes as usize + 1)),
        events: Vec::new(),
    };
    for i in 0..n_txs {
        queue.push(i as u64 * config.submission_interarrival_ms, Event::Submit(i));
    }

    let mut txs: Vec<Option<TxTiming>> = vec![None; n_txs];
    let mut approvals = vec![0u64; n_txs];
    let mut unconfirmed: u64 = 0;
    let mut ready: BTreeSet<usize> = BTreeSet::new();
    let mut ticks: BTreeSet<u64> = BTreeSet::new();
    let mut blocks = Vec::new();
    let mut log = Vec::new();

    while let Some((now, event)) = queue.pop() {
        match event {
            Event::Submit(i) => {
                let pending = unconfirmed;
                unconfirmed += 1;
                txs[i] = Some(TxTiming {
                    submitted_ms: now,
                    pending_at_submission: pending,
                    quorum_ms: 0,
                    confirmed_ms: 0,
                    block: 0,
                });
                let delay = config.base_approval_delay_ms
                    + config.per_pending_tx_delay_ms.saturating_mul(pending);
                for node in 0..config.num_nodes {
                    let jitter = if config.jitter_ms > 0 {
                        rng.gen_range(0..=config.jitter_ms)
                    } else {
                        0
                    };
                    queue.push(now + delay + jitter, Event::Approve(i, node));
                }
                if record_log {
                    log.push(LogEvent::Submitted { tx: i, at: now });
                }
            }
            Event::Approve(i, node) => {
                approvals[i] += 1;
                if record_log {
                    log.push(LogEvent::Approved { tx: i, node, at: now });
                }
                if approvals[i] == quorum {
                    txs[i].as_mut().expect("submitted").quorum_ms = now;
                    ready.insert(i);
                    let tick = now.div_ceil(interval).max(1) * interval;
                    if ticks.insert(tick) {
                        queue.push(tick, Event::Block);
                    }
                    if record_log {
                        log.push(LogEvent::QuorumReached { tx: i, at: now });
                    }
                }
            }
            Event::Block => {
                if ready.is_empty() {
                    continue;
                }
                let included: Vec<usize> = std::mem::take(&mut ready).into_iter().collect();
                let block = blocks.len();
                for &i in &included {
                    let t = txs[i].as_mut().expect("submitted");
                    t.confirmed_ms = now;
                    t.block = block;
                }
                unconfirmed -= included.len() as u64;
                if record_log {
                    log.push(LogEvent::BlockProduced {
                        at: now,
                        txs: included.clone(),
                    });
                }
                blocks.push(BlockTiming {
                    timestamp_ms: now,
                    txs: included,
                });
            }
        }
    }

    Ok(Schedule {
        quorum,
        txs: txs.into_iter().map(|t| t.expect("every tx submitted")).collect(),
        blocks,
        log,
    })
}
