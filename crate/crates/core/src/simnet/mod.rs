//! Seeded virtual-time simulation of the donation network.
//!
//! The timing model lives in [`engine`]; [`simulate`] replays its block
//! schedule through a real [`Chain`] so every run also yields a valid
//! ledger. [`calibrate`] fits the model's delay parameters to target
//! latency and throughput figures by grid search.

mod calibrate;
mod config;
pub mod engine;
mod metrics;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use thiserror::Error;

pub use calibrate::{calibrate, evaluate, Calibration, Metric, Residual, SearchSpace, Target};
pub use config::{parse_pairs, Ratio, SimConfig, CALIBRATED_CFG};
pub use engine::{schedule, LogEvent, Schedule};
pub use metrics::{peak_window_count, to_csv, SimMetrics, CSV_HEADER, TPM_WINDOW_MS};

use crate::content_store::Cid;
use crate::contracts::EventParams;
use crate::error::ParseError;
use crate::identity::KeyPair;
use crate::ledger::{
    create_event_tx, donate_tx, Allocation, Chain, GenesisConfig, LedgerError, Transaction,
    DEFAULT_FEE,
};
use crate::types::{Amount, Hash32, Timestamp};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("search space has an empty grid")]
    EmptySearchSpace,
    #[error("no calibration targets given")]
    EmptyTargets,
    #[error("unknown workload {0:?}")]
    UnknownWorkload(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

impl SimError {
    pub fn kind(&self) -> &'static str {
        match self {
            SimError::InvalidConfig(_) => "InvalidConfig",
            SimError::EmptySearchSpace => "EmptySearchSpace",
            SimError::EmptyTargets => "EmptyTargets",
            SimError::UnknownWorkload(_) => "UnknownWorkload",
            SimError::Parse(_) => "ParseError",
            SimError::Ledger(e) => e.kind(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Workload {
    /// Every transaction donates to one campaign created before the run.
    #[default]
    DonateStorm,
    /// Even-indexed transactions create campaigns, odd ones donate.
    Mixed,
}

impl Workload {
    pub fn as_str(self) -> &'static str {
        match self {
            Workload::DonateStorm => "donate_storm",
            Workload::Mixed => "mixed",
        }
    }
}

impl std::str::FromStr for Workload {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "donate_storm" => Ok(Workload::DonateStorm),
            "mixed" => Ok(Workload::Mixed),
            other => Err(SimError::UnknownWorkload(other.to_string())),
        }
    }
}

/// Everything a simulation run produces.
#[derive(Clone, Debug)]
pub struct SimRun {
    pub metrics: SimMetrics,
    pub schedule: Schedule,
    pub chain: Chain,
    /// The campaign created before the run.
    pub event_id: Hash32,
}

const KEY_STREAM: u64 = 0x6b65_7973;
const DONOR_FUNDS: Amount = Amount(10 * Amount::UNITS_PER_TOKEN);
const FAR_DEADLINE: Timestamp = Timestamp(u64::MAX / 2);

fn campaign(owner: &KeyPair, title: String, target: Amount) -> EventParams {
    EventParams {
        owner: owner.address(),
        owner_name: "simulated organisation".into(),
        title: title.clone(),
        description: String::new(),
        target,
        deadline: FAR_DEADLINE,
        image: Cid::for_bytes(title.as_bytes()),
    }
}

/// Run the timing model and apply its block schedule to a fresh chain.
pub fn simulate(config: &SimConfig, n_txs: usize, workload: Workload) -> Result<SimRun, SimError> {
    let schedule = engine::schedule(config, n_txs, true)?;
    let metrics = SimMetrics::from_schedule(&schedule, config.seed);

    let mut keys_rng = ChaCha20Rng::seed_from_u64(config.seed ^ KEY_STREAM);
    let producer = KeyPair::from_rng(&mut keys_rng);
    let owner = KeyPair::from_rng(&mut keys_rng);
    let donors: Vec<KeyPair> = (0..n_txs).map(|_| KeyPair::from_rng(&mut keys_rng)).collect();

    let mut allocations = vec![Allocation {
        address: owner.address(),
        amount: DONOR_FUNDS,
    }];
    allocations.extend(donors.iter().map(|d| Allocation {
        address: d.address(),
        amount: DONOR_FUNDS,
    }));
    let genesis = GenesisConfig::new(*producer.public(), DEFAULT_FEE, allocations);
    let mut chain = Chain::new(genesis, Timestamp(0))?;

    let setup = create_event_tx(
        &owner,
        0,
        DEFAULT_FEE,
        campaign(&owner, "simulated campaign".into(), Amount::tokens(1_000_000)),
    )?;
    let event_id = setup.tx_hash;
    chain.produce_block(&producer, &[setup], Timestamp(0))?;

    let txs: Vec<Transaction> = donors
        .iter()
        .enumerate()
        .map(|(i, donor)| match workload {
            Workload::Mixed if i % 2 == 0 => create_event_tx(
                donor,
                0,
                DEFAULT_FEE,
                campaign(donor, format!("campaign {i}"), Amount::tokens(5)),
            ),
            _ => donate_tx(donor, 0, DEFAULT_FEE, event_id, Amount::tokens(1)),
        })
        .collect::<Result<_, _>>()?;

    for block in &schedule.blocks {
        let batch: Vec<Transaction> = block.txs.iter().map(|&i| txs[i].clone()).collect();
        chain.produce_block(&producer, &batch, Timestamp(block.timestamp_ms))?;
    }

    Ok(SimRun {
        metrics,
        schedule,
        chain,
        event_id,
    })
}

pub fn run_simulation(
    config: &SimConfig,
    n_txs: usize,
    workload: Workload,
) -> Result<SimMetrics, SimError> {
    Ok(simulate(config, n_txs, workload)?.metrics)
}

/// Per-point seed: first 8 bytes (big-endian) of SHA-256(seed ‖ n).
pub fn derive_seed(seed: u64, n: usize) -> u64 {
    let digest = Hash32::digest_parts(&[&seed.to_be_bytes(), &(n as u64).to_be_bytes()]);
    u64::from_be_bytes(digest.0[..8].try_into().expect("8 bytes"))
}

/// One independent, reproducible run per entry of `n_list`.
pub fn sweep(
    config: &SimConfig,
    n_list: &[usize],
    workload: Workload,
) -> Result<Vec<SimMetrics>, SimError> {
    config.validate()?;
    n_list
        .par_iter()
        .map(|&n| run_simulation(&config.with_seed(derive_seed(config.seed, n)), n, workload))
        .collect()
}

/// `from, from+step, …` up to and including `to`.
pub fn n_range(from: usize, to: usize, step: usize) -> Vec<usize> {
    if step == 0 {
        return vec![from];
    }
    (from..=to).step_by(step).collect()
}
