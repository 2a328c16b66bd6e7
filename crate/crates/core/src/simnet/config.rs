use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ParseError;
use crate::simnet::SimError;

/// Fraction in (0, 1] kept as an exact ratio so quorum sizes are exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ratio {
    num: u64,
    den: u64,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Result<Self, ParseError> {
        if den == 0 || num == 0 || num > den {
            return Err(ParseError::new(format!(
                "quorum fraction {num}/{den} must lie in (0, 1]"
            )));
        }
        let g = gcd(num, den);
        Ok(Ratio {
            num: num / g,
            den: den / g,
        })
    }

    pub fn numerator(&self) -> u64 {
        self.num
    }

    pub fn denominator(&self) -> u64 {
        self.den
    }

    /// ceil(self · n)
    pub fn ceil_mul(&self, n: u64) -> u64 {
        (self.num as u128 * n as u128).div_ceil(self.den as u128) as u64
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Ratio {
    type Err = ParseError;

    /// Accepts `a/b`, an integer, or a plain decimal such as `0.75`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseError::new(format!("invalid fraction {s:?}"));
        if let Some((a, b)) = s.split_once('/') {
            return Ratio::new(
                a.trim().parse().map_err(|_| bad())?,
                b.trim().parse().map_err(|_| bad())?,
            );
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 18 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let den = 10u64.pow(frac.len() as u32);
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let frac_val: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let num = int
            .checked_mul(den)
            .and_then(|v| v.checked_add(frac_val))
            .ok_or_else(bad)?;
        Ratio::new(num, den)
    }
}

/// Parameters of the node-approval and block-production model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub num_nodes: u64,
    pub quorum_fraction: Ratio,
    pub base_approval_delay_ms: u64,
    pub per_pending_tx_delay_ms: u64,
    /// Upper bound of the uniform per-approval noise.
    pub jitter_ms: u64,
    pub block_interval_ms: u64,
    pub submission_interarrival_ms: u64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            num_nodes: 4,
            quorum_fraction: Ratio { num: 2, den: 3 },
            base_approval_delay_ms: 60_000,
            per_pending_tx_delay_ms: 2_000,
            jitter_ms: 0,
            block_interval_ms: 30_000,
            submission_interarrival_ms: 1_000,
            seed: 42,
        }
    }
}

pub const CALIBRATED_CFG: &str = include_str!("../../../../calibrated.cfg");

const FIELDS: [&str; 8] = [
    "num_nodes",
    "quorum_fraction",
    "base_approval_delay_ms",
    "per_pending_tx_delay_ms",
    "jitter_ms",
    "block_interval_ms",
    "submission_interarrival_ms",
    "seed",
];

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.num_nodes == 0 {
            return Err(SimError::InvalidConfig("num_nodes must be at least 1".into()));
        }
        if self.quorum_size() == 0 {
            return Err(SimError::InvalidConfig("quorum rounds to zero nodes".into()));
        }
        if self.block_interval_ms == 0 {
            return Err(SimError::InvalidConfig(
                "block_interval_ms must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Approvals a transaction needs: ceil(quorum_fraction · num_nodes).
    pub fn quorum_size(&self) -> u64 {
        self.quorum_fraction.ceil_mul(self.num_nodes)
    }

    /// The fitted parameters committed at the repository root.
    pub fn calibrated() -> Self {
        Self::parse_cfg(CALIBRATED_CFG).expect("committed calibrated.cfg is valid")
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SimConfig {
            seed,
            ..self.clone()
        }
    }

    /// Flat `key = value` rendering, one field per line.
    pub fn to_cfg_string(&self) -> String {
        let values = [
            self.num_nodes.to_string(),
            self.quorum_fraction.to_string(),
            self.base_approval_delay_ms.to_string(),
            self.per_pending_tx_delay_ms.to_string(),
            self.jitter_ms.to_string(),
            self.block_interval_ms.to_string(),
            self.submission_interarrival_ms.to_string(),
            self.seed.to_string(),
        ];
        FIELDS
            .iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Parse the flat format. Every field must appear exactly once; blank
    /// lines and `#` comments are ignored.
    pub fn parse_cfg(text: &str) -> Result<Self, SimError> {
        let pairs = parse_pairs(text)?;
        for key in pairs.keys() {
            if !FIELDS.contains(&key.as_str()) {
                return Err(SimError::Parse(ParseError::new(format!("unknown key {key:?}"))));
            }
        }
        Self::from_pairs(&pairs, true)
    }

    /// Build from already-split pairs. With `require_all` false, missing
    /// fields keep their defaults; unknown keys are left to the caller.
    pub fn from_pairs(pairs: &BTreeMap<String, String>, require_all: bool) -> Result<Self, SimError> {
        let mut cfg = SimConfig::default();
        for key in FIELDS {
            let Some(value) = pairs.get(key) else {
                if require_all {
                    return Err(SimError::Parse(ParseError::new(format!("missing key {key:?}"))));
                }
                continue;
            };
            let int = || -> Result<u64, SimError> {
                value.parse().map_err(|_| {
                    SimError::Parse(ParseError::new(format!("{key}: invalid integer {value:?}")))
                })
            };
            match key {
                "num_nodes" => cfg.num_nodes = int()?,
                "quorum_fraction" => cfg.quorum_fraction = value.parse().map_err(SimError::Parse)?,
                "base_approval_delay_ms" => cfg.base_approval_delay_ms = int()?,
                "per_pending_tx_delay_ms" => cfg.per_pending_tx_delay_ms = int()?,
                "jitter_ms" => cfg.jitter_ms = int()?,
                "block_interval_ms" => cfg.block_interval_ms = int()?,
                "submission_interarrival_ms" => cfg.submission_interarrival_ms = int()?,
                "seed" => cfg.seed = int()?,
                _ => unreachable!(),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn is_field(key: &str) -> bool {
        FIELDS.contains(&key)
    }
}

/// Split `key = value` lines, rejecting duplicates and malformed lines.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>, SimError> {
    let mut pairs = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(SimError::Parse(ParseError::new(format!(
                "line {}: expected `key = value`",
                i + 1
            ))));
        };
        let key = key.trim().to_string();
        if pairs.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(SimError::Parse(ParseError::new(format!("duplicate key {key:?}"))));
        }
    }
    Ok(pairs)
}
