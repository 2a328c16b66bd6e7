use std::path::{Path, PathBuf};

use dnb_core::content_store::DEFAULT_MAX_BLOB;
use dnb_core::identity::DEFAULT_NETWORK;
use dnb_core::ledger::DEFAULT_FEE;
use dnb_core::simnet::parse_pairs;
use dnb_core::{Amount, SimConfig};

use crate::error::CliError;

/// Operator settings. Read from a flat `key = value` file; simulator keys
/// use the `SimConfig` field names and default to the calibrated values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CliConfig {
    pub data_dir: PathBuf,
    pub network_name: String,
    pub fee: Amount,
    pub max_blob: u64,
    pub sim: SimConfig,
}

impl CliConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        CliConfig {
            data_dir: data_dir.into(),
            network_name: DEFAULT_NETWORK.to_string(),
            fee: DEFAULT_FEE,
            max_blob: DEFAULT_MAX_BLOB,
            sim: SimConfig::calibrated(),
        }
    }

    pub fn parse(data_dir: impl Into<PathBuf>, text: &str) -> Result<Self, CliError> {
        let mut pairs = parse_pairs(text)?;
        let mut config = CliConfig::new(data_dir);
        if let Some(name) = pairs.remove("network_name") {
            config.network_name = name;
        }
        if let Some(fee) = pairs.remove("fee") {
            config.fee = fee.parse()?;
        }
        if let Some(max_blob) = pairs.remove("max_blob") {
            config.max_blob = max_blob
                .parse()
                .map_err(|_| CliError::domain("ParseError", format!("max_blob: {max_blob:?}")))?;
        }
        if let Some(key) = pairs.keys().find(|k| !SimConfig::is_field(k)) {
            return Err(CliError::domain("ParseError", format!("unknown config key {key:?}")));
        }
        let mut merged = parse_pairs(&config.sim.to_cfg_string())?;
        merged.extend(pairs);
        config.sim = SimConfig::from_pairs(&merged, true)?;
        Ok(config)
    }

    pub fn load(data_dir: impl Into<PathBuf>, path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::domain("Io", format!("{}: {e}", path.display())))?;
        Self::parse(data_dir, &text)
    }

    pub fn chain_dir(&self) -> PathBuf {
        self.data_dir.join("chain")
    }

    pub fn blob_dir(&self) -> PathBuf {
        self.data_dir.join("blobs")
    }

    pub fn wallet_dir(&self) -> PathBuf {
        self.data_dir.join("wallets")
    }

    pub fn producer_path(&self) -> PathBuf {
        self.data_dir.join("producer.json")
    }

    pub fn lock_path(&self) -> PathBuf {
        self.data_dir.join("dnb.lock")
    }
}
