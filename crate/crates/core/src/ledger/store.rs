//! Chain file persistence: one compact JSON record per line, newline
//! terminated. Each record must be the exact canonical rendering of the
//! block it decodes to, so any byte-level edit is detectable.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use crate::ledger::chain::{validate_chain, Chain, Failure, FailureKind, Replay, ValidationReport};
use crate::ledger::{Block, LedgerError};

pub const CHAIN_FILE: &str = "blocks.jsonl";

pub fn chain_path(dir: &Path) -> PathBuf {
    dir.join(CHAIN_FILE)
}

pub fn encode_block(block: &Block) -> Vec<u8> {
    let mut line = serde_json::to_vec(block).expect("blocks always serialize");
    line.push(b'\n');
    line
}

pub fn encode_chain(blocks: &[Block]) -> Vec<u8> {
    blocks.iter().flat_map(encode_block).collect()
}

/// Write the chain file atomically (temporary file, then rename).
pub fn save_chain(chain: &Chain, dir: &Path) -> Result<(), LedgerError> {
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(".{CHAIN_FILE}.tmp-{}", std::process::id()));
    let result = (|| -> io::Result<()> {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(&encode_chain(chain.blocks()))?;
        file.sync_all()?;
        fs::rename(&tmp, chain_path(dir))
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// Decode every record of a chain file. A failure names the record index,
/// which is the block height the record should carry.
pub fn decode_chain(bytes: &[u8]) -> Result<Vec<Block>, Failure> {
    let decode = |height: u64, detail: String| Failure {
        height,
        kind: FailureKind::Decode,
        detail,
    };
    let mut blocks = Vec::new();
    let mut rest = bytes;
    let mut height = 0u64;
    while !rest.is_empty() {
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            return Err(decode(height, "truncated record".into()));
        };
        let line = &rest[..end];
        let block: Block = serde_json::from_slice(line)
            .map_err(|e| decode(height, format!("invalid record: {e}")))?;
        if serde_json::to_vec(&block).ok().as_deref() != Some(line) {
            return Err(decode(height, "record is not in canonical form".into()));
        }
        blocks.push(block);
        rest = &rest[end + 1..];
        height += 1;
    }
    Ok(blocks)
}

fn read_chain_file(dir: &Path) -> Result<Vec<u8>, LedgerError> {
    match fs::read(chain_path(dir)) {
        Ok(bytes) if bytes.is_empty() => Err(LedgerError::EmptyStore),
        Ok(bytes) => Ok(bytes),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Err(LedgerError::EmptyStore),
        Err(e) => Err(e.into()),
    }
}

/// Load, re-validate and re-derive state.
pub fn load_chain(dir: &Path) -> Result<Chain, LedgerError> {
    let bytes = read_chain_file(dir)?;
    let blocks = decode_chain(&bytes).map_err(|f| LedgerError::CorruptChain {
        height: f.height,
        cause: f.detail,
    })?;
    Chain::from_blocks(blocks)
}

/// Validate a stored chain without failing on the first decode error:
/// decoding and replay failures both become report contents.
pub fn verify_chain_dir(dir: &Path) -> Result<ValidationReport, LedgerError> {
    let bytes = read_chain_file(dir)?;
    Ok(verify_chain_bytes(&bytes))
}

pub fn verify_chain_bytes(bytes: &[u8]) -> ValidationReport {
    match decode_chain(bytes) {
        Ok(blocks) => validate_chain(&blocks),
        Err(failure) => {
            // Blocks before the undecodable record may themselves be bad;
            // report whichever failure comes first.
            let good = decode_prefix(bytes, failure.height);
            let mut replay = Replay::default();
            for block in &good {
                if let Err(f) = replay.step(block) {
                    return ValidationReport::failed(replay.checked(), f);
                }
            }
            ValidationReport::failed(replay.checked(), failure)
        }
    }
}

fn decode_prefix(bytes: &[u8], count: u64) -> Vec<Block> {
    bytes
        .split(|&b| b == b'\n')
        .take(count as usize)
        .filter_map(|line| serde_json::from_slice(line).ok())
        .collect()
}
