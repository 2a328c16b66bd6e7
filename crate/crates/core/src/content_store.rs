//! Content-addressed blob storage for campaign images.
//!
//! Each blob lives in one file named by its CID text form; the directory
//! listing is the index. Writes land under a temporary name and are
//! atomically renamed, so concurrent writers of the same bytes converge on
//! one file.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use data_encoding::BASE32_NOPAD;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::error::ParseError;
use crate::types::Hash32;

/// Multicodec code for raw bytes.
pub const CODEC_RAW: u8 = 0x55;
pub const DEFAULT_MAX_BLOB: u64 = 16 * 1024 * 1024;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("blob of {size} bytes exceeds limit of {limit}")]
    BlobTooLarge { size: u64, limit: u64 },
    #[error("no blob stored under {0}")]
    NotFound(Cid),
    #[error("stored bytes for {0} do not match their digest")]
    CorruptBlob(Cid),
    #[error("unknown platform {0:?}")]
    UnknownPlatform(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl StoreError {
    pub fn kind(&self) -> &'static str {
        match self {
            StoreError::BlobTooLarge { .. } => "BlobTooLarge",
            StoreError::NotFound(_) => "NotFound",
            StoreError::CorruptBlob(_) => "CorruptBlob",
            StoreError::UnknownPlatform(_) => "UnknownPlatform",
            StoreError::Io(_) => "IoError",
        }
    }
}

/// Content identifier: codec plus SHA-256 digest of the bytes.
///
/// Text form is `b` followed by unpadded lowercase base32 of
/// `codec ‖ digest`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cid {
    codec: u8,
    digest: Hash32,
}

impl Cid {
    pub const BINARY_LEN: usize = 33;

    pub fn for_bytes(bytes: &[u8]) -> Self {
        Cid {
            codec: CODEC_RAW,
            digest: Hash32::digest(bytes),
        }
    }

    pub fn codec(&self) -> u8 {
        self.codec
    }

    pub fn digest(&self) -> Hash32 {
        self.digest
    }

    pub fn to_binary(&self) -> [u8; Self::BINARY_LEN] {
        let mut out = [0u8; Self::BINARY_LEN];
        out[0] = self.codec;
        out[1..].copy_from_slice(self.digest.as_bytes());
        out
    }

    pub fn from_binary(bytes: &[u8]) -> Result<Self, ParseError> {
        if bytes.len() != Self::BINARY_LEN {
            return Err(ParseError::new(format!(
                "CID must be {} bytes, got {}",
                Self::BINARY_LEN,
                bytes.len()
            )));
        }
        if bytes[0] != CODEC_RAW {
            return Err(ParseError::new(format!("unsupported codec 0x{:02x}", bytes[0])));
        }
        let mut digest = [0u8; 32];
        digest.copy_from_slice(&bytes[1..]);
        Ok(Cid {
            codec: bytes[0],
            digest: Hash32(digest),
        })
    }
}

impl fmt::Display for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "b{}",
            BASE32_NOPAD.encode(&self.to_binary()).to_lowercase()
        )
    }
}

impl fmt::Debug for Cid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Cid({self})")
    }
}

impl FromStr for Cid {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ParseError::new(format!("malformed CID {s:?}"));
        let body = s.strip_prefix('b').ok_or_else(bad)?;
        if body.bytes().any(|b| !(b.is_ascii_lowercase() || (b'2'..=b'7').contains(&b))) {
            return Err(bad());
        }
        let bytes = BASE32_NOPAD
            .decode(body.to_uppercase().as_bytes())
            .map_err(|_| bad())?;
        let cid = Cid::from_binary(&bytes)?;
        if cid.to_string() != s {
            return Err(bad());
        }
        Ok(cid)
    }
}

impl Serialize for Cid {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Cid {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Platform {
    Twitter,
    Facebook,
    Whatsapp,
    Instagram,
}

impl Platform {
    pub const ALL: [Platform; 4] = [
        Platform::Twitter,
        Platform::Facebook,
        Platform::Whatsapp,
        Platform::Instagram,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Platform::Twitter => "twitter",
            Platform::Facebook => "facebook",
            Platform::Whatsapp => "whatsapp",
            Platform::Instagram => "instagram",
        }
    }
}

impl FromStr for Platform {
    type Err = StoreError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Platform::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| StoreError::UnknownPlatform(s.to_string()))
    }
}

/// Deterministic share URI for a campaign; no network activity.
pub fn share_link(event_id: &Hash32, cid: &Cid, platform: Platform) -> String {
    format!(
        "dnb://share/{}/{}?event={}",
        platform.as_str(),
        cid,
        event_id.to_hex()
    )
}

/// Like [`share_link`] but with the platform given by name.
pub fn share_link_named(event_id: &Hash32, cid: &Cid, platform: &str) -> Result<String, StoreError> {
    Ok(share_link(event_id, cid, platform.parse()?))
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Clone, Debug)]
pub struct ContentStore {
    dir: PathBuf,
    max_blob: u64,
}

impl ContentStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        Self::with_limit(dir, DEFAULT_MAX_BLOB)
    }

    pub fn with_limit(dir: impl Into<PathBuf>, max_blob: u64) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(ContentStore { dir, max_blob })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, cid: &Cid) -> PathBuf {
        self.dir.join(cid.to_string())
    }

    pub fn put(&self, bytes: &[u8]) -> Result<Cid, StoreError> {
        let size = bytes.len() as u64;
        if size > self.max_blob {
            return Err(StoreError::BlobTooLarge {
                size,
                limit: self.max_blob,
            });
        }
        let cid = Cid::for_bytes(bytes);
        let target = self.path_for(&cid);
        if target.exists() {
            return Ok(cid);
        }
        let tmp = self.dir.join(format!(
            ".tmp-{}-{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed),
            cid
        ));
        let result = (|| {
            let mut file = fs::File::create(&tmp)?;
            file.write_all(bytes)?;
            file.sync_all()?;
            fs::rename(&tmp, &target)
        })();
        if result.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        result?;
        Ok(cid)
    }

    pub fn get(&self, cid: &Cid) -> Result<Vec<u8>, StoreError> {
        let bytes = match fs::read(self.path_for(cid)) {
            Ok(bytes) => bytes,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(StoreError::NotFound(*cid)),
            Err(e) => return Err(e.into()),
        };
        if Hash32::digest(&bytes) != cid.digest() {
            return Err(StoreError::CorruptBlob(*cid));
        }
        Ok(bytes)
    }

    pub fn contains(&self, cid: &Cid) -> bool {
        self.path_for(cid).exists()
    }

    /// CIDs of all stored blobs, sorted.
    pub fn list(&self) -> Result<Vec<Cid>, StoreError> {
        let mut out = Vec::new();
        for entry in fs::read_dir(&self.dir)? {
            let name = entry?.file_name();
            if let Some(cid) = name.to_str().and_then(|n| n.parse::<Cid>().ok()) {
                out.push(cid);
            }
        }
        out.sort();
        Ok(out)
    }

    /// (blob count, total bytes).
    pub fn usage(&self) -> Result<(usize, u64), StoreError> {
        let mut bytes = 0;
        let cids = self.list()?;
        for cid in &cids {
            bytes += fs::metadata(self.path_for(cid))?.len();
        }
        Ok((cids.len(), bytes))
    }
}
