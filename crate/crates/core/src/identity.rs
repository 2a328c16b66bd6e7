//! Keypairs, addresses, `did:dnb` identifiers and a local wallet that
//! stands in for a browser wallet extension.
//!
//! Signatures are deterministic ECDSA over secp256k1 (RFC 6979 nonces,
//! SHA-256 message digest, low-S normalised). Public keys are 33-byte
//! compressed SEC1 points.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use data_encoding::BASE32_NOPAD;
use k256::ecdsa::signature::hazmat::{PrehashSigner, PrehashVerifier};
use k256::ecdsa::signature::{Signer, Verifier};
use k256::ecdsa::{Signature, SigningKey, VerifyingKey};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::error::ParseError;
use crate::ledger::Chain;
use crate::types::{parse_hex_array, Address, Amount, Hash32};

/// Identifier recorded in the genesis block for the signature scheme.
pub const SIGNATURE_SCHEME: &str = "secp256k1-ecdsa-sha256-rfc6979";
pub const PUBLIC_KEY_LEN: usize = 33;
pub const SIGNATURE_LEN: usize = 64;

const DID_PREFIX: &str = "did:dnb:";
const AUTH_DOMAIN: &[u8] = b"dnb-auth";
pub const MIN_CHALLENGE_LEN: usize = 16;

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("malformed DID: {0}")]
    MalformedDid(String),
    #[error("challenge must be at least {MIN_CHALLENGE_LEN} bytes, got {0}")]
    ChallengeTooShort(usize),
    #[error("invalid key material: {0}")]
    InvalidKey(String),
    #[error("wallet file: {0}")]
    WalletFile(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl IdentityError {
    pub fn kind(&self) -> &'static str {
        match self {
            IdentityError::MalformedDid(_) => "MalformedDid",
            IdentityError::ChallengeTooShort(_) => "ChallengeTooShort",
            IdentityError::InvalidKey(_) => "InvalidKey",
            IdentityError::WalletFile(_) => "WalletFile",
            IdentityError::Io(_) => "IoError",
        }
    }
}

/// Compressed secp256k1 public key.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey(pub [u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.0
    }

    pub fn address(&self) -> Address {
        Address::from_public_key(&self.0)
    }

    pub fn did(&self) -> Did {
        Did::from_public_key(self)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// Verify a signature over `message` (hashed with SHA-256 internally).
    /// Any malformed key or signature simply fails verification.
    pub fn verify(&self, message: &[u8], signature: &[u8]) -> bool {
        let Some((key, sig)) = self.decode(signature) else {
            return false;
        };
        key.verify(message, &sig).is_ok()
    }

    /// Verify a signature over an already computed 32-byte digest.
    pub fn verify_digest(&self, digest: &Hash32, signature: &[u8]) -> bool {
        let Some((key, sig)) = self.decode(signature) else {
            return false;
        };
        key.verify_prehash(digest.as_bytes(), &sig).is_ok()
    }

    fn decode(&self, signature: &[u8]) -> Option<(VerifyingKey, Signature)> {
        let key = VerifyingKey::from_sec1_bytes(&self.0).ok()?;
        let sig = Signature::from_slice(signature).ok()?;
        Some((key, sig))
    }
}

impl fmt::Display for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_hex())
    }
}

impl FromStr for PublicKey {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(PublicKey(parse_hex_array(s)?))
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(deserializer)?;
        s.parse().map_err(D::Error::custom)
    }
}

#[derive(Clone)]
pub struct KeyPair {
    secret: SigningKey,
    public: PublicKey,
}

impl KeyPair {
    /// Fresh keypair from the operating system's entropy source.
    pub fn generate() -> Self {
        Self::from_signing_key(SigningKey::random(&mut rand::rngs::OsRng))
    }

    /// Reproducible keypair for tests and simulations.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Self::from_signing_key(SigningKey::random(&mut rng))
    }

    /// Keypair from a seeded generator; successive calls yield distinct keys.
    pub fn from_rng(rng: &mut ChaCha20Rng) -> Self {
        Self::from_signing_key(SigningKey::random(rng))
    }

    pub fn from_secret_bytes(secret: &[u8]) -> Result<Self, IdentityError> {
        let key =
            SigningKey::from_slice(secret).map_err(|e| IdentityError::InvalidKey(e.to_string()))?;
        Ok(Self::from_signing_key(key))
    }

    fn from_signing_key(secret: SigningKey) -> Self {
        let point = secret.verifying_key().to_encoded_point(true);
        let mut public = [0u8; PUBLIC_KEY_LEN];
        public.copy_from_slice(point.as_bytes());
        KeyPair {
            secret,
            public: PublicKey(public),
        }
    }

    pub fn public(&self) -> &PublicKey {
        &self.public
    }

    pub fn secret_bytes(&self) -> [u8; 32] {
        self.secret.to_bytes().into()
    }

    pub fn address(&self) -> Address {
        self.public.address()
    }

    pub fn sign(&self, message: &[u8]) -> [u8; SIGNATURE_LEN] {
        let sig: Signature = self.secret.sign(message);
        sig.to_bytes().into()
    }

    pub fn sign_digest(&self, digest: &Hash32) -> [u8; SIGNATURE_LEN] {
        let sig: Signature = self
            .secret
            .sign_prehash(digest.as_bytes())
            .expect("32-byte prehash is always accepted");
        sig.to_bytes().into()
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}

impl PartialEq for KeyPair {
    fn eq(&self, other: &Self) -> bool {
        self.public == other.public && self.secret_bytes() == other.secret_bytes()
    }
}

impl Eq for KeyPair {}

/// `did:dnb:<base32 lowercase, unpadded, of SHA-256(public key)>`.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct Did(String);

impl Did {
    pub fn from_public_key(public: &PublicKey) -> Self {
        let digest = Hash32::digest(public.as_bytes());
        Did(format!(
            "{DID_PREFIX}{}",
            BASE32_NOPAD.encode(digest.as_bytes()).to_lowercase()
        ))
    }

    pub fn parse(text: &str) -> Result<Self, IdentityError> {
        Self::key_digest_of(text)?;
        Ok(Did(text.to_string()))
    }

    /// The 32-byte public-key digest this DID commits to.
    pub fn key_digest(&self) -> Hash32 {
        Self::key_digest_of(&self.0).expect("validated on construction")
    }

    fn key_digest_of(text: &str) -> Result<Hash32, IdentityError> {
        let malformed = || IdentityError::MalformedDid(text.to_string());
        let body = text.strip_prefix(DID_PREFIX).ok_or_else(malformed)?;
        if body.bytes().any(|b| !(b.is_ascii_lowercase() || (b'2'..=b'7').contains(&b))) {
            return Err(malformed());
        }
        let bytes = BASE32_NOPAD
            .decode(body.to_uppercase().as_bytes())
            .map_err(|_| malformed())?;
        let digest: [u8; 32] = bytes.try_into().map_err(|_| malformed())?;
        let did = Hash32(digest);
        // Reject non-canonical trailing bits.
        if BASE32_NOPAD.encode(&did.0).to_lowercase() != body {
            return Err(malformed());
        }
        Ok(did)
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn matches(&self, public: &PublicKey) -> bool {
        self.key_digest() == Hash32::digest(public.as_bytes())
    }
}

impl fmt::Display for Did {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Did {
    type Err = IdentityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Did::parse(s)
    }
}

/// Proof presented by a DID holder: their public key and a signature over
/// the domain-separated challenge digest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuthResponse {
    pub public_key: PublicKey,
    pub signature: Vec<u8>,
}

pub fn challenge_digest(challenge: &[u8]) -> Hash32 {
    Hash32::digest_parts(&[AUTH_DOMAIN, challenge])
}

pub fn sign_challenge(keys: &KeyPair, challenge: &[u8]) -> AuthResponse {
    AuthResponse {
        public_key: *keys.public(),
        signature: keys.sign_digest(&challenge_digest(challenge)).to_vec(),
    }
}

/// True iff `response` carries a key that hashes to `did` and a valid
/// signature over `SHA-256("dnb-auth" ‖ challenge)`.
pub fn authenticate(
    did: &str,
    challenge: &[u8],
    response: &AuthResponse,
) -> Result<bool, IdentityError> {
    let did = Did::parse(did)?;
    if challenge.len() < MIN_CHALLENGE_LEN {
        return Err(IdentityError::ChallengeTooShort(challenge.len()));
    }
    if !did.matches(&response.public_key) {
        return Ok(false);
    }
    Ok(response
        .public_key
        .verify_digest(&challenge_digest(challenge), &response.signature))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Wallet {
    pub name: String,
    pub keys: KeyPair,
    pub address: Address,
    pub did: Did,
    pub network_name: String,
}

pub const DEFAULT_NETWORK: &str = "dnb-local";

impl Wallet {
    pub fn new(name: &str, seed: Option<u64>) -> Self {
        let keys = match seed {
            Some(seed) => KeyPair::from_seed(seed),
            None => KeyPair::generate(),
        };
        Self::from_keys(name, keys, DEFAULT_NETWORK)
    }

    pub fn from_keys(name: &str, keys: KeyPair, network_name: &str) -> Self {
        Wallet {
            name: name.to_string(),
            address: keys.address(),
            did: keys.public().did(),
            keys,
            network_name: network_name.to_string(),
        }
    }

    pub fn with_network(mut self, network_name: &str) -> Self {
        self.network_name = network_name.to_string();
        self
    }

    /// Address, balance and network as a connected wallet would display them.
    pub fn info(&self, chain: &Chain) -> WalletInfo {
        WalletInfo {
            address: self.address.to_hex(),
            balance: chain.state().balance(&self.address),
            network_name: self.network_name.clone(),
        }
    }

    pub fn to_file(&self) -> WalletFile {
        WalletFile {
            name: self.name.clone(),
            public: self.keys.public().to_hex(),
            secret: hex::encode(self.keys.secret_bytes()),
            did: self.did.to_string(),
            network_name: self.network_name.clone(),
        }
    }

    pub fn from_file(file: &WalletFile) -> Result<Self, IdentityError> {
        let secret = crate::types::parse_hex(&file.secret)
            .map_err(|e| IdentityError::WalletFile(e.to_string()))?;
        let keys = KeyPair::from_secret_bytes(&secret)?;
        if keys.public().to_hex() != file.public {
            return Err(IdentityError::WalletFile(
                "public key does not match secret".into(),
            ));
        }
        let wallet = Self::from_keys(&file.name, keys, &file.network_name);
        if wallet.did.as_str() != file.did {
            return Err(IdentityError::WalletFile("DID does not match key".into()));
        }
        Ok(wallet)
    }

    /// Write the wallet as JSON, readable by the owner only where supported.
    pub fn save(&self, path: &Path) -> Result<(), IdentityError> {
        let json = serde_json::to_string_pretty(&self.to_file())
            .map_err(|e| IdentityError::WalletFile(e.to_string()))?;
        write_private(path, json.as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, IdentityError> {
        let bytes = fs::read(path)?;
        let file: WalletFile =
            serde_json::from_slice(&bytes).map_err(|e| IdentityError::WalletFile(e.to_string()))?;
        Self::from_file(&file)
    }
}

/// Create a wallet; `seed` makes generation reproducible.
pub fn new_wallet(name: &str, seed: Option<u64>) -> Wallet {
    Wallet::new(name, seed)
}

pub fn wallet_info(wallet: &Wallet, chain: &Chain) -> WalletInfo {
    wallet.info(chain)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalletInfo {
    pub address: String,
    pub balance: Amount,
    pub network_name: String,
}

/// On-disk wallet layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalletFile {
    pub name: String,
    pub public: String,
    pub secret: String,
    pub did: String,
    pub network_name: String,
}

pub(crate) fn write_private(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    use std::io::Write;

    let mut options = fs::OpenOptions::new();
    options.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::OpenOptionsExt;
        options.mode(0o600);
    }
    let mut file = options.open(path)?;
    file.write_all(contents)?;
    file.sync_all()
}
