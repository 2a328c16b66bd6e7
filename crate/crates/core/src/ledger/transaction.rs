use serde::{Deserialize, Serialize};

use crate::content_store::Cid;
use crate::contracts::{EventParams, RefundDue};
use crate::identity::{KeyPair, PublicKey};
use crate::ledger::LedgerError;
use crate::types::{hex_bytes, Address, Amount, Hash32};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TxKind {
    CreateEvent,
    Donate,
    Refund,
}

impl TxKind {
    pub fn tag(self) -> u8 {
        match self {
            TxKind::CreateEvent => 0x01,
            TxKind::Donate => 0x02,
            TxKind::Refund => 0x03,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DonatePayload {
    pub event_id: Hash32,
    pub amount: Amount,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Payload {
    CreateEvent(EventParams),
    Donate(DonatePayload),
    /// Emitted by the block producer only, when a campaign misses its target.
    Refund(RefundDue),
}

impl Payload {
    pub fn kind(&self) -> TxKind {
        match self {
            Payload::CreateEvent(_) => TxKind::CreateEvent,
            Payload::Donate(_) => TxKind::Donate,
            Payload::Refund(_) => TxKind::Refund,
        }
    }
}

/// Transaction fields covered by the signature.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UnsignedTx {
    pub sender_pk: PublicKey,
    pub nonce: u64,
    pub fee: Amount,
    pub payload: Payload,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transaction {
    pub sender_pk: PublicKey,
    pub nonce: u64,
    pub fee: Amount,
    pub payload: Payload,
    #[serde(with = "hex_bytes")]
    pub signature: Vec<u8>,
    pub tx_hash: Hash32,
}

struct Encoder(Vec<u8>);

impl Encoder {
    fn fixed(&mut self, bytes: &[u8]) {
        self.0.extend_from_slice(bytes);
    }

    fn var(&mut self, bytes: &[u8]) -> Result<(), LedgerError> {
        self.0.extend_from_slice(&length_prefix(bytes.len())?);
        self.0.extend_from_slice(bytes);
        Ok(())
    }
}

/// 4-byte big-endian length prefix for variable-width fields.
pub fn length_prefix(len: usize) -> Result<[u8; 4], LedgerError> {
    u32::try_from(len)
        .map(u32::to_be_bytes)
        .map_err(|_| LedgerError::EncodingOverflow(len))
}

/// Bit-exact signing preimage.
///
/// Layout: kind tag (1) ‖ sender public key (33) ‖ nonce (8, BE) ‖ fee
/// (16, BE) ‖ payload. Payload fields follow in declaration order; text and
/// byte fields are length-prefixed, fixed-width fields are raw big-endian.
/// The image CID is a byte field holding `codec ‖ digest`.
pub fn canonical_encode(tx: &UnsignedTx) -> Result<Vec<u8>, LedgerError> {
    let mut enc = Encoder(Vec::with_capacity(128));
    enc.fixed(&[tx.payload.kind().tag()]);
    enc.fixed(tx.sender_pk.as_bytes());
    enc.fixed(&tx.nonce.to_be_bytes());
    enc.fixed(&tx.fee.to_be_bytes());
    match &tx.payload {
        Payload::CreateEvent(p) => {
            enc.fixed(p.owner.as_bytes());
            enc.var(p.owner_name.as_bytes())?;
            enc.var(p.title.as_bytes())?;
            enc.var(p.description.as_bytes())?;
            enc.fixed(&p.target.to_be_bytes());
            enc.fixed(&p.deadline.0.to_be_bytes());
            enc.var(&p.image.to_binary())?;
        }
        Payload::Donate(p) => {
            enc.fixed(p.event_id.as_bytes());
            enc.fixed(&p.amount.to_be_bytes());
        }
        Payload::Refund(p) => {
            enc.fixed(p.event_id.as_bytes());
            enc.fixed(p.recipient.as_bytes());
            enc.fixed(&p.amount.to_be_bytes());
        }
    }
    Ok(enc.0)
}

fn tx_hash(preimage: &[u8], signature: &[u8]) -> Hash32 {
    Hash32::digest_parts(&[preimage, signature])
}

impl UnsignedTx {
    pub fn canonical_encode(&self) -> Result<Vec<u8>, LedgerError> {
        canonical_encode(self)
    }

    /// Sign with `keys`; the caller is responsible for `sender_pk`
    /// matching. A mismatched key yields a transaction that fails
    /// verification rather than an error.
    pub fn sign(self, keys: &KeyPair) -> Result<Transaction, LedgerError> {
        let preimage = canonical_encode(&self)?;
        let signature = keys.sign(&preimage).to_vec();
        let tx_hash = tx_hash(&preimage, &signature);
        Ok(Transaction {
            sender_pk: self.sender_pk,
            nonce: self.nonce,
            fee: self.fee,
            payload: self.payload,
            signature,
            tx_hash,
        })
    }
}

impl Transaction {
    pub fn kind(&self) -> TxKind {
        self.payload.kind()
    }

    pub fn unsigned(&self) -> UnsignedTx {
        UnsignedTx {
            sender_pk: self.sender_pk,
            nonce: self.nonce,
            fee: self.fee,
            payload: self.payload.clone(),
        }
    }

    pub fn sender(&self) -> Address {
        self.sender_pk.address()
    }

    pub fn preimage(&self) -> Result<Vec<u8>, LedgerError> {
        canonical_encode(&self.unsigned())
    }

    pub fn computed_hash(&self) -> Option<Hash32> {
        let preimage = self.preimage().ok()?;
        Some(tx_hash(&preimage, &self.signature))
    }

    pub fn hash_matches(&self) -> bool {
        self.computed_hash() == Some(self.tx_hash)
    }

    /// True iff the signature is valid under `sender_pk` and `tx_hash`
    /// recomputes. Never errors.
    pub fn verify(&self) -> bool {
        let Ok(preimage) = self.preimage() else {
            return false;
        };
        tx_hash(&preimage, &self.signature) == self.tx_hash
            && self.sender_pk.verify(&preimage, &self.signature)
    }

    pub fn donation(&self) -> Option<&DonatePayload> {
        match &self.payload {
            Payload::Donate(d) => Some(d),
            _ => None,
        }
    }
}

pub fn sign_transaction(tx: UnsignedTx, keys: &KeyPair) -> Result<Transaction, LedgerError> {
    tx.sign(keys)
}

pub fn verify_transaction(tx: &Transaction) -> bool {
    tx.verify()
}

/// Convenience constructors for user transactions.
pub fn create_event_tx(
    keys: &KeyPair,
    nonce: u64,
    fee: Amount,
    params: EventParams,
) -> Result<Transaction, LedgerError> {
    UnsignedTx {
        sender_pk: *keys.public(),
        nonce,
        fee,
        payload: Payload::CreateEvent(params),
    }
    .sign(keys)
}

pub fn donate_tx(
    keys: &KeyPair,
    nonce: u64,
    fee: Amount,
    event_id: Hash32,
    amount: Amount,
) -> Result<Transaction, LedgerError> {
    UnsignedTx {
        sender_pk: *keys.public(),
        nonce,
        fee,
        payload: Payload::Donate(DonatePayload { event_id, amount }),
    }
    .sign(keys)
}

/// Parameters for a campaign with sensible defaults for the text fields.
pub fn event_params(owner: Address, title: &str, target: Amount, deadline: u64, image: Cid) -> EventParams {
    EventParams {
        owner,
        owner_name: String::new(),
        title: title.to_string(),
        description: String::new(),
        target,
        deadline: crate::types::Timestamp(deadline),
        image,
    }
}
