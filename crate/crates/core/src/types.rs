//! Ledger value types: landmark ids, panoramic views, FOV transactions and blocks.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::codec::{Encoder, Hash512, SignatureBytes, MAX_ID_BYTES};
use crate::error::EncodeError;

pub const SECTOR_COUNT: usize = 6;
pub const SECTOR_WIDTH_DEG: f64 = 60.0;

const TX_TAG: &[u8] = b"VHTX1";
const BLOCK_TAG: &[u8] = b"VHBK1";

/// Proposer id carried by every genesis header.
pub const GENESIS_PROPOSER: &str = "GENESIS";

/// Identifier of a world landmark. Non-empty, at most 64 bytes of UTF-8.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct LandmarkId(String);

impl LandmarkId {
    pub fn new(id: impl Into<String>) -> Result<Self, EncodeError> {
        let id = id.into();
        if id.is_empty() {
            return Err(EncodeError::EmptyId);
        }
        if id.len() > MAX_ID_BYTES {
            return Err(EncodeError::IdTooLong {
                len: id.len(),
                id,
            });
        }
        Ok(LandmarkId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Builds an id without the length check. Only for constructing
    /// deliberately malformed values in tests and adversary code.
    #[doc(hidden)]
    pub fn new_unchecked(id: impl Into<String>) -> Self {
        LandmarkId(id.into())
    }
}

impl TryFrom<String> for LandmarkId {
    type Error = EncodeError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        LandmarkId::new(s)
    }
}

impl From<LandmarkId> for String {
    fn from(id: LandmarkId) -> String {
        id.0
    }
}

impl fmt::Debug for LandmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl fmt::Display for LandmarkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Six 60° sectors of landmark ids. Sector `i` covers bearings
/// `[60i, 60(i+1))` degrees in the world frame. Each sector is a sorted set,
/// so the canonical order falls out of the representation.
#[derive(Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<BTreeSet<LandmarkId>>", into = "Vec<BTreeSet<LandmarkId>>")]
pub struct PanoramicView {
    sectors: [BTreeSet<LandmarkId>; SECTOR_COUNT],
}

impl PanoramicView {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_sectors(sectors: [BTreeSet<LandmarkId>; SECTOR_COUNT]) -> Self {
        PanoramicView { sectors }
    }

    pub fn insert(&mut self, sector: usize, id: LandmarkId) {
        self.sectors[sector].insert(id);
    }

    pub fn sectors(&self) -> &[BTreeSet<LandmarkId>; SECTOR_COUNT] {
        &self.sectors
    }

    pub fn sector_mut(&mut self, sector: usize) -> &mut BTreeSet<LandmarkId> {
        &mut self.sectors[sector]
    }

    /// Union of all sectors. Sector placement does not affect commonality.
    pub fn flatten(&self) -> BTreeSet<LandmarkId> {
        self.sectors.iter().flatten().cloned().collect()
    }

    pub fn contains(&self, id: &LandmarkId) -> bool {
        self.sectors.iter().any(|s| s.contains(id))
    }

    pub fn len(&self) -> usize {
        self.sectors.iter().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.sectors.iter().all(BTreeSet::is_empty)
    }

    fn encode(&self, mut enc: Encoder) -> Result<Encoder, EncodeError> {
        for sector in &self.sectors {
            enc = enc.count(sector.len());
            for id in sector {
                enc = enc.id(id.as_str())?;
            }
        }
        Ok(enc)
    }
}

impl TryFrom<Vec<BTreeSet<LandmarkId>>> for PanoramicView {
    type Error = String;
    fn try_from(v: Vec<BTreeSet<LandmarkId>>) -> Result<Self, Self::Error> {
        let n = v.len();
        let sectors: [BTreeSet<LandmarkId>; SECTOR_COUNT] = v
            .try_into()
            .map_err(|_| format!("a panoramic view needs exactly 6 sectors, got {n}"))?;
        Ok(PanoramicView { sectors })
    }
}

impl From<PanoramicView> for Vec<BTreeSet<LandmarkId>> {
    fn from(v: PanoramicView) -> Self {
        v.sectors.into()
    }
}

impl fmt::Debug for PanoramicView {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.sectors.iter()).finish()
    }
}

/// A robot's signed, sequence-numbered view summary.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FovTransaction {
    pub robot_id: String,
    pub seq: u64,
    pub timestamp_us: u64,
    pub view: PanoramicView,
    pub signature: SignatureBytes,
}

impl FovTransaction {
    /// A transaction with an all-zero signature, ready to be signed.
    pub fn unsigned(robot_id: impl Into<String>, seq: u64, timestamp_us: u64, view: PanoramicView) -> Self {
        FovTransaction {
            robot_id: robot_id.into(),
            seq,
            timestamp_us,
            view,
            signature: SignatureBytes::ZERO,
        }
    }
}

/// Canonical transaction bytes: `"VHTX1" ‖ robot_id ‖ seq ‖ timestamp_us ‖
/// 6 × (count ‖ ids…) [‖ signature]`.
pub fn canonical_tx_bytes(tx: &FovTransaction, include_signature: bool) -> Result<Vec<u8>, EncodeError> {
    let enc = Encoder::new()
        .tag(TX_TAG)
        .id(&tx.robot_id)?
        .u64(tx.seq)
        .u64(tx.timestamp_us);
    let mut enc = tx.view.encode(enc)?;
    if include_signature {
        enc = enc.raw(&tx.signature.0);
    }
    Ok(enc.finish())
}

/// SHA-512 of the signed canonical bytes.
pub fn tx_digest(tx: &FovTransaction) -> Result<Hash512, EncodeError> {
    Ok(Hash512::of(&canonical_tx_bytes(tx, true)?))
}

/// SHA-512 of the unsigned canonical bytes; this is the message that gets signed.
pub fn tx_signing_digest(tx: &FovTransaction) -> Result<Hash512, EncodeError> {
    Ok(Hash512::of(&canonical_tx_bytes(tx, false)?))
}

/// SHA-512 over the concatenated tx digests, in block order.
pub fn body_digest(txs: &[FovTransaction]) -> Result<Hash512, EncodeError> {
    let mut bytes = Vec::with_capacity(txs.len() * 64);
    for tx in txs {
        bytes.extend_from_slice(tx_digest(tx)?.as_bytes());
    }
    Ok(Hash512::of(&bytes))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlockHeader {
    pub index: u64,
    pub prev_hash: Hash512,
    pub body_digest: Hash512,
    pub timestamp_us: u64,
    pub proposer_id: String,
    pub difficulty: u32,
    pub nonce: u64,
}

impl BlockHeader {
    /// Genesis header. Its `body_digest` slot carries the ACL digest, which
    /// pins the membership list to the chain.
    pub fn genesis(acl_digest: Hash512, timestamp_us: u64) -> Self {
        BlockHeader {
            index: 0,
            prev_hash: Hash512::ZERO,
            body_digest: acl_digest,
            timestamp_us,
            proposer_id: GENESIS_PROPOSER.to_owned(),
            difficulty: 0,
            nonce: 0,
        }
    }

    /// `"VHBK1" ‖ index ‖ prev_hash ‖ body_digest ‖ timestamp_us ‖
    /// proposer_id ‖ difficulty ‖ nonce`.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        Encoder::new()
            .tag(BLOCK_TAG)
            .u64(self.index)
            .raw(self.prev_hash.as_bytes())
            .raw(self.body_digest.as_bytes())
            .u64(self.timestamp_us)
            .str(&self.proposer_id)
            .u32(self.difficulty)
            .u64(self.nonce)
            .finish()
    }
}

/// SHA-512 over the canonical header bytes.
pub fn block_hash(header: &BlockHeader) -> Hash512 {
    Hash512::of(&header.canonical_bytes())
}

/// A header, its transactions, and the proposer's signature over the block hash.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<FovTransaction>,
    pub proposer_signature: SignatureBytes,
}

impl Block {
    pub fn genesis(acl_digest: Hash512, timestamp_us: u64) -> Self {
        Block {
            header: BlockHeader::genesis(acl_digest, timestamp_us),
            txs: Vec::new(),
            proposer_signature: SignatureBytes::ZERO,
        }
    }

    pub fn hash(&self) -> Hash512 {
        block_hash(&self.header)
    }

    /// Size of the block in canonical encoding; used as a memory proxy.
    pub fn encoded_len(&self) -> usize {
        let header = self.header.canonical_bytes().len();
        let txs: usize = self
            .txs
            .iter()
            .map(|tx| canonical_tx_bytes(tx, true).map(|b| b.len()).unwrap_or(0))
            .sum();
        header + txs + 64
    }
}
