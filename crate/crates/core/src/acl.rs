//! Robot identities, the genesis-pinned access control list, transaction and
//! vote signatures, and delivery receipts for the repudiation audit trail.

use std::collections::BTreeMap;
use std::fmt;

use ed25519_dalek::{Signature, Signer, SigningKey, VerifyingKey};
use serde::{Deserialize, Serialize};

use crate::codec::{Encoder, Hash512, PublicKeyBytes, SignatureBytes};
use crate::error::{AclError, EncodeError};
use crate::types::{tx_signing_digest, FovTransaction};

const ACL_TAG: &[u8] = b"VHACL1";
const RECEIPT_TAG: &[u8] = b"VHRC1";
const BLOCK_SIG_TAG: &[u8] = b"VHBS1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Member,
    Observer,
}

impl Role {
    fn code(self) -> u8 {
        match self {
            Role::Member => 0,
            Role::Observer => 1,
        }
    }
}

/// A robot's key pair and role. The private half never leaves the node that
/// owns it.
#[derive(Clone)]
pub struct RobotIdentity {
    pub robot_id: String,
    pub role: Role,
    signing_key: SigningKey,
}

impl fmt::Debug for RobotIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RobotIdentity")
            .field("robot_id", &self.robot_id)
            .field("role", &self.role)
            .field("public_key", &self.public_key())
            .finish_non_exhaustive()
    }
}

impl PartialEq for RobotIdentity {
    fn eq(&self, other: &Self) -> bool {
        self.robot_id == other.robot_id
            && self.role == other.role
            && self.signing_key.to_bytes() == other.signing_key.to_bytes()
    }
}

impl RobotIdentity {
    /// Deterministic Ed25519 key pair from a 32-byte seed.
    pub fn keygen(robot_id: impl Into<String>, role: Role, seed: [u8; 32]) -> Self {
        RobotIdentity {
            robot_id: robot_id.into(),
            role,
            signing_key: SigningKey::from_bytes(&seed),
        }
    }

    /// Seed derived from a scenario seed and a robot id, so every run of a
    /// scenario reproduces the same ACL.
    pub fn derived_seed(scenario_seed: u64, robot_id: &str) -> [u8; 32] {
        let bytes = Encoder::new()
            .tag(b"VHKEY1")
            .u64(scenario_seed)
            .str(robot_id)
            .finish();
        let digest = Hash512::of(&bytes);
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest.as_bytes()[..32]);
        seed
    }

    pub fn public_key(&self) -> PublicKeyBytes {
        PublicKeyBytes(self.signing_key.verifying_key().to_bytes())
    }

    pub fn private_key(&self) -> [u8; 32] {
        self.signing_key.to_bytes()
    }

    pub fn sign(&self, message: &[u8]) -> SignatureBytes {
        SignatureBytes(self.signing_key.sign(message).to_bytes())
    }

    pub fn acl_entry(&self) -> AclEntry {
        AclEntry {
            pubkey: self.public_key(),
            role: self.role,
        }
    }
}

/// Verifies an Ed25519 signature, rejecting malformed keys and
/// non-canonical signatures.
pub fn verify_signature(pubkey: &PublicKeyBytes, message: &[u8], sig: &SignatureBytes) -> bool {
    let Ok(key) = VerifyingKey::from_bytes(&pubkey.0) else {
        return false;
    };
    let sig = Signature::from_bytes(&sig.0);
    key.verify_strict(message, &sig).is_ok()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AclEntry {
    pub pubkey: PublicKeyBytes,
    pub role: Role,
}

/// The shared membership list. Static after genesis.
///
/// File form is a JSON object `{robot_id: {"pubkey": hex, "role": ...}}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, AclEntry>", into = "BTreeMap<String, AclEntry>")]
pub struct Acl {
    entries: BTreeMap<String, AclEntry>,
}

impl Acl {
    pub const VERSION: u32 = 1;

    pub fn new(entries: BTreeMap<String, AclEntry>) -> Result<Self, AclError> {
        if entries.is_empty() {
            return Err(AclError::Empty);
        }
        for (id, entry) in &entries {
            if id.is_empty() {
                return Err(AclError::Encode(EncodeError::EmptyId));
            }
            Encoder::new().id(id)?;
            if VerifyingKey::from_bytes(&entry.pubkey.0).is_err() {
                return Err(AclError::BadPublicKey(id.clone()));
            }
        }
        Ok(Acl { entries })
    }

    pub fn from_identities<'a>(ids: impl IntoIterator<Item = &'a RobotIdentity>) -> Result<Self, AclError> {
        Acl::new(
            ids.into_iter()
                .map(|id| (id.robot_id.clone(), id.acl_entry()))
                .collect(),
        )
    }

    pub fn get(&self, robot_id: &str) -> Option<&AclEntry> {
        self.entries.get(robot_id)
    }

    pub fn entries(&self) -> &BTreeMap<String, AclEntry> {
        &self.entries
    }

    pub fn is_member(&self, robot_id: &str) -> bool {
        matches!(self.entries.get(robot_id), Some(e) if e.role == Role::Member)
    }

    /// Member ids in sorted order; index `round % len` is the round's proposer.
    pub fn members(&self) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|(_, e)| e.role == Role::Member)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn member_count(&self) -> usize {
        self.entries.values().filter(|e| e.role == Role::Member).count()
    }

    /// `"VHACL1" ‖ version ‖ count ‖ (id ‖ pubkey ‖ role)…` in id order.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new()
            .tag(ACL_TAG)
            .u32(Self::VERSION)
            .count(self.entries.len());
        for (id, entry) in &self.entries {
            enc = enc.str(id).raw(&entry.pubkey.0).raw(&[entry.role.code()]);
        }
        enc.finish()
    }

    pub fn digest(&self) -> Hash512 {
        Hash512::of(&self.canonical_bytes())
    }
}

impl TryFrom<BTreeMap<String, AclEntry>> for Acl {
    type Error = AclError;
    fn try_from(entries: BTreeMap<String, AclEntry>) -> Result<Self, Self::Error> {
        Acl::new(entries)
    }
}

impl From<Acl> for BTreeMap<String, AclEntry> {
    fn from(acl: Acl) -> Self {
        acl.entries
    }
}

/// Signs a transaction over the SHA-512 of its unsigned canonical bytes.
pub fn sign_tx(identity: &RobotIdentity, mut tx: FovTransaction) -> Result<FovTransaction, AclError> {
    if identity.robot_id != tx.robot_id {
        return Err(AclError::IdMismatch {
            identity: identity.robot_id.clone(),
            claimed: tx.robot_id,
        });
    }
    let digest = tx_signing_digest(&tx)?;
    tx.signature = identity.sign(digest.as_bytes());
    Ok(tx)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TxVerdict {
    Accept,
    UnknownId,
    BadSignature,
    WrongRole,
}

impl TxVerdict {
    pub fn is_accept(self) -> bool {
        self == TxVerdict::Accept
    }
}

impl fmt::Display for TxVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TxVerdict::Accept => "accept",
            TxVerdict::UnknownId => "unknown-id",
            TxVerdict::BadSignature => "bad-signature",
            TxVerdict::WrongRole => "wrong-role",
        })
    }
}

/// Authenticates then authorizes: unknown id, then signature, then role.
pub fn verify_tx(tx: &FovTransaction, acl: &Acl) -> TxVerdict {
    let Some(entry) = acl.get(&tx.robot_id) else {
        return TxVerdict::UnknownId;
    };
    let Ok(digest) = tx_signing_digest(tx) else {
        return TxVerdict::BadSignature;
    };
    if !verify_signature(&entry.pubkey, digest.as_bytes(), &tx.signature) {
        return TxVerdict::BadSignature;
    }
    if entry.role != Role::Member {
        return TxVerdict::WrongRole;
    }
    TxVerdict::Accept
}

/// Message a proposer signs to vouch for a block hash.
pub fn block_signing_bytes(block_hash: &Hash512) -> Vec<u8> {
    Encoder::new().tag(BLOCK_SIG_TAG).raw(block_hash.as_bytes()).finish()
}

/// Proof that `receiver_id` got the message with `message_digest` from `sender_id`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeliveryReceipt {
    pub message_digest: Hash512,
    pub sender_id: String,
    pub receiver_id: String,
    pub receive_time_us: u64,
    pub receiver_signature: SignatureBytes,
}

impl DeliveryReceipt {
    fn signing_bytes(&self) -> Vec<u8> {
        Encoder::new()
            .tag(RECEIPT_TAG)
            .raw(self.message_digest.as_bytes())
            .str(&self.sender_id)
            .str(&self.receiver_id)
            .u64(self.receive_time_us)
            .finish()
    }
}

pub fn issue_receipt(
    receiver: &RobotIdentity,
    message_digest: Hash512,
    sender_id: &str,
    receive_time_us: u64,
) -> DeliveryReceipt {
    let mut receipt = DeliveryReceipt {
        message_digest,
        sender_id: sender_id.to_owned(),
        receiver_id: receiver.robot_id.clone(),
        receive_time_us,
        receiver_signature: SignatureBytes::ZERO,
    };
    receipt.receiver_signature = receiver.sign(&receipt.signing_bytes());
    receipt
}

pub fn verify_receipt(receipt: &DeliveryReceipt, acl: &Acl) -> bool {
    acl.get(&receipt.receiver_id)
        .is_some_and(|e| verify_signature(&e.pubkey, &receipt.signing_bytes(), &receipt.receiver_signature))
}

/// Receipts held by one node for the duration of a run.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuditLog {
    receipts: Vec<DeliveryReceipt>,
}

impl AuditLog {
    pub fn push(&mut self, receipt: DeliveryReceipt) {
        self.receipts.push(receipt);
    }

    pub fn receipts(&self) -> &[DeliveryReceipt] {
        &self.receipts
    }

    pub fn len(&self) -> usize {
        self.receipts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.receipts.is_empty()
    }

    pub fn count_for(&self, digest: &Hash512) -> usize {
        self.receipts.iter().filter(|r| &r.message_digest == digest).count()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.receipts {
            out.push_str(&serde_json::to_string(r).expect("receipt serializes"));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{LandmarkId, PanoramicView};

    fn ident(id: &str, role: Role, byte: u8) -> RobotIdentity {
        RobotIdentity::keygen(id, role, [byte; 32])
    }

    fn r1_tx() -> FovTransaction {
        FovTransaction::unsigned("R1", 1, 0, PanoramicView::empty())
    }

    #[test]
    fn zero_seed_public_key_is_golden() {
        // Cross-checked with an independent Ed25519 implementation, see
        // scripts/check_vectors.py.
        let id = ident("R1", Role::Member, 0);
        assert_eq!(
            hex::encode(id.public_key().0),
            "3b6a27bcceb6a42d62a3a8d02a6f0d73653215771de243a63ac048a18b59da29"
        );
    }

    #[test]
    fn rfc8032_test1_key_and_signature() {
        let seed = hex::decode("9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60").unwrap();
        let id = RobotIdentity::keygen("x", Role::Member, seed.try_into().unwrap());
        assert_eq!(
            hex::encode(id.public_key().0),
            "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a"
        );
        assert_eq!(
            hex::encode(id.sign(b"").0),
            "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b"
        );
    }

    #[test]
    fn keygen_is_deterministic_and_seed_sensitive() {
        assert_eq!(ident("R1", Role::Member, 1), ident("R1", Role::Member, 1));
        assert_ne!(ident("R1", Role::Member, 1).public_key(), ident("R1", Role::Member, 2).public_key());
    }

    #[test]
    fn sign_then_verify_accepts() {
        let r1 = ident("R1", Role::Member, 1);
        let acl = Acl::from_identities([&r1]).unwrap();
        let tx = sign_tx(&r1, r1_tx()).unwrap();
        assert_eq!(verify_tx(&tx, &acl), TxVerdict::Accept);
    }

    #[test]
    fn signing_for_another_robot_is_refused() {
        let r1 = ident("R1", Role::Member, 1);
        let mut tx = r1_tx();
        tx.robot_id = "R2".into();
        assert_eq!(
            sign_tx(&r1, tx),
            Err(AclError::IdMismatch {
                identity: "R1".into(),
                claimed: "R2".into()
            })
        );
    }

    #[test]
    fn forged_signature_is_bad_signature() {
        let r1 = ident("R1", Role::Member, 1);
        let acl = Acl::from_identities([&r1]).unwrap();
        let mut tx = r1_tx();
        tx.signature = SignatureBytes([0x5a; 64]);
        assert_eq!(verify_tx(&tx, &acl), TxVerdict::BadSignature);
    }

    #[test]
    fn key_outside_acl_is_unknown_id() {
        let r1 = ident("R1", Role::Member, 1);
        let mallory = ident("MALLORY", Role::Member, 9);
        let acl = Acl::from_identities([&r1]).unwrap();
        let tx = sign_tx(&mallory, FovTransaction::unsigned("MALLORY", 1, 0, PanoramicView::empty())).unwrap();
        assert_eq!(verify_tx(&tx, &acl), TxVerdict::UnknownId);
    }

    #[test]
    fn role_rule_table() {
        let member = ident("M", Role::Member, 1);
        let observer = ident("O", Role::Observer, 2);
        let acl = Acl::from_identities([&member, &observer]).unwrap();
        let sign = |who: &RobotIdentity| {
            sign_tx(who, FovTransaction::unsigned(who.robot_id.clone(), 1, 0, PanoramicView::empty())).unwrap()
        };
        // (robot, signer-is-right, expected)
        assert_eq!(verify_tx(&sign(&member), &acl), TxVerdict::Accept);
        assert_eq!(verify_tx(&sign(&observer), &acl), TxVerdict::WrongRole);
        let mut forged_observer = sign(&observer);
        forged_observer.signature = sign(&member).signature;
        assert_eq!(verify_tx(&forged_observer, &acl), TxVerdict::BadSignature);
    }

    #[test]
    fn tx_mutation_after_signing_breaks_signature() {
        let r1 = ident("R1", Role::Member, 1);
        let acl = Acl::from_identities([&r1]).unwrap();
        let mut tx = sign_tx(&r1, r1_tx()).unwrap();
        tx.view.insert(3, LandmarkId::new("L9").unwrap());
        assert_eq!(verify_tx(&tx, &acl), TxVerdict::BadSignature);
    }

    #[test]
    fn receipt_roundtrip_and_mutation() {
        let r2 = ident("R2", Role::Member, 2);
        let acl = Acl::from_identities([&r2]).unwrap();
        let mut receipt = issue_receipt(&r2, Hash512::of(b"msg"), "R1", 1234);
        assert!(verify_receipt(&receipt, &acl));
        receipt.receive_time_us += 1;
        assert!(!verify_receipt(&receipt, &acl));
    }

    #[test]
    fn acl_json_shape_and_digest_stability() {
        let r1 = ident("R1", Role::Member, 1);
        let r2 = ident("R2", Role::Observer, 2);
        let acl = Acl::from_identities([&r1, &r2]).unwrap();
        let json = serde_json::to_value(&acl).unwrap();
        assert_eq!(json["R2"]["role"], "observer");
        assert_eq!(json["R1"]["pubkey"].as_str().unwrap().len(), 64);
        let back: Acl = serde_json::from_value(json).unwrap();
        assert_eq!(back.digest(), acl.digest());
        assert_eq!(acl.members(), vec!["R1"]);
    }

    #[test]
    fn empty_acl_is_rejected() {
        assert_eq!(Acl::new(BTreeMap::new()), Err(AclError::Empty));
        assert!(serde_json::from_str::<Acl>("{}").is_err());
    }
}
