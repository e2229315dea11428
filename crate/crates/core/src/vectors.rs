//! Golden hash and signature vectors for cross-implementation checks.
//!
//! One record per line: `label<TAB>hex-bytes<TAB>hex-digest`.
//!
//! - `sha512:*`: the digest is SHA-512 of the bytes.
//! - `ed25519-pub:<key>`: the bytes are a 32-byte seed, the digest column
//!   holds its public key.
//! - `ed25519-sig:<key>:*`: the bytes are the signed message, the digest
//!   column holds the signature under `<key>`.
//!
//! The reference fixtures use the identities of the bundled `relay3`
//! scenario (seed 42, members R1..R3).

use crate::acl::{block_signing_bytes, sign_tx, Acl, RobotIdentity, Role};
use crate::chain::{mine_block, DEFAULT_DIFFICULTY};
use crate::codec::Hash512;
use crate::types::{canonical_tx_bytes, Block, FovTransaction, LandmarkId, PanoramicView};

pub const REFERENCE_SEED: u64 = 42;
pub const REFERENCE_ROBOTS: [&str; 3] = ["R1", "R2", "R3"];
pub const REFERENCE_BLOCK1_TIME_US: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vector {
    pub label: String,
    pub bytes: Vec<u8>,
    pub digest: Vec<u8>,
}

impl Vector {
    fn sha(label: impl Into<String>, bytes: Vec<u8>) -> Self {
        let digest = Hash512::of(&bytes).as_bytes().to_vec();
        Vector {
            label: label.into(),
            bytes,
            digest,
        }
    }

    pub fn line(&self) -> String {
        format!("{}\t{}\t{}", self.label, hex::encode(&self.bytes), hex::encode(&self.digest))
    }

    pub fn parse(line: &str) -> Option<Vector> {
        let mut parts = line.split('\t');
        let v = Vector {
            label: parts.next()?.to_owned(),
            bytes: hex::decode(parts.next()?).ok()?,
            digest: hex::decode(parts.next()?).ok()?,
        };
        parts.next().is_none().then_some(v)
    }
}

pub fn reference_identities() -> Vec<RobotIdentity> {
    REFERENCE_ROBOTS
        .iter()
        .map(|id| RobotIdentity::keygen(*id, Role::Member, RobotIdentity::derived_seed(REFERENCE_SEED, id)))
        .collect()
}

pub fn reference_acl() -> Acl {
    Acl::from_identities(&reference_identities()).expect("fixed ids")
}

pub fn reference_genesis() -> Block {
    Block::genesis(reference_acl().digest(), 0)
}

/// R1 reports L12 in sector 0.
pub fn reference_tx() -> FovTransaction {
    let mut view = PanoramicView::empty();
    view.insert(0, LandmarkId::new_unchecked("L12"));
    let r1 = &reference_identities()[0];
    sign_tx(r1, FovTransaction::unsigned("R1", 1, 0, view)).expect("own id")
}

/// Block 1 of the reference chain, proposed by R1 at default difficulty.
pub fn reference_block1() -> Block {
    let ids = reference_identities();
    mine_block(
        &reference_genesis().header,
        vec![reference_tx()],
        &ids[0],
        REFERENCE_BLOCK1_TIME_US,
        DEFAULT_DIFFICULTY,
    )
    .expect("difficulty within cap")
}

fn tx_bytes(tx: &FovTransaction, signed: bool) -> Vec<u8> {
    canonical_tx_bytes(tx, signed).expect("fixture ids are short")
}

pub fn golden_vectors() -> Vec<Vector> {
    let mut v = vec![Vector::sha("sha512:empty", Vec::new()), Vector::sha("sha512:abc", b"abc".to_vec())];

    let zero = RobotIdentity::keygen("R1", Role::Member, [0; 32]);
    let r1_unsigned = FovTransaction::unsigned("R1", 1, 0, PanoramicView::empty());
    v.push(Vector::sha("sha512:tx-signing-bytes:R1/1", tx_bytes(&r1_unsigned, false)));
    v.push(Vector::sha("sha512:tx-bytes:R1/1:zero-signature", tx_bytes(&r1_unsigned, true)));

    let mut l7 = PanoramicView::empty();
    l7.insert(0, LandmarkId::new_unchecked("L7"));
    let r2 = FovTransaction::unsigned("R2", 3, 1000, l7);
    v.push(Vector::sha("sha512:tx-signing-bytes:R2/3", tx_bytes(&r2, false)));

    v.push(Vector {
        label: "ed25519-pub:zero-seed".into(),
        bytes: vec![0; 32],
        digest: zero.public_key().0.to_vec(),
    });
    let r1_signed = sign_tx(&zero, r1_unsigned).expect("own id");
    let signing_digest = Hash512::of(&tx_bytes(&r1_signed, false));
    v.push(Vector {
        label: "ed25519-sig:zero-seed:tx R1/1".into(),
        bytes: signing_digest.as_bytes().to_vec(),
        digest: r1_signed.signature.0.to_vec(),
    });
    v.push(Vector::sha("sha512:tx-bytes:R1/1:zero-seed-signed", tx_bytes(&r1_signed, true)));

    let ids = reference_identities();
    for id in &ids {
        v.push(Vector {
            label: format!("ed25519-pub:reference/{}", id.robot_id),
            bytes: id.private_key().to_vec(),
            digest: id.public_key().0.to_vec(),
        });
    }
    v.push(Vector::sha("sha512:acl:reference", reference_acl().canonical_bytes()));
    v.push(Vector::sha("sha512:block-header:reference/0", reference_genesis().header.canonical_bytes()));

    let tx = reference_tx();
    v.push(Vector {
        label: "ed25519-sig:reference/R1:tx R1/1".into(),
        bytes: Hash512::of(&tx_bytes(&tx, false)).as_bytes().to_vec(),
        digest: tx.signature.0.to_vec(),
    });
    v.push(Vector::sha("sha512:tx-bytes:reference/R1/1", tx_bytes(&tx, true)));
    let block = reference_block1();
    let concatenated: Vec<u8> = block
        .txs
        .iter()
        .flat_map(|t| Hash512::of(&tx_bytes(t, true)).as_bytes().to_vec())
        .collect();
    v.push(Vector::sha("sha512:body:reference/1", concatenated));
    v.push(Vector::sha("sha512:block-header:reference/1", block.header.canonical_bytes()));
    v.push(Vector {
        label: "ed25519-sig:reference/R1:block 1".into(),
        bytes: block_signing_bytes(&block.hash()),
        digest: block.proposer_signature.0.to_vec(),
    });
    v
}

pub fn golden_file() -> String {
    let mut s = String::new();
    for v in golden_vectors() {
        s.push_str(&v.line());
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acl::verify_signature;
    use crate::codec::PublicKeyBytes;
    use crate::types::body_digest;

    #[test]
    fn sha512_known_answers() {
        let v = golden_vectors();
        // FIPS 180-2 "abc"
        assert!(hex::encode(&v[1].digest).starts_with("ddaf35a193617aba"));
        assert!(hex::encode(&v[0].digest).starts_with("cf83e1357eefb8bd"));
    }

    #[test]
    fn file_is_stable_and_parses() {
        let a = golden_file();
        assert_eq!(a, golden_file());
        let parsed: Vec<Vector> = a.lines().map(|l| Vector::parse(l).unwrap()).collect();
        assert!(parsed.len() >= 10);
        assert_eq!(parsed, golden_vectors());
        let labels: std::collections::BTreeSet<_> = parsed.iter().map(|v| v.label.clone()).collect();
        assert_eq!(labels.len(), parsed.len());
    }

    #[test]
    fn layouts_match_the_worked_examples() {
        let v = golden_vectors();
        let get = |l: &str| v.iter().find(|x| x.label == l).unwrap();
        assert_eq!(get("sha512:tx-signing-bytes:R1/1").bytes.len(), 51);
        assert_eq!(get("sha512:tx-bytes:R1/1:zero-signature").bytes.len(), 115);
        // hand-assembled R2/3 layout
        let mut want = b"VHTX1".to_vec();
        want.extend([0, 0, 0, 2]);
        want.extend(b"R2");
        want.extend(3u64.to_be_bytes());
        want.extend(1000u64.to_be_bytes());
        want.extend([0, 0, 0, 1, 0, 0, 0, 2]);
        want.extend(b"L7");
        for _ in 0..5 {
            want.extend([0, 0, 0, 0]);
        }
        assert_eq!(get("sha512:tx-signing-bytes:R2/3").bytes, want);
    }

    #[test]
    fn signatures_verify() {
        for v in golden_vectors().iter().filter(|v| v.label.starts_with("ed25519-sig:")) {
            let key = v.label.split(':').nth(1).unwrap();
            let pubv = golden_vectors().into_iter().find(|p| p.label == format!("ed25519-pub:{key}")).unwrap();
            let pk = PublicKeyBytes(pubv.digest.try_into().unwrap());
            let sig = crate::codec::SignatureBytes(v.digest.clone().try_into().unwrap());
            assert!(verify_signature(&pk, &v.bytes, &sig), "{}", v.label);
        }
    }

    #[test]
    fn reference_block_links_to_genesis_with_minimal_nonce() {
        let g = reference_genesis();
        let b = reference_block1();
        assert_eq!(b.header.prev_hash, g.hash());
        assert_eq!(b.header.body_digest, body_digest(&b.txs).unwrap());
        assert!(b.hash().leading_zero_bits() >= DEFAULT_DIFFICULTY);
        for n in 0..b.header.nonce {
            let mut h = b.header.clone();
            h.nonce = n;
            assert!(crate::types::block_hash(&h).leading_zero_bits() < DEFAULT_DIFFICULTY);
        }
    }
}
