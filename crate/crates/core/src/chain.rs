//! Proof-of-work sealing, block and chain validation, and fork choice.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::Serialize;

use crate::acl::{block_signing_bytes, verify_signature, verify_tx, Acl, RobotIdentity, TxVerdict};
use crate::codec::{Hash512, SignatureBytes};
use crate::error::ChainError;
use crate::types::{block_hash, body_digest, Block, BlockHeader, FovTransaction, GENESIS_PROPOSER};

/// Upper bound on configurable difficulty, in leading zero bits.
pub const MAX_DIFFICULTY: u32 = 32;

/// Default "lightweight" difficulty.
pub const DEFAULT_DIFFICULTY: u32 = 8;

/// What a chain must satisfy: the genesis ACL and the fixed difficulty of
/// every non-genesis block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainRules {
    pub acl: Acl,
    pub difficulty: u32,
    /// Optional cap on transactions per robot in one block.
    pub max_txs_per_robot: Option<u32>,
}

impl ChainRules {
    pub fn new(acl: Acl, difficulty: u32) -> Self {
        ChainRules {
            acl,
            difficulty,
            max_txs_per_robot: None,
        }
    }

    pub fn with_robot_quota(mut self, max_txs_per_robot: u32) -> Self {
        self.max_txs_per_robot = Some(max_txs_per_robot);
        self
    }
}

/// Highest committed sequence number per robot.
pub trait CommittedSeqs {
    fn committed_seq(&self, robot_id: &str) -> Option<u64>;
}

impl CommittedSeqs for BTreeMap<String, u64> {
    fn committed_seq(&self, robot_id: &str) -> Option<u64> {
        self.get(robot_id).copied()
    }
}

impl CommittedSeqs for HashMap<String, u64> {
    fn committed_seq(&self, robot_id: &str) -> Option<u64> {
        self.get(robot_id).copied()
    }
}

/// The first check a block failed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum BlockFault {
    IndexMismatch { expected: u64, found: u64 },
    PrevHashMismatch,
    ProposerNotMember { proposer: String },
    DifficultyMismatch { expected: u32, found: u32 },
    InsufficientWork { required: u32, found: u32 },
    BadProposerSignature,
    BodyDigestMismatch,
    TxRejected { position: usize, robot_id: String, verdict: TxVerdict },
    SequenceViolation { position: usize, robot_id: String, seq: u64, floor: u64 },
    RobotQuotaExceeded { robot_id: String, limit: u32 },
    Encoding { detail: String },
    GenesisMismatch { detail: String },
    EmptyChain,
}

impl BlockFault {
    /// Short stable name of the failed check.
    pub fn check(&self) -> &'static str {
        match self {
            BlockFault::IndexMismatch { .. } => "index",
            BlockFault::PrevHashMismatch => "prev_hash",
            BlockFault::ProposerNotMember { .. } => "proposer",
            BlockFault::DifficultyMismatch { .. } => "difficulty",
            BlockFault::InsufficientWork { .. } => "pow",
            BlockFault::BadProposerSignature => "proposer_signature",
            BlockFault::BodyDigestMismatch => "body_digest",
            BlockFault::TxRejected { .. } => "tx_signature",
            BlockFault::SequenceViolation { .. } => "sequence",
            BlockFault::RobotQuotaExceeded { .. } => "robot_quota",
            BlockFault::Encoding { .. } => "encoding",
            BlockFault::GenesisMismatch { .. } => "genesis",
            BlockFault::EmptyChain => "empty",
        }
    }
}

impl fmt::Display for BlockFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockFault::IndexMismatch { expected, found } => write!(f, "index mismatch: expected {expected}, found {found}"),
            BlockFault::PrevHashMismatch => f.write_str("prev_hash mismatch"),
            BlockFault::ProposerNotMember { proposer } => write!(f, "proposer `{proposer}` is not an ACL member"),
            BlockFault::DifficultyMismatch { expected, found } => write!(f, "difficulty mismatch: expected {expected}, found {found}"),
            BlockFault::InsufficientWork { required, found } => write!(f, "proof of work too weak: {found} < {required} leading zero bits"),
            BlockFault::BadProposerSignature => f.write_str("bad proposer signature"),
            BlockFault::BodyDigestMismatch => f.write_str("body_digest mismatch"),
            BlockFault::TxRejected { position, robot_id, verdict } => write!(f, "tx {position} from `{robot_id}` rejected: {verdict}"),
            BlockFault::SequenceViolation { position, robot_id, seq, floor } => {
                write!(f, "sequence violation: tx {position} from `{robot_id}` has seq {seq}, must exceed {floor}")
            }
            BlockFault::RobotQuotaExceeded { robot_id, limit } => write!(f, "more than {limit} txs from `{robot_id}` in one block"),
            BlockFault::Encoding { detail } => write!(f, "encoding error: {detail}"),
            BlockFault::GenesisMismatch { detail } => write!(f, "genesis mismatch: {detail}"),
            BlockFault::EmptyChain => f.write_str("chain has no genesis block"),
        }
    }
}

/// A chain verdict failure: which block, and why.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChainFault {
    pub index: usize,
    pub fault: BlockFault,
}

impl fmt::Display for ChainFault {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "block {}: {}", self.index, self.fault)
    }
}

/// Seals a block on top of `parent`. The nonce search starts at zero and
/// increments, so the result is reproducible and carries the smallest
/// admissible nonce.
pub fn mine_block(
    parent: &BlockHeader,
    txs: Vec<FovTransaction>,
    proposer: &RobotIdentity,
    timestamp_us: u64,
    difficulty: u32,
) -> Result<Block, ChainError> {
    if difficulty > MAX_DIFFICULTY {
        return Err(ChainError::DifficultyTooHigh {
            requested: difficulty,
            cap: MAX_DIFFICULTY,
        });
    }
    let mut header = BlockHeader {
        index: parent.index + 1,
        prev_hash: block_hash(parent),
        body_digest: body_digest(&txs)?,
        timestamp_us,
        proposer_id: proposer.robot_id.clone(),
        difficulty,
        nonce: 0,
    };
    let hash = loop {
        let hash = block_hash(&header);
        if hash.leading_zero_bits() >= difficulty {
            break hash;
        }
        header.nonce = header
            .nonce
            .checked_add(1)
            .ok_or(ChainError::NonceExhausted(difficulty))?;
    };
    let proposer_signature = proposer.sign(&block_signing_bytes(&hash));
    Ok(Block {
        header,
        txs,
        proposer_signature,
    })
}

/// Validates `block` as the child of `parent`. Checks run in a fixed order
/// and the first failure is reported.
pub fn verify_block(
    block: &Block,
    parent: &BlockHeader,
    rules: &ChainRules,
    committed: &impl CommittedSeqs,
) -> Result<(), BlockFault> {
    let header = &block.header;
    if header.index != parent.index + 1 {
        return Err(BlockFault::IndexMismatch {
            expected: parent.index + 1,
            found: header.index,
        });
    }
    if header.prev_hash != block_hash(parent) {
        return Err(BlockFault::PrevHashMismatch);
    }
    let Some(entry) = rules.acl.get(&header.proposer_id).filter(|_| rules.acl.is_member(&header.proposer_id)) else {
        return Err(BlockFault::ProposerNotMember {
            proposer: header.proposer_id.clone(),
        });
    };
    if header.difficulty != rules.difficulty {
        return Err(BlockFault::DifficultyMismatch {
            expected: rules.difficulty,
            found: header.difficulty,
        });
    }
    let hash = block_hash(header);
    let work = hash.leading_zero_bits();
    if work < header.difficulty {
        return Err(BlockFault::InsufficientWork {
            required: header.difficulty,
            found: work,
        });
    }
    if !verify_signature(&entry.pubkey, &block_signing_bytes(&hash), &block.proposer_signature) {
        return Err(BlockFault::BadProposerSignature);
    }
    match body_digest(&block.txs) {
        Ok(d) if d == header.body_digest => {}
        Ok(_) => return Err(BlockFault::BodyDigestMismatch),
        Err(e) => return Err(BlockFault::Encoding { detail: e.to_string() }),
    }
    check_txs(&block.txs, rules, committed)
}

fn check_txs(txs: &[FovTransaction], rules: &ChainRules, committed: &impl CommittedSeqs) -> Result<(), BlockFault> {
    let mut in_block: HashMap<&str, u64> = HashMap::new();
    let mut per_robot: HashMap<&str, u32> = HashMap::new();
    for (position, tx) in txs.iter().enumerate() {
        if let Some(limit) = rules.max_txs_per_robot {
            let n = per_robot.entry(&tx.robot_id).or_default();
            *n += 1;
            if *n > limit {
                return Err(BlockFault::RobotQuotaExceeded {
                    robot_id: tx.robot_id.clone(),
                    limit,
                });
            }
        }
        let verdict = verify_tx(tx, &rules.acl);
        if !verdict.is_accept() {
            return Err(BlockFault::TxRejected {
                position,
                robot_id: tx.robot_id.clone(),
                verdict,
            });
        }
        let floor = in_block
            .get(tx.robot_id.as_str())
            .copied()
            .or_else(|| committed.committed_seq(&tx.robot_id))
            .unwrap_or(0);
        if tx.seq <= floor {
            return Err(BlockFault::SequenceViolation {
                position,
                robot_id: tx.robot_id.clone(),
                seq: tx.seq,
                floor,
            });
        }
        in_block.insert(&tx.robot_id, tx.seq);
    }
    Ok(())
}

/// Checks that `block` is the genesis block pinned to `rules.acl`.
pub fn verify_genesis(block: &Block, rules: &ChainRules) -> Result<(), BlockFault> {
    let h = &block.header;
    let detail = if h.index != 0 {
        "index is not 0"
    } else if h.prev_hash != Hash512::ZERO {
        "prev_hash is not zero"
    } else if h.proposer_id != GENESIS_PROPOSER {
        "proposer is not GENESIS"
    } else if h.difficulty != 0 || h.nonce != 0 {
        "difficulty and nonce must be 0"
    } else if h.body_digest != rules.acl.digest() {
        "ACL digest does not match"
    } else if !block.txs.is_empty() {
        "genesis carries transactions"
    } else if block.proposer_signature != SignatureBytes::ZERO {
        "genesis carries a signature"
    } else {
        return Ok(());
    };
    Err(BlockFault::GenesisMismatch { detail: detail.into() })
}

/// Folds [`verify_block`] over the chain from genesis.
pub fn verify_chain(blocks: &[Block], rules: &ChainRules) -> Result<(), ChainFault> {
    let Some(genesis) = blocks.first() else {
        return Err(ChainFault {
            index: 0,
            fault: BlockFault::EmptyChain,
        });
    };
    verify_genesis(genesis, rules).map_err(|fault| ChainFault { index: 0, fault })?;
    let mut committed: HashMap<String, u64> = HashMap::new();
    for (i, pair) in blocks.windows(2).enumerate() {
        let (parent, block) = (&pair[0], &pair[1]);
        verify_block(block, &parent.header, rules, &committed).map_err(|fault| ChainFault { index: i + 1, fault })?;
        for tx in &block.txs {
            committed.insert(tx.robot_id.clone(), tx.seq);
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForkChoice {
    A,
    B,
}

/// Total order on valid chains: longer wins, then the numerically smaller
/// tip hash. Returns `Greater` when `a` is preferred.
pub fn compare_valid_chains(a: &[Block], b: &[Block]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        let ta = a.last().map(Block::hash).unwrap_or(Hash512::ZERO);
        let tb = b.last().map(Block::hash).unwrap_or(Hash512::ZERO);
        tb.cmp(&ta)
    })
}

/// Longest valid chain wins; an invalid chain never wins; equal lengths go to
/// the smaller tip hash (big-endian).
pub fn fork_choice(a: &[Block], b: &[Block], rules: &ChainRules) -> Result<ForkChoice, ChainError> {
    match (verify_chain(a, rules), verify_chain(b, rules)) {
        (Ok(()), Ok(())) => Ok(if compare_valid_chains(a, b) == Ordering::Less {
            ForkChoice::B
        } else {
            ForkChoice::A
        }),
        (Ok(()), Err(_)) => Ok(ForkChoice::A),
        (Err(_), Ok(())) => Ok(ForkChoice::B),
        (Err(ea), Err(eb)) => Err(ChainError::NoValidChain {
            a: ea.to_string(),
            b: eb.to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acl::{sign_tx, Role};
    use crate::types::{LandmarkId, PanoramicView};

    struct Fixture {
        ids: Vec<RobotIdentity>,
        rules: ChainRules,
        genesis: Block,
    }

    fn fixture(difficulty: u32) -> Fixture {
        let ids: Vec<_> = ["R1", "R2", "R3"]
            .iter()
            .enumerate()
            .map(|(i, id)| RobotIdentity::keygen(*id, Role::Member, [i as u8 + 1; 32]))
            .collect();
        let acl = Acl::from_identities(&ids).unwrap();
        let genesis = Block::genesis(acl.digest(), 0);
        Fixture {
            ids,
            rules: ChainRules::new(acl, difficulty),
            genesis,
        }
    }

    fn view(ids: &[&str]) -> PanoramicView {
        let mut v = PanoramicView::empty();
        for (i, id) in ids.iter().enumerate() {
            v.insert(i % 6, LandmarkId::new(*id).unwrap());
        }
        v
    }

    fn tx(who: &RobotIdentity, seq: u64, lms: &[&str]) -> FovTransaction {
        sign_tx(who, FovTransaction::unsigned(who.robot_id.clone(), seq, seq * 1000, view(lms))).unwrap()
    }

    fn no_seqs() -> BTreeMap<String, u64> {
        BTreeMap::new()
    }

    #[test]
    fn zero_difficulty_accepts_first_nonce() {
        let f = fixture(0);
        let b = mine_block(&f.genesis.header, vec![], &f.ids[0], 1, 0).unwrap();
        assert_eq!(b.header.nonce, 0);
        assert_eq!(verify_block(&b, &f.genesis.header, &f.rules, &no_seqs()), Ok(()));
    }

    #[test]
    fn mined_nonce_is_smallest_admissible() {
        let f = fixture(8);
        let b = mine_block(&f.genesis.header, vec![tx(&f.ids[0], 1, &["L1"])], &f.ids[0], 1, 8).unwrap();
        assert!(b.hash().leading_zero_bits() >= 8);
        let mut h = b.header.clone();
        for n in 0..b.header.nonce {
            h.nonce = n;
            assert!(block_hash(&h).leading_zero_bits() < 8, "nonce {n} already admissible");
        }
    }

    #[test]
    fn difficulty_above_cap_is_refused() {
        let f = fixture(8);
        assert_eq!(
            mine_block(&f.genesis.header, vec![], &f.ids[0], 1, 33),
            Err(ChainError::DifficultyTooHigh { requested: 33, cap: 32 })
        );
    }

    #[test]
    fn tampered_landmark_is_body_digest_mismatch() {
        let f = fixture(8);
        let mut b = mine_block(&f.genesis.header, vec![tx(&f.ids[1], 1, &["L1", "L2"])], &f.ids[0], 1, 8).unwrap();
        b.txs[0].view.insert(4, LandmarkId::new("FAKE").unwrap());
        assert_eq!(
            verify_block(&b, &f.genesis.header, &f.rules, &no_seqs()),
            Err(BlockFault::BodyDigestMismatch)
        );
        assert_eq!(BlockFault::BodyDigestMismatch.to_string(), "body_digest mismatch");
    }

    #[test]
    fn replayed_seq_is_sequence_violation() {
        let f = fixture(4);
        let b = mine_block(&f.genesis.header, vec![tx(&f.ids[1], 5, &["L1"])], &f.ids[0], 1, 4).unwrap();
        let committed: BTreeMap<String, u64> = [("R2".to_string(), 5)].into();
        assert!(matches!(
            verify_block(&b, &f.genesis.header, &f.rules, &committed),
            Err(BlockFault::SequenceViolation { seq: 5, floor: 5, .. })
        ));
    }

    #[test]
    fn in_block_seqs_must_increase() {
        let f = fixture(0);
        let txs = vec![tx(&f.ids[1], 3, &["A"]), tx(&f.ids[1], 3, &["B"])];
        let b = mine_block(&f.genesis.header, txs, &f.ids[0], 1, 0).unwrap();
        assert!(matches!(
            verify_block(&b, &f.genesis.header, &f.rules, &no_seqs()),
            Err(BlockFault::SequenceViolation { position: 1, .. })
        ));
    }

    #[test]
    fn robot_quota_is_enforced_when_configured() {
        let mut f = fixture(0);
        let txs: Vec<_> = (1..=3).map(|s| tx(&f.ids[1], s, &["A"])).collect();
        let b = mine_block(&f.genesis.header, txs, &f.ids[0], 1, 0).unwrap();
        assert_eq!(verify_block(&b, &f.genesis.header, &f.rules, &no_seqs()), Ok(()));
        f.rules = f.rules.clone().with_robot_quota(2);
        assert!(matches!(
            verify_block(&b, &f.genesis.header, &f.rules, &no_seqs()),
            Err(BlockFault::RobotQuotaExceeded { limit: 2, .. })
        ));
    }

    #[test]
    fn outsider_proposer_and_wrong_difficulty_are_rejected() {
        let f = fixture(4);
        let outsider = RobotIdentity::keygen("X", Role::Member, [77; 32]);
        let b = mine_block(&f.genesis.header, vec![], &outsider, 1, 4).unwrap();
        assert!(matches!(
            verify_block(&b, &f.genesis.header, &f.rules, &no_seqs()),
            Err(BlockFault::ProposerNotMember { .. })
        ));
        let b = mine_block(&f.genesis.header, vec![], &f.ids[0], 1, 2).unwrap();
        assert_eq!(
            verify_block(&b, &f.genesis.header, &f.rules, &no_seqs()),
            Err(BlockFault::DifficultyMismatch { expected: 4, found: 2 })
        );
    }

    #[test]
    fn genesis_only_chain_is_valid_and_foreign_acl_is_not() {
        let f = fixture(8);
        assert_eq!(verify_chain(std::slice::from_ref(&f.genesis), &f.rules), Ok(()));
        let other = Block::genesis(Hash512::of(b"other acl"), 0);
        assert_eq!(verify_chain(&[other], &f.rules).unwrap_err().fault.check(), "genesis");
        assert_eq!(verify_chain(&[], &f.rules).unwrap_err().fault, BlockFault::EmptyChain);
    }

    fn grow(f: &Fixture, base: &[Block], n: usize, proposer: usize, salt: u64) -> Vec<Block> {
        let mut chain = base.to_vec();
        for _ in 0..n {
            let parent = chain.last().unwrap().header.clone();
            let b = mine_block(&parent, vec![], &f.ids[proposer], parent.index * 10 + salt, f.rules.difficulty).unwrap();
            chain.push(b);
        }
        chain
    }

    #[test]
    fn fork_choice_prefers_longer_then_smaller_tip() {
        let f = fixture(4);
        let base = vec![f.genesis.clone()];
        let five = grow(&f, &base, 4, 0, 1);
        let three = grow(&f, &base, 2, 1, 2);
        assert_eq!(fork_choice(&five, &three, &f.rules), Ok(ForkChoice::A));
        assert_eq!(fork_choice(&three, &five, &f.rules), Ok(ForkChoice::B));

        let mut invalid = grow(&f, &base, 8, 0, 3);
        invalid[3].header.nonce ^= 1;
        let two = grow(&f, &base, 1, 2, 4);
        assert_eq!(fork_choice(&invalid, &two, &f.rules), Ok(ForkChoice::B));

        let trunk = grow(&f, &base, 2, 0, 5);
        let x = grow(&f, &trunk, 1, 1, 6);
        let y = grow(&f, &trunk, 1, 2, 7);
        let expect_x = x.last().unwrap().hash().0 < y.last().unwrap().hash().0;
        let chosen = fork_choice(&x, &y, &f.rules).unwrap();
        assert_eq!(chosen == ForkChoice::A, expect_x);
        // antisymmetry
        let flipped = fork_choice(&y, &x, &f.rules).unwrap();
        assert_ne!(chosen, flipped);
    }

    #[test]
    fn both_invalid_is_an_error() {
        let f = fixture(4);
        let mut a = grow(&f, std::slice::from_ref(&f.genesis), 2, 0, 1);
        a[1].txs.push(tx(&f.ids[0], 1, &["x"]));
        let b: Vec<Block> = Vec::new();
        assert!(matches!(fork_choice(&a, &b, &f.rules), Err(ChainError::NoValidChain { .. })));
    }
}
