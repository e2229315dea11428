//! A validated chain plus the latest-view index.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::chain::{verify_block, verify_chain, verify_genesis, BlockFault, ChainFault, ChainRules, CommittedSeqs};
use crate::codec::Hash512;
use crate::types::{Block, BlockHeader, PanoramicView};

/// Most recent committed view of one robot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatestView {
    pub seq: u64,
    pub timestamp_us: u64,
    pub view: PanoramicView,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerState {
    blocks: Vec<Block>,
    latest_views: HashMap<String, LatestView>,
    acl_digest: Hash512,
    encoded_bytes: usize,
}

impl CommittedSeqs for LedgerState {
    fn committed_seq(&self, robot_id: &str) -> Option<u64> {
        self.latest_views.get(robot_id).map(|v| v.seq)
    }
}

impl LedgerState {
    /// A ledger holding only the genesis block for `rules.acl`.
    pub fn new(rules: &ChainRules, genesis_time_us: u64) -> Self {
        let genesis = Block::genesis(rules.acl.digest(), genesis_time_us);
        LedgerState {
            encoded_bytes: genesis.encoded_len(),
            blocks: vec![genesis],
            latest_views: HashMap::new(),
            acl_digest: rules.acl.digest(),
        }
    }

    /// Rebuilds a ledger from a full chain, validating every block.
    pub fn from_chain(blocks: &[Block], rules: &ChainRules) -> Result<Self, ChainFault> {
        let genesis = blocks.first().ok_or(ChainFault {
            index: 0,
            fault: BlockFault::EmptyChain,
        })?;
        verify_genesis(genesis, rules).map_err(|fault| ChainFault { index: 0, fault })?;
        let mut state = LedgerState {
            encoded_bytes: genesis.encoded_len(),
            blocks: vec![genesis.clone()],
            latest_views: HashMap::new(),
            acl_digest: genesis.header.body_digest,
        };
        for (i, b) in blocks.iter().enumerate().skip(1) {
            state
                .apply_block(b.clone(), rules)
                .map_err(|fault| ChainFault { index: i, fault })?;
        }
        Ok(state)
    }

    /// Verifies `block` against the tip and appends it. On rejection the
    /// state is unchanged. Cost does not depend on chain length.
    pub fn apply_block(&mut self, block: Block, rules: &ChainRules) -> Result<(), BlockFault> {
        verify_block(&block, &self.tip().header, rules, self)?;
        self.index_block(&block);
        self.encoded_bytes += block.encoded_len();
        self.blocks.push(block);
        Ok(())
    }

    fn index_block(&mut self, block: &Block) {
        for tx in &block.txs {
            match self.latest_views.get_mut(&tx.robot_id) {
                Some(v) if v.seq >= tx.seq => {}
                Some(v) => {
                    v.seq = tx.seq;
                    v.timestamp_us = tx.timestamp_us;
                    v.view = tx.view.clone();
                }
                None => {
                    self.latest_views.insert(
                        tx.robot_id.clone(),
                        LatestView {
                            seq: tx.seq,
                            timestamp_us: tx.timestamp_us,
                            view: tx.view.clone(),
                        },
                    );
                }
            }
        }
    }

    pub fn latest_view(&self, robot_id: &str) -> Option<&LatestView> {
        self.latest_views.get(robot_id)
    }

    /// Latest views keyed by robot id, in id order.
    pub fn view_map(&self) -> BTreeMap<String, PanoramicView> {
        self.latest_views
            .iter()
            .map(|(id, v)| (id.clone(), v.view.clone()))
            .collect()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("ledger always holds genesis")
    }

    pub fn tip_hash(&self) -> Hash512 {
        self.tip().hash()
    }

    pub fn genesis(&self) -> &BlockHeader {
        &self.blocks[0].header
    }

    /// Number of blocks including genesis.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn acl_digest(&self) -> Hash512 {
        self.acl_digest
    }

    /// Canonical bytes held by this ledger.
    pub fn encoded_bytes(&self) -> usize {
        self.encoded_bytes
    }

    pub fn contains_block(&self, hash: &Hash512) -> bool {
        self.blocks.iter().rev().any(|b| &b.hash() == hash)
    }

    pub fn position_of(&self, hash: &Hash512) -> Option<usize> {
        self.blocks.iter().position(|b| &b.hash() == hash)
    }

    pub fn tx_count(&self) -> usize {
        self.blocks.iter().map(|b| b.txs.len()).sum()
    }

    /// One JSON object per block, one block per line.
    pub fn to_jsonl(&self) -> String {
        blocks_to_jsonl(&self.blocks)
    }
}

pub fn blocks_to_jsonl(blocks: &[Block]) -> String {
    let mut out = String::new();
    for b in blocks {
        out.push_str(&serde_json::to_string(b).expect("block serializes"));
        out.push('\n');
    }
    out
}

/// Parses a ledger export. Errors carry the 1-based line number.
pub fn blocks_from_jsonl(text: &str) -> Result<Vec<Block>, (usize, serde_json::Error)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| (i + 1, e)))
        .collect()
}

/// Re-verifies an exported chain.
pub fn verify_export(text: &str, rules: &ChainRules) -> Result<Result<(), ChainFault>, (usize, serde_json::Error)> {
    let blocks = blocks_from_jsonl(text)?;
    Ok(verify_chain(&blocks, rules))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acl::{sign_tx, Acl, RobotIdentity, Role};
    use crate::chain::mine_block;
    use crate::types::{FovTransaction, LandmarkId};

    fn setup() -> (Vec<RobotIdentity>, ChainRules) {
        let ids: Vec<_> = ["R1", "R2"]
            .iter()
            .enumerate()
            .map(|(i, id)| RobotIdentity::keygen(*id, Role::Member, [i as u8 + 10; 32]))
            .collect();
        let acl = Acl::from_identities(&ids).unwrap();
        (ids, ChainRules::new(acl, 2))
    }

    fn signed(who: &RobotIdentity, seq: u64, lm: &str) -> FovTransaction {
        let mut v = PanoramicView::empty();
        v.insert(0, LandmarkId::new(lm).unwrap());
        sign_tx(who, FovTransaction::unsigned(who.robot_id.clone(), seq, seq, v)).unwrap()
    }

    fn commit(state: &mut LedgerState, rules: &ChainRules, proposer: &RobotIdentity, txs: Vec<FovTransaction>) {
        let b = mine_block(&state.tip().header, txs, proposer, state.len() as u64, rules.difficulty).unwrap();
        state.apply_block(b, rules).unwrap();
    }

    #[test]
    fn empty_block_leaves_views_unchanged() {
        let (ids, rules) = setup();
        let mut s = LedgerState::new(&rules, 0);
        commit(&mut s, &rules, &ids[0], vec![signed(&ids[1], 1, "A")]);
        let before = s.view_map();
        commit(&mut s, &rules, &ids[0], vec![]);
        assert_eq!(s.view_map(), before);
        assert_eq!(s.len(), 3);
    }

    #[test]
    fn highest_seq_wins_within_a_block() {
        let (ids, rules) = setup();
        let mut s = LedgerState::new(&rules, 0);
        commit(&mut s, &rules, &ids[0], vec![signed(&ids[1], 7, "A")]);
        assert_eq!(s.latest_view("R2").unwrap().seq, 7);
        commit(&mut s, &rules, &ids[0], vec![signed(&ids[1], 8, "B"), signed(&ids[1], 9, "C")]);
        let v = s.latest_view("R2").unwrap();
        assert_eq!(v.seq, 9);
        assert!(v.view.contains(&LandmarkId::new("C").unwrap()));
        assert!(s.latest_view("R1").is_none());
    }

    #[test]
    fn rejected_block_leaves_state_unchanged() {
        let (ids, rules) = setup();
        let mut s = LedgerState::new(&rules, 0);
        commit(&mut s, &rules, &ids[0], vec![signed(&ids[1], 3, "A")]);
        let snapshot = s.clone();
        let replay = mine_block(&s.tip().header, vec![signed(&ids[1], 3, "A")], &ids[0], 9, rules.difficulty).unwrap();
        assert!(s.apply_block(replay, &rules).is_err());
        assert_eq!(s, snapshot);
    }

    #[test]
    fn export_roundtrip_and_from_chain() {
        let (ids, rules) = setup();
        let mut s = LedgerState::new(&rules, 0);
        for seq in 1..=4 {
            commit(&mut s, &rules, &ids[(seq % 2) as usize], vec![signed(&ids[0], seq, "X")]);
        }
        let text = s.to_jsonl();
        assert_eq!(text.lines().count(), 5);
        assert!(text.lines().next().unwrap().contains("\"prev_hash\":\"0000"));
        let blocks = blocks_from_jsonl(&text).unwrap();
        let rebuilt = LedgerState::from_chain(&blocks, &rules).unwrap();
        assert_eq!(rebuilt, s);
        assert_eq!(verify_export(&text, &rules).unwrap(), Ok(()));
        assert_eq!(blocks_from_jsonl("{\n").unwrap_err().0, 1);
    }
}
