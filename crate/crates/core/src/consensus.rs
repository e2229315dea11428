//! Per-node consensus state machine.
//!
//! A transaction is first *verified* at the submitting robot's own node and
//! then *validated* by every other node when the broadcast arrives. Members
//! take turns proposing (round-robin over sorted member ids); a proposal
//! commits once a strict majority of members has signed a vote for it.
//! Votes only gate progress: a node never applies a block it has not
//! validated itself, whatever the vote count. Nodes that fall behind or
//! diverge pull full chains and adopt the longest valid one.
//!
//! Every handler is `(state, input, now) -> outbound messages`; nothing here
//! reads a clock or spawns work, so the simulator fully controls ordering.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::acl::{issue_receipt, verify_signature, verify_tx, AuditLog, RobotIdentity, TxVerdict};
use crate::chain::{compare_valid_chains, mine_block, verify_block, ChainRules, CommittedSeqs, DEFAULT_DIFFICULTY};
use crate::codec::{Encoder, Hash512, SignatureBytes};
use crate::ledger::LedgerState;
use crate::types::{tx_digest, Block, FovTransaction};

const VOTE_TAG: &[u8] = b"VHVT1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusParams {
    pub difficulty: u32,
    /// Proposal cadence.
    pub block_interval_us: u64,
    /// A block commits once votes exceed `quorum × members`.
    pub quorum: f64,
    pub max_txs_per_robot_per_block: u32,
    /// Mempool admission limit per robot (the flood guard).
    pub max_pending_per_robot: u32,
    pub round_timeout_us: u64,
    /// With an empty mempool, only every k-th round proposes (an empty heartbeat block).
    pub heartbeat_every: u64,
}

impl Default for ConsensusParams {
    fn default() -> Self {
        ConsensusParams {
            difficulty: DEFAULT_DIFFICULTY,
            block_interval_us: 1_000_000,
            quorum: 0.5,
            max_txs_per_robot_per_block: 4,
            max_pending_per_robot: 4,
            round_timeout_us: 3_000_000,
            heartbeat_every: 8,
        }
    }
}

impl ConsensusParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.5..=1.0).contains(&self.quorum) {
            return Err(format!("quorum {} must lie in [0.5, 1]", self.quorum));
        }
        if self.block_interval_us == 0 {
            return Err("block_interval_us must be positive".into());
        }
        if self.round_timeout_us == 0 || self.heartbeat_every == 0 {
            return Err("round_timeout_us and heartbeat_every must be positive".into());
        }
        if self.max_txs_per_robot_per_block == 0 || self.max_pending_per_robot == 0 {
            return Err("per-robot limits must be positive".into());
        }
        if self.difficulty > crate::chain::MAX_DIFFICULTY {
            return Err(format!("difficulty {} exceeds the cap", self.difficulty));
        }
        Ok(())
    }

    /// Smallest vote count strictly above `quorum × members`, capped at `members`.
    pub fn required_votes(&self, members: usize) -> usize {
        (((self.quorum * members as f64).floor() as usize) + 1).min(members).max(1)
    }
}

/// A member's signed endorsement of a block hash.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub block_hash: Hash512,
    pub voter_id: String,
    pub signature: SignatureBytes,
}

impl Vote {
    fn signing_bytes(block_hash: &Hash512, voter_id: &str) -> Vec<u8> {
        Encoder::new().tag(VOTE_TAG).raw(block_hash.as_bytes()).str(voter_id).finish()
    }

    pub fn sign(identity: &RobotIdentity, block_hash: Hash512) -> Self {
        Vote {
            block_hash,
            voter_id: identity.robot_id.clone(),
            signature: identity.sign(&Self::signing_bytes(&block_hash, &identity.robot_id)),
        }
    }

    pub fn verify(&self, rules: &ChainRules) -> bool {
        rules.acl.is_member(&self.voter_id)
            && rules.acl.get(&self.voter_id).is_some_and(|e| {
                verify_signature(&e.pubkey, &Self::signing_bytes(&self.block_hash, &self.voter_id), &self.signature)
            })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload")]
pub enum Payload {
    SubmitTx(FovTransaction),
    Propose(Block),
    Vote(Vote),
    /// A committed block with the votes that carried it.
    Commit { block: Block, votes: Vec<Vote> },
    ChainRequest { height: u64, tip: Hash512 },
    ChainResponse(Vec<Block>),
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::SubmitTx(_) => "SubmitTx",
            Payload::Propose(_) => "Propose",
            Payload::Vote(_) => "Vote",
            Payload::Commit { .. } => "Commit",
            Payload::ChainRequest { .. } => "ChainRequest",
            Payload::ChainResponse(_) => "ChainResponse",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusMessage {
    pub sender_id: String,
    pub payload: Payload,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Destination {
    /// Every other node.
    All,
    Node(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outbound {
    pub to: Destination,
    pub message: ConsensusMessage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Idle,
    Proposed,
    Committing,
}

/// Why a transaction was not admitted to the mempool.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TxDrop {
    RateLimited { pending: u32, limit: u32 },
    Spoofed(TxVerdict),
    StaleSeq { seq: u64, committed: u64 },
    Duplicate,
}

impl fmt::Display for TxDrop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TxDrop::RateLimited { pending, limit } => write!(f, "rate-limit ({pending} pending, limit {limit})"),
            TxDrop::Spoofed(v) => write!(f, "spoofed ({v})"),
            TxDrop::StaleSeq { seq, committed } => write!(f, "stale-seq ({seq} <= {committed})"),
            TxDrop::Duplicate => f.write_str("duplicate"),
        }
    }
}

/// One line of the consensus trace.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeEvent {
    pub time_us: u64,
    pub node: String,
    pub event: String,
    pub detail: String,
}

/// Something the node did that an observer may care about.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Notice {
    Committed(Hash512),
    Adopted { old_len: usize, new_len: usize },
}

pub struct NodeState {
    identity: RobotIdentity,
    rules: ChainRules,
    params: ConsensusParams,
    ledger: LedgerState,
    mempool: Vec<FovTransaction>,
    round: u64,
    round_started_us: u64,
    phase: Phase,
    /// Proposals that extend the current tip and passed local validation.
    validated: BTreeMap<Hash512, Block>,
    pending_votes: BTreeMap<Hash512, BTreeMap<String, Vote>>,
    last_vote: Option<(u64, u64)>,
    audit: AuditLog,
    validations: u64,
    events: Vec<NodeEvent>,
    notices: Vec<Notice>,
    voting: bool,
}

impl fmt::Debug for NodeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NodeState")
            .field("node_id", &self.identity.robot_id)
            .field("height", &self.ledger.tip().header.index)
            .field("mempool", &self.mempool.len())
            .field("round", &self.round)
            .field("phase", &self.phase)
            .finish_non_exhaustive()
    }
}

impl NodeState {
    pub fn new(identity: RobotIdentity, rules: ChainRules, params: ConsensusParams, genesis_time_us: u64) -> Self {
        let rules = rules.with_robot_quota(params.max_txs_per_robot_per_block);
        NodeState {
            ledger: LedgerState::new(&rules, genesis_time_us),
            identity,
            rules,
            params,
            mempool: Vec::new(),
            round: 0,
            round_started_us: genesis_time_us,
            phase: Phase::Idle,
            validated: BTreeMap::new(),
            pending_votes: BTreeMap::new(),
            last_vote: None,
            audit: AuditLog::default(),
            validations: 0,
            events: Vec::new(),
            notices: Vec::new(),
            voting: true,
        }
    }

    pub fn node_id(&self) -> &str {
        &self.identity.robot_id
    }

    pub fn identity(&self) -> &RobotIdentity {
        &self.identity
    }

    pub fn ledger(&self) -> &LedgerState {
        &self.ledger
    }

    pub fn rules(&self) -> &ChainRules {
        &self.rules
    }

    pub fn params(&self) -> &ConsensusParams {
        &self.params
    }

    pub fn mempool(&self) -> &[FovTransaction] {
        &self.mempool
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn audit_log(&self) -> &AuditLog {
        &self.audit
    }

    /// Signature and block checks performed so far (energy proxy).
    pub fn validations(&self) -> u64 {
        self.validations
    }

    /// A node that does not vote still validates, proposes and commits.
    pub fn set_voting(&mut self, voting: bool) {
        self.voting = voting;
    }

    pub fn votes_for(&self, hash: &Hash512) -> usize {
        self.pending_votes.get(hash).map_or(0, BTreeMap::len)
    }

    pub fn drain_events(&mut self) -> Vec<NodeEvent> {
        std::mem::take(&mut self.events)
    }

    pub fn drain_notices(&mut self) -> Vec<Notice> {
        std::mem::take(&mut self.notices)
    }

    fn log(&mut self, now_us: u64, event: &str, detail: impl Into<String>) {
        let detail = detail.into();
        log::debug!("[{now_us}] {} {event}: {detail}", self.identity.robot_id);
        self.events.push(NodeEvent {
            time_us: now_us,
            node: self.identity.robot_id.clone(),
            event: event.to_owned(),
            detail,
        });
    }

    fn broadcast(&self, payload: Payload) -> Outbound {
        Outbound {
            to: Destination::All,
            message: ConsensusMessage {
                sender_id: self.identity.robot_id.clone(),
                payload,
            },
        }
    }

    fn send(&self, to: &str, payload: Payload) -> Outbound {
        Outbound {
            to: Destination::Node(to.to_owned()),
            message: ConsensusMessage {
                sender_id: self.identity.robot_id.clone(),
                payload,
            },
        }
    }

    /// Designated proposer for `round`: sorted members, index `round mod count`.
    pub fn proposer_for(&self, round: u64) -> Option<&str> {
        let members = self.rules.acl.members();
        if members.is_empty() {
            return None;
        }
        Some(members[(round % members.len() as u64) as usize])
    }

    fn is_member(&self) -> bool {
        self.rules.acl.is_member(&self.identity.robot_id)
    }

    fn required_votes(&self) -> usize {
        self.params.required_votes(self.rules.acl.member_count())
    }

    // Cheap checks run before the signature so a flood costs little.
    fn admit(&mut self, tx: &FovTransaction) -> Result<(), TxDrop> {
        if self.rules.acl.get(&tx.robot_id).is_none() {
            return Err(TxDrop::Spoofed(TxVerdict::UnknownId));
        }
        let committed = self.ledger.committed_seq(&tx.robot_id).unwrap_or(0);
        if tx.seq <= committed {
            return Err(TxDrop::StaleSeq { seq: tx.seq, committed });
        }
        if self.mempool.iter().any(|m| m.robot_id == tx.robot_id && m.seq == tx.seq) {
            return Err(TxDrop::Duplicate);
        }
        let pending = self.mempool.iter().filter(|m| m.robot_id == tx.robot_id).count() as u32;
        if pending >= self.params.max_pending_per_robot {
            return Err(TxDrop::RateLimited {
                pending,
                limit: self.params.max_pending_per_robot,
            });
        }
        self.validations += 1;
        let verdict = verify_tx(tx, &self.rules.acl);
        if !verdict.is_accept() {
            return Err(TxDrop::Spoofed(verdict));
        }
        self.mempool.push(tx.clone());
        Ok(())
    }

    /// Local verification at the submitting robot's own node. On success the
    /// tx enters the mempool and is broadcast for validation.
    pub fn submit_tx(&mut self, tx: FovTransaction, now_us: u64) -> Result<Vec<Outbound>, TxDrop> {
        match self.admit(&tx) {
            Ok(()) => {
                self.log(now_us, "submit", format!("{}#{}", tx.robot_id, tx.seq));
                Ok(vec![self.broadcast(Payload::SubmitTx(tx))])
            }
            Err(cause) => {
                self.log(now_us, "drop_tx", format!("{}#{}: {cause}", tx.robot_id, tx.seq));
                Err(cause)
            }
        }
    }

    /// Validation of a broadcast tx at a peer. A delivery receipt is issued
    /// whether or not the tx is admitted.
    pub fn on_tx_received(&mut self, from: &str, tx: FovTransaction, now_us: u64) -> Result<(), TxDrop> {
        if let Ok(digest) = tx_digest(&tx) {
            let receipt = issue_receipt(&self.identity, digest, from, now_us);
            self.audit.push(receipt);
        }
        let res = self.admit(&tx);
        match &res {
            Ok(()) => self.log(now_us, "accept_tx", format!("{}#{} from {from}", tx.robot_id, tx.seq)),
            Err(cause) => self.log(now_us, "drop_tx", format!("{}#{} from {from}: {cause}", tx.robot_id, tx.seq)),
        }
        res
    }

    /// Mempool txs that may go into the next block: still fresh, at most
    /// `max_txs_per_robot_per_block` per robot, ordered by (robot, seq).
    pub fn select_txs(&self) -> Vec<FovTransaction> {
        let mut by_robot: BTreeMap<&str, Vec<&FovTransaction>> = BTreeMap::new();
        for tx in &self.mempool {
            if tx.seq > self.ledger.committed_seq(&tx.robot_id).unwrap_or(0) {
                by_robot.entry(&tx.robot_id).or_default().push(tx);
            }
        }
        let limit = self.params.max_txs_per_robot_per_block as usize;
        let mut out = Vec::new();
        for (_, mut txs) in by_robot {
            txs.sort_by_key(|t| t.seq);
            out.extend(txs.into_iter().take(limit).cloned());
        }
        out
    }

    /// Periodic timer: handles round timeouts, then proposes if this node is
    /// the round's designated proposer.
    pub fn on_propose_timer(&mut self, now_us: u64) -> Vec<Outbound> {
        let mut out = Vec::new();
        if now_us.saturating_sub(self.round_started_us) >= self.params.round_timeout_us {
            self.round += 1;
            self.round_started_us = now_us;
            self.phase = Phase::Idle;
            self.log(now_us, "timeout", format!("round -> {}", self.round));
            let tip = &self.ledger.tip().header;
            out.push(self.broadcast(Payload::ChainRequest {
                height: tip.index,
                tip: self.ledger.tip_hash(),
            }));
        }
        if !self.is_member() || self.phase == Phase::Proposed || self.proposer_for(self.round) != Some(self.node_id()) {
            return out;
        }
        let txs = self.select_txs();
        if txs.is_empty() && !self.round.is_multiple_of(self.params.heartbeat_every) {
            return out;
        }
        let block = match mine_block(&self.ledger.tip().header, txs, &self.identity, now_us, self.rules.difficulty) {
            Ok(b) => b,
            Err(e) => {
                self.log(now_us, "mine_failed", e.to_string());
                return out;
            }
        };
        let hash = block.hash();
        self.log(
            now_us,
            "propose",
            format!("height {} txs {} nonce {} hash {}", block.header.index, block.txs.len(), block.header.nonce, &hash.to_hex()[..16]),
        );
        self.phase = Phase::Proposed;
        self.validated.insert(hash, block.clone());
        out.push(self.broadcast(Payload::Propose(block)));
        out.extend(self.cast_vote(hash, now_us));
        out.extend(self.try_commit(hash, now_us));
        out
    }

    fn cast_vote(&mut self, hash: Hash512, now_us: u64) -> Vec<Outbound> {
        let height = self.ledger.tip().header.index + 1;
        if !self.voting || !self.is_member() || self.last_vote == Some((height, self.round)) {
            return Vec::new();
        }
        self.last_vote = Some((height, self.round));
        let vote = Vote::sign(&self.identity, hash);
        self.pending_votes
            .entry(hash)
            .or_default()
            .insert(vote.voter_id.clone(), vote.clone());
        self.log(now_us, "vote", format!("height {height} hash {}", &hash.to_hex()[..16]));
        vec![self.broadcast(Payload::Vote(vote))]
    }

    /// Validates a proposal; votes for it when valid, asks the sender for its
    /// chain when the parent is unknown.
    pub fn on_block_received(&mut self, from: &str, block: Block, now_us: u64) -> Vec<Outbound> {
        let hash = block.hash();
        if self.validated.contains_key(&hash) || self.ledger.contains_block(&hash) {
            return Vec::new();
        }
        let tip_hash = self.ledger.tip_hash();
        if block.header.prev_hash != tip_hash {
            if self.ledger.contains_block(&block.header.prev_hash) {
                self.log(now_us, "stale_block", format!("height {} from {from}", block.header.index));
                return Vec::new();
            }
            self.log(now_us, "unknown_parent", format!("height {} from {from}", block.header.index));
            return vec![self.send(
                from,
                Payload::ChainRequest {
                    height: self.ledger.tip().header.index,
                    tip: tip_hash,
                },
            )];
        }
        self.validations += 1 + block.txs.len() as u64;
        if let Err(fault) = verify_block(&block, &self.ledger.tip().header, &self.rules, &self.ledger) {
            self.log(now_us, "reject_block", format!("height {} from {from}: {fault}", block.header.index));
            return Vec::new();
        }
        self.log(now_us, "validate", format!("height {} hash {}", block.header.index, &hash.to_hex()[..16]));
        self.validated.insert(hash, block);
        if self.phase == Phase::Idle {
            self.phase = Phase::Committing;
        }
        let mut out = self.cast_vote(hash, now_us);
        out.extend(self.try_commit(hash, now_us));
        out
    }

    /// Accumulates a vote; commits once a validated block reaches quorum.
    pub fn on_vote_received(&mut self, vote: Vote, now_us: u64) -> Vec<Outbound> {
        if self.ledger.contains_block(&vote.block_hash) {
            return Vec::new();
        }
        self.validations += 1;
        if !vote.verify(&self.rules) {
            self.log(now_us, "reject_vote", format!("from {}", vote.voter_id));
            return Vec::new();
        }
        let hash = vote.block_hash;
        let votes = self.pending_votes.entry(hash).or_default();
        if votes.contains_key(&vote.voter_id) {
            return Vec::new();
        }
        votes.insert(vote.voter_id.clone(), vote);
        self.try_commit(hash, now_us)
    }

    /// A peer's commit: its votes are counted and the block is validated
    /// locally like any proposal.
    pub fn on_commit_received(&mut self, from: &str, block: Block, votes: Vec<Vote>, now_us: u64) -> Vec<Outbound> {
        let mut out = Vec::new();
        for v in votes {
            out.extend(self.on_vote_received(v, now_us));
        }
        out.extend(self.on_block_received(from, block, now_us));
        out
    }

    fn try_commit(&mut self, hash: Hash512, now_us: u64) -> Vec<Outbound> {
        if self.votes_for(&hash) < self.required_votes() {
            return Vec::new();
        }
        let Some(block) = self.validated.get(&hash).cloned() else {
            return Vec::new();
        };
        self.validations += 1 + block.txs.len() as u64;
        if let Err(fault) = self.ledger.apply_block(block.clone(), &self.rules) {
            self.log(now_us, "commit_failed", fault.to_string());
            self.validated.remove(&hash);
            return Vec::new();
        }
        let votes: Vec<Vote> = self.pending_votes.remove(&hash).unwrap_or_default().into_values().collect();
        self.log(
            now_us,
            "commit",
            format!("height {} txs {} votes {} hash {}", block.header.index, block.txs.len(), votes.len(), &hash.to_hex()[..16]),
        );
        self.after_tip_change(now_us);
        self.notices.push(Notice::Committed(hash));
        vec![self.broadcast(Payload::Commit { block, votes })]
    }

    fn after_tip_change(&mut self, now_us: u64) {
        let ledger = &self.ledger;
        self.mempool
            .retain(|tx| tx.seq > ledger.committed_seq(&tx.robot_id).unwrap_or(0));
        let tip = ledger.tip_hash();
        self.validated.retain(|_, b| b.header.prev_hash == tip);
        // votes for blocks not yet seen are kept; the block may still arrive
        self.pending_votes.retain(|h, _| !ledger.contains_block(h));
        self.round += 1;
        self.round_started_us = now_us;
        self.phase = Phase::Idle;
    }

    /// Replies with the local chain if it beats the requester's tip.
    pub fn on_chain_request(&mut self, from: &str, height: u64, tip: Hash512, now_us: u64) -> Vec<Outbound> {
        let mine = &self.ledger.tip().header;
        let better = mine.index > height || (mine.index == height && self.ledger.tip_hash() < tip);
        if !better {
            return Vec::new();
        }
        self.log(now_us, "chain_response", format!("to {from} len {}", self.ledger.len()));
        vec![self.send(from, Payload::ChainResponse(self.ledger.blocks().to_vec()))]
    }

    /// Fork choice between the local chain and a received one. Local txs
    /// that the winner lacks go back into the mempool.
    pub fn on_chain_response(&mut self, from: &str, blocks: Vec<Block>, now_us: u64) {
        if blocks.first() != self.ledger.blocks().first() {
            self.log(now_us, "ignore_chain", format!("from {from}: different genesis"));
            return;
        }
        if compare_valid_chains(&blocks, self.ledger.blocks()) != std::cmp::Ordering::Greater {
            return;
        }
        self.validations += blocks.iter().map(|b| 1 + b.txs.len() as u64).sum::<u64>();
        let adopted = match LedgerState::from_chain(&blocks, &self.rules) {
            Ok(l) => l,
            Err(fault) => {
                self.log(now_us, "ignore_chain", format!("from {from}: {fault}"));
                return;
            }
        };
        let old = std::mem::replace(&mut self.ledger, adopted);
        let fork_point = old
            .blocks()
            .iter()
            .zip(self.ledger.blocks())
            .take_while(|(a, b)| a == b)
            .count();
        let mut requeued = 0;
        for b in &old.blocks()[fork_point..] {
            for tx in &b.txs {
                let fresh = tx.seq > self.ledger.committed_seq(&tx.robot_id).unwrap_or(0);
                let queued = self.mempool.iter().any(|m| m.robot_id == tx.robot_id && m.seq == tx.seq);
                if fresh && !queued {
                    self.mempool.push(tx.clone());
                    requeued += 1;
                }
            }
        }
        self.log(
            now_us,
            "adopt_chain",
            format!("from {from}: len {} -> {}, fork at {fork_point}, requeued {requeued}", old.len(), self.ledger.len()),
        );
        self.notices.push(Notice::Adopted {
            old_len: old.len(),
            new_len: self.ledger.len(),
        });
        self.after_tip_change(now_us);
    }

    /// Dispatches one delivered message.
    pub fn handle(&mut self, msg: ConsensusMessage, now_us: u64) -> Vec<Outbound> {
        let from = msg.sender_id;
        match msg.payload {
            Payload::SubmitTx(tx) => {
                let _ = self.on_tx_received(&from, tx, now_us);
                Vec::new()
            }
            Payload::Propose(block) => self.on_block_received(&from, block, now_us),
            Payload::Vote(vote) => self.on_vote_received(vote, now_us),
            Payload::Commit { block, votes } => self.on_commit_received(&from, block, votes, now_us),
            Payload::ChainRequest { height, tip } => self.on_chain_request(&from, height, tip, now_us),
            Payload::ChainResponse(blocks) => {
                self.on_chain_response(&from, blocks, now_us);
                Vec::new()
            }
        }
    }
}
