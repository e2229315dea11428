//! The discrete-event loop: sensing, motion, transport, consensus nodes,
//! adversaries and the mission executor.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{AdversaryBehavior, ScenarioConfig};
use super::metrics::MetricsRecord;
use crate::acl::{sign_tx, verify_receipt, Role};
use crate::chain::{mine_block, verify_chain, ChainRules, CommittedSeqs};
use crate::codec::Hash512;
use crate::consensus::{ConsensusMessage, Destination, NodeEvent, NodeState, Notice, Outbound, Payload};
use crate::ledger::LedgerState;
use crate::planner::{build_visibility_graph, plan_landmark_chain, LandmarkChain};
use crate::types::{tx_digest, tx_signing_digest, Block, FovTransaction, LandmarkId, PanoramicView};
use crate::world::{compute_view, Point, Pose, World};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub time_us: u64,
    pub waypoints: Vec<LandmarkId>,
    pub via_robots: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Traversal {
    pub time_us: u64,
    pub landmark: LandmarkId,
    /// The landmark was a waypoint of the plan being followed when reached.
    pub in_active_plan: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissionReport {
    pub requester: String,
    pub blockchain_enabled: bool,
    pub success: bool,
    pub failure: Option<String>,
    pub mission_time_us: u64,
    pub plans: Vec<PlanRecord>,
    pub traversed: Vec<Traversal>,
    pub distance_m: f64,
    pub final_position: Point,
    /// Visibility-graph edges when the first plan was made.
    pub graph_edges: Vec<(String, String)>,
}

impl MissionReport {
    pub fn final_plan(&self) -> Option<&PlanRecord> {
        self.plans.last()
    }
}

/// Independent re-checks of every honest node's chain.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SafetyAudit {
    pub violations: Vec<String>,
    pub max_honest_mempool: usize,
    /// `(length, tip)` of every chain an honest node held, plus every branch
    /// an adversary published.
    pub tips_seen: Vec<(usize, Hash512)>,
    /// Blocks the reference node committed after the first adversary started.
    pub commits_after_attack: usize,
}

/// What the adversaries did, for checking against honest ledgers.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttackEvidence {
    pub spoofed: BTreeSet<Hash512>,
    pub replayed: BTreeSet<Hash512>,
    pub tampered: BTreeSet<Hash512>,
    pub tampered_chains_sent: u64,
    pub malicious_proposals: u64,
    pub flood_txs: u64,
    pub forks_published: Vec<(usize, Hash512)>,
}

/// Delivery receipts held by honest nodes.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReceiptAudit {
    pub total: usize,
    pub invalid: usize,
    /// Reference-chain txs with at least one receipt from an honest node.
    pub committed_with_receipt: usize,
    pub committed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxConvergence {
    pub robot_id: String,
    pub seq: u64,
    pub convergence_us: u64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub trace: Vec<NodeEvent>,
    /// Final chain of every node, adversaries included.
    pub chains: BTreeMap<String, Vec<Block>>,
    pub rules: ChainRules,
    pub honest: Vec<String>,
    pub reference_node: String,
    pub mission: Option<MissionReport>,
    pub safety: SafetyAudit,
    pub evidence: AttackEvidence,
    pub tx_convergence: Vec<TxConvergence>,
    pub receipts: ReceiptAudit,
    /// Time the main phase stopped (mission end or `duration_us`).
    pub stopped_at_us: u64,
}

impl RunOutput {
    pub fn reference_chain(&self) -> &[Block] {
        &self.chains[&self.reference_node]
    }

    pub fn trace_jsonl(&self) -> String {
        trace_jsonl(&self.trace)
    }
}

pub fn trace_jsonl(events: &[NodeEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&serde_json::to_string(e).expect("events serialize"));
        out.push('\n');
    }
    out
}

#[allow(clippy::large_enum_variant)]
enum Event {
    Sense(usize),
    Move,
    ProposeTimer(usize),
    Deliver { to: usize, msg: ConsensusMessage },
    PollReply(usize),
    AdversaryTick(usize),
    FloodTick(usize),
    WorldChange(usize),
    SettleSync,
}

struct Scheduled {
    time: u64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

struct RobotRt {
    pose: Pose,
    view: PanoramicView,
    published: Option<BTreeSet<LandmarkId>>,
    seq: u64,
}

struct AdversaryRt {
    behavior: AdversaryBehavior,
    start_us: u64,
    started: bool,
    private: Option<LedgerState>,
    released: bool,
    spoofs: u64,
}

struct MissionRt {
    robot: usize,
    bc: bool,
    patience_us: u64,
    plan: Option<LandmarkChain>,
    next: usize,
    polled: BTreeMap<String, PanoramicView>,
    last_info_us: u64,
    no_path_logged: bool,
    outcome: Option<Result<(), String>>,
    time_us: u64,
    distance: f64,
    traversed: Vec<Traversal>,
    plans: Vec<PlanRecord>,
    graph_edges: Option<Vec<(String, String)>>,
}

pub fn run_scenario(cfg: &ScenarioConfig) -> RunOutput {
    Sim::new(cfg).run()
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    rules: ChainRules,
    world: World,
    nodes: Vec<NodeState>,
    index: BTreeMap<String, usize>,
    robots: Vec<RobotRt>,
    adversaries: Vec<Option<AdversaryRt>>,
    dark: Vec<bool>,
    honest: Vec<usize>,
    reference: usize,
    auditors: Vec<Option<LedgerState>>,
    mission: Option<MissionRt>,
    queue: BinaryHeap<Scheduled>,
    next_seq: u64,
    now: u64,
    settling: bool,
    net_rng: ChaCha8Rng,
    adv_rng: ChaCha8Rng,
    walk_rng: ChaCha8Rng,
    trace: Vec<NodeEvent>,
    msgs_sent: u64,
    submitted: BTreeMap<(String, u64), u64>,
    first_seen: BTreeMap<(String, u64), BTreeMap<usize, u64>>,
    first_attack_us: Option<u64>,
    safety: SafetyAudit,
    evidence: AttackEvidence,
    suppress_votes_for: Option<Hash512>,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Self {
        let rules = cfg.chain_rules();
        let ids = cfg.identities();
        let nodes: Vec<NodeState> = ids
            .into_iter()
            .map(|id| NodeState::new(id, rules.clone(), cfg.consensus.clone(), 0))
            .collect();
        let index: BTreeMap<String, usize> = cfg.robots.iter().enumerate().map(|(i, r)| (r.id.clone(), i)).collect();
        let mut adversaries: Vec<Option<AdversaryRt>> = (0..nodes.len()).map(|_| None).collect();
        for a in &cfg.adversaries {
            adversaries[index[&a.node]] = Some(AdversaryRt {
                behavior: a.behavior.clone(),
                start_us: a.start_us,
                started: false,
                private: None,
                released: false,
                spoofs: 0,
            });
        }
        let honest: Vec<usize> = (0..nodes.len()).filter(|&i| adversaries[i].is_none()).collect();
        let mission = cfg.mission.as_ref().map(|m| MissionRt {
            robot: index[&m.requester],
            bc: m.blockchain_enabled,
            patience_us: m.patience_us,
            plan: None,
            next: 0,
            polled: BTreeMap::new(),
            last_info_us: 0,
            no_path_logged: false,
            outcome: None,
            time_us: 0,
            distance: 0.0,
            traversed: Vec::new(),
            plans: Vec::new(),
            graph_edges: None,
        });
        let reference = mission.as_ref().map_or_else(|| honest.first().copied().unwrap_or(0), |m| m.robot);
        let auditors = (0..nodes.len())
            .map(|i| adversaries[i].is_none().then(|| LedgerState::new(&rules, 0)))
            .collect();
        let robots = cfg
            .robots
            .iter()
            .map(|r| RobotRt {
                pose: r.start,
                view: PanoramicView::empty(),
                published: None,
                seq: 0,
            })
            .collect();
        let mut adv_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        adv_rng.set_stream(1);
        let mut walk_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        walk_rng.set_stream(2);
        Sim {
            cfg,
            world: cfg.world.clone(),
            dark: vec![false; nodes.len()],
            first_attack_us: cfg.adversaries.iter().map(|a| a.start_us).min(),
            nodes,
            index,
            robots,
            adversaries,
            honest,
            reference,
            auditors,
            mission,
            rules,
            queue: BinaryHeap::new(),
            next_seq: 0,
            now: 0,
            settling: false,
            net_rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            adv_rng,
            walk_rng,
            trace: Vec::new(),
            msgs_sent: 0,
            submitted: BTreeMap::new(),
            first_seen: BTreeMap::new(),
            safety: SafetyAudit::default(),
            evidence: AttackEvidence::default(),
            suppress_votes_for: None,
        }
    }

    fn schedule(&mut self, time: u64, event: Event) {
        self.queue.push(Scheduled {
            time,
            seq: self.next_seq,
            event,
        });
        self.next_seq += 1;
    }

    fn log(&mut self, node: usize, event: &str, detail: impl Into<String>) {
        self.trace.push(NodeEvent {
            time_us: self.now,
            node: self.cfg.robots[node].id.clone(),
            event: event.to_owned(),
            detail: detail.into(),
        });
    }

    fn mission_done(&self) -> bool {
        self.mission.as_ref().is_some_and(|m| m.outcome.is_some())
    }

    fn run(mut self) -> RunOutput {
        let interval = self.cfg.consensus.block_interval_us;
        for i in 0..self.robots.len() {
            self.schedule(0, Event::Sense(i));
            self.schedule(interval, Event::ProposeTimer(i));
        }
        if self.mission.is_some() {
            self.schedule(0, Event::Move);
        }
        for i in 0..self.nodes.len() {
            if let Some(a) = &self.adversaries[i] {
                let (start, flood) = (a.start_us, matches!(a.behavior, AdversaryBehavior::Flood { .. }));
                self.schedule(start, Event::AdversaryTick(i));
                if flood {
                    self.schedule(start, Event::FloodTick(i));
                }
            }
        }
        for (k, e) in self.cfg.events.iter().enumerate() {
            self.schedule(e.at_us, Event::WorldChange(k));
        }

        let end = self.cfg.duration_us;
        let mut stopped_at = end;
        while let Some(top) = self.queue.peek() {
            if top.time > end {
                break;
            }
            let s = self.queue.pop().expect("peeked");
            self.now = s.time;
            self.dispatch(s.event);
            if self.mission_done() {
                stopped_at = self.now;
                break;
            }
        }
        self.now = self.now.max(stopped_at);
        if let Some(m) = self.mission.as_mut() {
            if m.outcome.is_none() {
                m.outcome = Some(Err("timeout".into()));
                m.time_us = stopped_at;
                let r = m.robot;
                self.log(r, "mission_failure", "timeout");
            }
        }

        self.settling = true;
        let pending: Vec<Scheduled> = std::mem::take(&mut self.queue)
            .into_vec()
            .into_iter()
            .filter(|s| matches!(s.event, Event::Deliver { .. }))
            .collect();
        self.queue.extend(pending);
        let settle = self.cfg.sim.settle_us;
        self.schedule(stopped_at, Event::SettleSync);
        self.schedule(stopped_at + settle / 2, Event::SettleSync);
        while let Some(s) = self.queue.pop() {
            if s.time > stopped_at + settle {
                break;
            }
            self.now = s.time;
            self.dispatch(s.event);
        }
        self.finish(stopped_at)
    }

    fn dispatch(&mut self, event: Event) {
        match event {
            Event::Sense(i) => self.on_sense(i),
            Event::Move => self.on_move(),
            Event::ProposeTimer(i) => {
                if self.settling {
                    return;
                }
                if !self.dark[i] {
                    let outs = self.nodes[i].on_propose_timer(self.now);
                    self.after_node(i, outs);
                }
                self.schedule(self.now + self.cfg.consensus.block_interval_us, Event::ProposeTimer(i));
            }
            Event::Deliver { to, msg } => {
                if self.dark[to] {
                    return;
                }
                let outs = self.nodes[to].handle(msg, self.now);
                self.after_node(to, outs);
            }
            Event::PollReply(j) => self.on_poll_reply(j),
            Event::AdversaryTick(i) => self.on_adversary_tick(i),
            Event::FloodTick(i) => self.on_flood_tick(i),
            Event::WorldChange(k) => {
                let id = self.cfg.events[k].remove_landmark.clone();
                self.world.landmarks.remove(&id);
                let who = self.reference;
                self.log(who, "landmark_removed", id.as_str());
            }
            Event::SettleSync => {
                for i in 0..self.nodes.len() {
                    if self.dark[i] {
                        continue;
                    }
                    let l = self.nodes[i].ledger();
                    let payload = Payload::ChainRequest {
                        height: l.tip().header.index,
                        tip: l.tip_hash(),
                    };
                    let ob = Outbound {
                        to: Destination::All,
                        message: ConsensusMessage {
                            sender_id: self.cfg.robots[i].id.clone(),
                            payload,
                        },
                    };
                    self.send(i, ob);
                }
            }
        }
    }

    // ---- transport ----

    fn reachable(&self, a: usize, b: usize) -> bool {
        let (ia, ib) = (&self.cfg.robots[a].id, &self.cfg.robots[b].id);
        !self.cfg.transport.partitions.iter().any(|p| p.separates(ia, ib, self.now))
    }

    fn latency(&mut self) -> u64 {
        let [lo, hi] = self.cfg.transport.latency_us;
        self.net_rng.gen_range(lo..=hi)
    }

    /// One sampled leg; `None` when the message is lost.
    fn leg(&mut self, from: usize, to: usize) -> Option<u64> {
        if self.settling {
            return Some(self.latency());
        }
        if !self.reachable(from, to) {
            return None;
        }
        let p = self.cfg.transport.drop_probability;
        if p > 0.0 && self.net_rng.gen_bool(p) {
            return None;
        }
        Some(self.latency())
    }

    fn send(&mut self, from: usize, ob: Outbound) {
        if self.dark[from] {
            return;
        }
        let targets: Vec<usize> = match &ob.to {
            Destination::All => (0..self.nodes.len()).filter(|&j| j != from).collect(),
            Destination::Node(id) => self.index.get(id).copied().into_iter().collect(),
        };
        for to in targets {
            self.msgs_sent += 1;
            if let Some(lat) = self.leg(from, to) {
                self.schedule(
                    self.now + lat,
                    Event::Deliver {
                        to,
                        msg: ob.message.clone(),
                    },
                );
            }
        }
    }

    // ---- node bookkeeping ----

    fn after_node(&mut self, i: usize, outs: Vec<Outbound>) {
        let events = self.nodes[i].drain_events();
        self.trace.extend(events);
        let notices = self.nodes[i].drain_notices();
        if self.adversaries[i].is_none() {
            for n in &notices {
                self.audit(i, n);
            }
            let pending = self.nodes[i].mempool().len();
            self.safety.max_honest_mempool = self.safety.max_honest_mempool.max(pending);
        }
        self.emit(i, outs);
        if !notices.is_empty() && self.mission.as_ref().is_some_and(|m| m.bc && m.robot == i) {
            if let Some(m) = self.mission.as_mut() {
                m.last_info_us = self.now;
            }
            self.evaluate_plan();
        }
    }

    fn audit(&mut self, i: usize, notice: &Notice) {
        let node = self.cfg.robots[i].id.clone();
        let ledger = self.nodes[i].ledger();
        let mut included: Vec<(String, u64)> = Vec::new();
        match notice {
            Notice::Committed(hash) => {
                let Some(pos) = ledger.position_of(hash) else { return };
                let block = ledger.blocks()[pos].clone();
                included.extend(block.txs.iter().map(|t| (t.robot_id.clone(), t.seq)));
                if let Some(aud) = self.auditors[i].as_mut() {
                    if let Err(f) = aud.apply_block(block, &self.rules) {
                        self.safety.violations.push(format!("{node} committed block {pos} failing {}", f.check()));
                    }
                }
                if i == self.reference && self.first_attack_us.is_some_and(|t| self.now >= t) {
                    self.safety.commits_after_attack += 1;
                }
            }
            Notice::Adopted { .. } => {
                let blocks = ledger.blocks();
                for b in blocks {
                    included.extend(b.txs.iter().map(|t| (t.robot_id.clone(), t.seq)));
                }
                match verify_chain(blocks, &self.rules) {
                    Ok(()) => self.auditors[i] = LedgerState::from_chain(blocks, &self.rules).ok(),
                    Err(f) => self.safety.violations.push(format!("{node} adopted a chain failing at {f}")),
                }
            }
        }
        let ledger = self.nodes[i].ledger();
        self.safety.tips_seen.push((ledger.len(), ledger.tip_hash()));
        for key in included {
            self.first_seen.entry(key).or_default().entry(i).or_insert(self.now);
        }
    }

    fn emit(&mut self, i: usize, outs: Vec<Outbound>) {
        for mut ob in outs {
            let malicious = self.adversaries[i]
                .as_ref()
                .is_some_and(|a| a.started && matches!(a.behavior, AdversaryBehavior::Spoof | AdversaryBehavior::Replay));
            if malicious {
                match &ob.message.payload {
                    Payload::Propose(block) => {
                        let honest_hash = block.hash();
                        match self.malicious_block(i, block) {
                            Some(bad) => {
                                self.suppress_votes_for = Some(honest_hash);
                                ob.message.payload = Payload::Propose(bad);
                            }
                            None => self.suppress_votes_for = None,
                        }
                    }
                    Payload::Vote(v) if Some(v.block_hash) == self.suppress_votes_for => continue,
                    _ => {}
                }
            }
            self.send(i, ob);
        }
    }

    // ---- sensing, motion, planning ----

    fn on_sense(&mut self, i: usize) {
        if self.settling {
            return;
        }
        let rc = &self.cfg.robots[i];
        let is_requester = self.mission.as_ref().is_some_and(|m| m.robot == i);
        if rc.wander && !is_requester && rc.speed > 0.0 {
            let step = rc.speed * rc.sense_period_us as f64 / 1e6;
            let turn: f64 = self.walk_rng.gen_range(-0.8..0.8);
            let p = &mut self.robots[i].pose;
            let heading = p.heading + turn;
            let arena = self.cfg.world.arena;
            let x = (p.x + step * heading.cos()).clamp(0.0, arena.width);
            let y = (p.y + step * heading.sin()).clamp(0.0, arena.height);
            *p = Pose::new(x, y, heading);
        }
        let view = compute_view(&self.world, &self.robots[i].pose);
        let changed = view != self.robots[i].view;
        self.robots[i].view = view;

        if rc.role == Role::Member {
            let flat = self.robots[i].view.flatten();
            if self.robots[i].published.as_ref() != Some(&flat) {
                let seq = self.robots[i].seq + 1;
                if let Some(outs) = self.publish(i, seq) {
                    self.robots[i].published = Some(flat);
                    self.robots[i].seq = seq;
                    self.after_node(i, outs);
                } else {
                    self.after_node(i, Vec::new());
                }
            }
        }

        if is_requester {
            if changed {
                if let Some(m) = self.mission.as_mut() {
                    m.last_info_us = self.now;
                }
                self.evaluate_plan();
            }
            if self.mission.as_ref().is_some_and(|m| !m.bc && m.outcome.is_none()) {
                self.start_polls(i);
            }
        }
        self.schedule(self.now + rc.sense_period_us, Event::Sense(i));
    }

    /// Signs the robot's current view as tx `seq` and submits it to its own
    /// node; `None` when the node drops it.
    fn publish(&mut self, i: usize, seq: u64) -> Option<Vec<Outbound>> {
        let id = self.nodes[i].identity().clone();
        let tx = FovTransaction::unsigned(id.robot_id.clone(), seq, self.now, self.robots[i].view.clone());
        let tx = sign_tx(&id, tx).ok()?;
        let outs = self.nodes[i].submit_tx(tx, self.now).ok()?;
        self.submitted.insert((id.robot_id, seq), self.now);
        Some(outs)
    }

    fn start_polls(&mut self, req: usize) {
        for j in 0..self.robots.len() {
            if j == req {
                continue;
            }
            self.msgs_sent += 2;
            let (Some(a), Some(b)) = (self.leg(req, j), self.leg(j, req)) else { continue };
            self.schedule(self.now + a + b, Event::PollReply(j));
        }
    }

    fn on_poll_reply(&mut self, j: usize) {
        if self.settling || self.mission_done() {
            return;
        }
        let view = self.robots[j].view.clone();
        let id = self.cfg.robots[j].id.clone();
        let Some(m) = self.mission.as_mut() else { return };
        if m.polled.get(&id) != Some(&view) {
            m.polled.insert(id, view);
            m.last_info_us = self.now;
            self.evaluate_plan();
        }
    }

    fn evaluate_plan(&mut self) {
        if self.settling || self.mission_done() {
            return;
        }
        let Some(m) = self.mission.as_ref() else { return };
        let r = m.robot;
        let req = self.cfg.robots[r].id.clone();
        let mut views = if m.bc { self.nodes[r].ledger().view_map() } else { m.polled.clone() };
        views.insert(req.clone(), self.robots[r].view.clone());
        let graph = build_visibility_graph(&views, &self.world.goal_landmark);
        let candidate = plan_landmark_chain(&graph, &req);

        let current_ok = m.plan.as_ref().is_some_and(|p| plan_still_valid(p, m.next, &views));
        let adopt = match (&m.plan, &candidate) {
            (Some(p), Ok(c)) if current_ok => c.hops() < p.hops() - m.next,
            (Some(_), Err(_)) if current_ok => false,
            (_, Ok(_)) => true,
            (_, Err(_)) => false,
        };
        let now = self.now;
        let m = self.mission.as_mut().expect("checked");
        if adopt {
            let c = candidate.expect("adopt implies a plan");
            let kind = if m.plan.is_none() && m.plans.is_empty() {
                "plan"
            } else if current_ok {
                "shortcut"
            } else {
                "replan"
            };
            if m.graph_edges.is_none() {
                m.graph_edges = Some(graph.edge_pairs().into_iter().collect());
            }
            m.plans.push(PlanRecord {
                time_us: now,
                waypoints: c.waypoints.clone(),
                via_robots: c.via_robots.clone(),
            });
            let detail = format!(
                "{} via {}",
                c.waypoints.iter().map(LandmarkId::as_str).collect::<Vec<_>>().join(" -> "),
                c.via_robots.join(",")
            );
            m.plan = Some(c);
            m.next = 0;
            m.no_path_logged = false;
            self.log(r, kind, detail);
        } else if !current_ok && m.plan.is_some() {
            m.plan = None;
            self.log(r, "plan_broken", "no alternative chain");
        } else if m.plan.is_none() && !m.no_path_logged {
            m.no_path_logged = true;
            self.log(r, "no_path", "goal unreachable from current views");
        }
    }

    fn on_move(&mut self) {
        if self.settling || self.mission_done() {
            return;
        }
        let dt = self.cfg.sim.motion_step_us;
        let capture = self.cfg.sim.capture_radius_m;
        let now = self.now;
        let m = self.mission.as_mut().expect("move implies a mission");
        let r = m.robot;
        let speed = self.cfg.robots[r].speed;
        let mut event: Option<(&'static str, String)> = None;
        match m.plan.clone() {
            Some(plan) => {
                let wp = plan.waypoints[m.next].clone();
                // navigation targets come from the initial map; a removed
                // landmark's spot is still a place
                let target = self.cfg.world.landmarks[&wp];
                let pose = &mut self.robots[r].pose;
                let here = pose.point();
                let d = here.distance(target);
                if d > capture {
                    let step = (speed * dt as f64 / 1e6).min(d);
                    if step > 0.0 {
                        let k = step / d;
                        let heading = (target.y - here.y).atan2(target.x - here.x);
                        *pose = Pose::new(here.x + k * (target.x - here.x), here.y + k * (target.y - here.y), heading);
                        m.distance += step;
                    }
                }
                if self.robots[r].pose.point().distance(target) <= capture {
                    m.traversed.push(Traversal {
                        time_us: now,
                        landmark: wp.clone(),
                        in_active_plan: true,
                    });
                    m.next += 1;
                    if m.next == plan.waypoints.len() {
                        m.outcome = Some(Ok(()));
                        m.time_us = now;
                        event = Some(("mission_success", format!("reached {wp}")));
                    } else {
                        event = Some(("waypoint", wp.to_string()));
                    }
                }
            }
            None => {
                if now.saturating_sub(m.last_info_us) >= m.patience_us {
                    m.outcome = Some(Err("no path within patience window".into()));
                    m.time_us = now;
                    event = Some(("mission_failure", "no path within patience window".into()));
                }
            }
        }
        if let Some((e, d)) = event {
            self.log(r, e, d);
        }
        if !self.mission_done() {
            self.schedule(now + dt, Event::Move);
        }
    }

    // ---- adversaries ----

    fn on_adversary_tick(&mut self, i: usize) {
        if self.settling {
            return;
        }
        let Some(a) = self.adversaries[i].as_mut() else { return };
        let behavior = a.behavior.clone();
        if !a.started {
            a.started = true;
            match behavior {
                AdversaryBehavior::WithholdVotes => self.nodes[i].set_voting(false),
                AdversaryBehavior::ForkMiner { .. } => {
                    a.private = Some(self.nodes[i].ledger().clone());
                    self.dark[i] = true;
                }
                _ => {}
            }
            self.log(i, "adversary_start", behavior.name());
        }
        match behavior {
            AdversaryBehavior::Tamper { rehash } => self.tamper(i, rehash),
            AdversaryBehavior::Spoof => {
                for tx in self.spoofed_txs(i) {
                    self.broadcast_raw(i, Payload::SubmitTx(tx));
                }
            }
            AdversaryBehavior::Replay => {
                if let Some(tx) = self.replayed_tx(i) {
                    self.broadcast_raw(i, Payload::SubmitTx(tx));
                }
            }
            AdversaryBehavior::ForkMiner {
                blocks_per_tick,
                release_after_us,
            } => self.fork_mine(i, blocks_per_tick, release_after_us),
            AdversaryBehavior::Flood { .. } | AdversaryBehavior::WithholdVotes => {}
        }
        let next = self.now + self.cfg.consensus.block_interval_us;
        self.schedule(next, Event::AdversaryTick(i));
    }

    fn broadcast_raw(&mut self, i: usize, payload: Payload) {
        let ob = Outbound {
            to: Destination::All,
            message: ConsensusMessage {
                sender_id: self.cfg.robots[i].id.clone(),
                payload,
            },
        };
        self.send(i, ob);
    }

    /// A tx claiming `robot_id` but signed with node `i`'s own key.
    fn forge(&self, i: usize, robot_id: String, seq: u64) -> FovTransaction {
        let mut tx = FovTransaction::unsigned(robot_id, seq, self.now, self.robots[i].view.clone());
        let digest = tx_signing_digest(&tx).expect("valid ids");
        tx.signature = self.nodes[i].identity().sign(digest.as_bytes());
        tx
    }

    fn spoofed_txs(&mut self, i: usize) -> Vec<FovTransaction> {
        let me = self.cfg.robots[i].id.clone();
        let others: Vec<String> = self.nodes[i]
            .rules()
            .acl
            .members()
            .into_iter()
            .filter(|m| *m != me)
            .map(str::to_owned)
            .collect();
        let a = self.adversaries[i].as_mut().expect("adversary");
        a.spoofs += 1;
        let n = a.spoofs;
        let mut out = Vec::new();
        if !others.is_empty() {
            let victim = others[self.adv_rng.gen_range(0..others.len())].clone();
            let seq = self.nodes[i].ledger().committed_seq(&victim).unwrap_or(0) + 1_000 + n;
            out.push(self.forge(i, victim, seq));
        }
        out.push(self.forge(i, format!("GHOST-{me}"), n));
        for tx in &out {
            self.evidence.spoofed.insert(tx_digest(tx).expect("valid ids"));
        }
        out
    }

    fn replayed_tx(&mut self, i: usize) -> Option<FovTransaction> {
        let committed: Vec<&FovTransaction> = self.nodes[i].ledger().blocks().iter().flat_map(|b| &b.txs).collect();
        if committed.is_empty() {
            return None;
        }
        let tx = committed[self.adv_rng.gen_range(0..committed.len())].clone();
        self.evidence.replayed.insert(tx_digest(&tx).expect("committed txs encode"));
        Some(tx)
    }

    /// The proposal node `i` would have made, plus injected spoofed or
    /// replayed txs, re-mined so only the tx checks can catch it.
    fn malicious_block(&mut self, i: usize, honest: &Block) -> Option<Block> {
        let behavior = self.adversaries[i].as_ref()?.behavior.clone();
        let mut txs = honest.txs.clone();
        match behavior {
            AdversaryBehavior::Spoof => txs.extend(self.spoofed_txs(i)),
            AdversaryBehavior::Replay => txs.extend(self.replayed_tx(i)),
            _ => return None,
        }
        let parent = self.nodes[i].ledger().tip().header.clone();
        let block = mine_block(
            &parent,
            txs,
            self.nodes[i].identity(),
            honest.header.timestamp_us,
            self.rules.difficulty,
        )
        .ok()?;
        self.evidence.malicious_proposals += 1;
        self.log(i, "malicious_proposal", format!("height {} txs {}", block.header.index, block.txs.len()));
        Some(block)
    }

    fn tamper(&mut self, i: usize, rehash: bool) {
        let me = self.cfg.robots[i].id.clone();
        let mut blocks = self.nodes[i].ledger().blocks().to_vec();
        if blocks.len() < 2 {
            return;
        }
        let candidates: Vec<(usize, usize)> = blocks
            .iter()
            .enumerate()
            .skip(1)
            .flat_map(|(k, b)| b.txs.iter().enumerate().filter(|(_, t)| t.robot_id != me).map(move |(t, _)| (k, t)))
            .collect();
        let detail;
        if candidates.is_empty() {
            let k = self.adv_rng.gen_range(1..blocks.len());
            blocks[k].header.timestamp_us ^= 1;
            detail = format!("header of block {k}");
        } else {
            let (k, t) = candidates[self.adv_rng.gen_range(0..candidates.len())];
            let forged = LandmarkId::new_unchecked("FORGED");
            blocks[k].txs[t].view.insert(self.adv_rng.gen_range(0..6), forged);
            self.evidence.tampered.insert(tx_digest(&blocks[k].txs[t]).expect("encodes"));
            if rehash {
                let id = self.nodes[i].identity().clone();
                for j in k..blocks.len() {
                    let parent = blocks[j - 1].header.clone();
                    let ts = blocks[j].header.timestamp_us;
                    let txs = std::mem::take(&mut blocks[j].txs);
                    blocks[j] = mine_block(&parent, txs, &id, ts, self.rules.difficulty).expect("difficulty within cap");
                }
                let parent = blocks.last().expect("non-empty").header.clone();
                blocks.push(mine_block(&parent, Vec::new(), &id, self.now, self.rules.difficulty).expect("difficulty within cap"));
            }
            detail = format!("tx {t} of block {k}, rehash {rehash}");
        }
        self.evidence.tampered_chains_sent += 1;
        self.log(i, "tamper", detail);
        self.broadcast_raw(i, Payload::ChainResponse(blocks));
    }

    fn fork_mine(&mut self, i: usize, per_tick: u32, release_after_us: u64) {
        let now = self.now;
        let a = self.adversaries[i].as_mut().expect("adversary");
        if a.released {
            return;
        }
        let mut private = a.private.take().expect("started fork miner has a branch");
        if now >= a.start_us + release_after_us {
            a.released = true;
            self.dark[i] = false;
            let blocks = private.blocks().to_vec();
            let tip = (blocks.len(), private.tip_hash());
            self.evidence.forks_published.push(tip);
            self.safety.tips_seen.push(tip);
            self.log(i, "fork_release", format!("len {}", blocks.len()));
            let me = self.cfg.robots[i].id.clone();
            self.nodes[i].on_chain_response(&me, blocks.clone(), now);
            self.after_node(i, Vec::new());
            self.broadcast_raw(i, Payload::ChainResponse(blocks));
            return;
        }
        let id = self.nodes[i].identity().clone();
        for k in 0..per_tick {
            let parent = private.tip().header.clone();
            let b = mine_block(&parent, Vec::new(), &id, now + k as u64, self.rules.difficulty).expect("difficulty within cap");
            private.apply_block(b, &self.rules).expect("own branch is valid");
        }
        self.adversaries[i].as_mut().expect("adversary").private = Some(private);
    }

    fn on_flood_tick(&mut self, i: usize) {
        if self.settling {
            return;
        }
        let Some(AdversaryBehavior::Flood { rate_multiplier }) = self.adversaries[i].as_ref().map(|a| a.behavior.clone()) else {
            return;
        };
        let seq = self.robots[i].seq + 1;
        self.robots[i].seq = seq;
        self.evidence.flood_txs += 1;
        match self.publish(i, seq) {
            Some(outs) => self.after_node(i, outs),
            None => {
                self.after_node(i, Vec::new());
                let id = self.nodes[i].identity().clone();
                let tx = FovTransaction::unsigned(id.robot_id.clone(), seq, self.now, self.robots[i].view.clone());
                if let Ok(tx) = sign_tx(&id, tx) {
                    self.submitted.insert((id.robot_id, seq), self.now);
                    self.broadcast_raw(i, Payload::SubmitTx(tx));
                }
            }
        }
        let period = (self.cfg.robots[i].sense_period_us / rate_multiplier as u64).max(1);
        self.schedule(self.now + period, Event::FloodTick(i));
    }

    // ---- results ----

    fn finish(mut self, stopped_at: u64) -> RunOutput {
        for &i in &self.honest {
            if let Err(f) = verify_chain(self.nodes[i].ledger().blocks(), &self.rules) {
                self.safety.violations.push(format!("{} ends with an invalid chain: {f}", self.cfg.robots[i].id));
            }
        }
        let reference = self.nodes[self.reference].ledger();
        let mut tx_convergence = Vec::new();
        for tx in reference.blocks().iter().flat_map(|b| &b.txs) {
            let key = (tx.robot_id.clone(), tx.seq);
            let (Some(seen), Some(&sent)) = (self.first_seen.get(&key), self.submitted.get(&key)) else {
                continue;
            };
            if self.honest.iter().all(|h| seen.contains_key(h)) {
                let last = self.honest.iter().map(|h| seen[h]).max().unwrap_or(sent);
                tx_convergence.push(TxConvergence {
                    robot_id: key.0,
                    seq: key.1,
                    convergence_us: last.saturating_sub(sent),
                });
            }
        }
        let mut receipts = ReceiptAudit::default();
        for &h in &self.honest {
            for r in self.nodes[h].audit_log().receipts() {
                receipts.total += 1;
                if !verify_receipt(r, &self.rules.acl) {
                    receipts.invalid += 1;
                }
            }
        }
        for tx in reference.blocks().iter().flat_map(|b| &b.txs) {
            receipts.committed += 1;
            let digest = tx_digest(tx).expect("committed txs encode");
            if self.honest.iter().any(|&h| self.nodes[h].audit_log().count_for(&digest) > 0) {
                receipts.committed_with_receipt += 1;
            }
        }
        let mission = self.mission.take().map(|m| {
            let requester = self.cfg.robots[m.robot].id.clone();
            MissionReport {
                requester,
                blockchain_enabled: m.bc,
                success: matches!(m.outcome, Some(Ok(()))),
                failure: m.outcome.and_then(Result::err),
                mission_time_us: m.time_us,
                plans: m.plans,
                traversed: m.traversed,
                distance_m: m.distance,
                final_position: self.robots[m.robot].pose.point(),
                graph_edges: m.graph_edges.unwrap_or_default(),
            }
        });
        let metrics = MetricsRecord {
            scenario: self.cfg.name.clone(),
            seed: self.cfg.seed,
            bc_enabled: mission.as_ref().is_none_or(|m| m.blockchain_enabled),
            robot: mission.as_ref().map_or_else(|| "-".to_owned(), |m| m.requester.clone()),
            mission_success: mission.as_ref().is_some_and(|m| m.success),
            mission_time_us: mission.as_ref().map_or(stopped_at, |m| m.mission_time_us),
            hops: mission.as_ref().map_or(0, |m| m.traversed.len()),
            distance_m: mission.as_ref().map_or(0.0, |m| m.distance_m),
            blocks_committed: reference.len() - 1,
            msgs_sent: self.msgs_sent,
            convergence_us: tx_convergence.iter().map(|c| c.convergence_us).collect(),
            ledger_update_wall_ns: None,
            retrieval_wall_ns: None,
            ledger_bytes: reference.encoded_bytes(),
            validations_performed: self.honest.iter().map(|&i| self.nodes[i].validations()).sum(),
        };
        let chains = self
            .nodes
            .iter()
            .map(|n| (n.node_id().to_owned(), n.ledger().blocks().to_vec()))
            .collect();
        RunOutput {
            metrics,
            trace: self.trace,
            chains,
            rules: self.rules,
            honest: self.honest.iter().map(|&i| self.cfg.robots[i].id.clone()).collect(),
            reference_node: self.cfg.robots[self.reference].id.clone(),
            mission,
            safety: self.safety,
            evidence: self.evidence,
            tx_convergence,
            receipts,
            stopped_at_us: stopped_at,
        }
    }
}

/// Remaining legs from waypoint `next` on are still backed by the views:
/// each waypoint is seen by the robots on both sides of its hop (the
/// requester excepted for the leg it is driving), and the last robot still
/// sees the goal.
pub fn plan_still_valid(plan: &LandmarkChain, next: usize, views: &BTreeMap<String, PanoramicView>) -> bool {
    let n = plan.waypoints.len();
    let sees = |r: &str, l: &LandmarkId| views.get(r).is_some_and(|v| v.contains(l));
    (next..n).all(|i| {
        let w = &plan.waypoints[i];
        (i == next || sees(&plan.via_robots[i], w)) && (i + 1 >= n || sees(&plan.via_robots[i + 1], w))
    })
}
