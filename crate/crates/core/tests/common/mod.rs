//! Fixtures and independent oracles shared by the integration suites.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::{BTreeMap, BTreeSet};

use bcvh::acl::{sign_tx, Acl, RobotIdentity, Role};
use bcvh::chain::{mine_block, ChainRules};
use bcvh::codec::{Hash512, SignatureBytes};
use bcvh::planner::{build_visibility_graph, plan_landmark_chain, LandmarkChain};
use bcvh::types::{Block, FovTransaction, LandmarkId, PanoramicView};
use rand::seq::SliceRandom;
use rand::Rng;

// ---------------------------------------------------------------- chains

pub struct Fixture {
    pub ids: Vec<RobotIdentity>,
    pub rules: ChainRules,
    pub chain: Vec<Block>,
}

fn random_view(rng: &mut impl Rng) -> PanoramicView {
    let mut v = PanoramicView::empty();
    for _ in 0..rng.gen_range(0..5) {
        v.insert(rng.gen_range(0..6), LandmarkId::new_unchecked(format!("L{}", rng.gen_range(0..12))));
    }
    v
}

/// A valid chain of 2..=6 blocks from 1..=4 robots with random views.
pub fn fixture(rng: &mut impl Rng) -> Fixture {
    let n = rng.gen_range(1..=4);
    let ids: Vec<RobotIdentity> = (0..n)
        .map(|i| RobotIdentity::keygen(format!("R{}", i + 1), Role::Member, rng.gen()))
        .collect();
    let difficulty = rng.gen_range(2..=8);
    let rules = ChainRules::new(Acl::from_identities(&ids).unwrap(), difficulty);
    let mut chain = vec![Block::genesis(rules.acl.digest(), 0)];
    let mut seqs = vec![0u64; n];
    let blocks = rng.gen_range(1..=5);
    for b in 1..=blocks as u64 {
        let mut txs = Vec::new();
        for _ in 0..rng.gen_range(0..=3) {
            let r = rng.gen_range(0..n);
            seqs[r] += rng.gen_range(1..=2);
            let tx = FovTransaction::unsigned(ids[r].robot_id.clone(), seqs[r], b * 1_000 + txs.len() as u64, random_view(rng));
            txs.push(sign_tx(&ids[r], tx).unwrap());
        }
        let proposer = &ids[b as usize % n];
        let block = mine_block(&chain.last().unwrap().header, txs, proposer, b * 1_000_000, difficulty).unwrap();
        chain.push(block);
    }
    Fixture { ids, rules, chain }
}

fn flip_hash(h: &mut Hash512, rng: &mut impl Rng) {
    h.0[rng.gen_range(0..64)] ^= 1 << rng.gen_range(0..8);
}

fn flip_sig(s: &mut SignatureBytes, rng: &mut impl Rng) {
    s.0[rng.gen_range(0..64)] ^= 1 << rng.gen_range(0..8);
}

fn bump(v: &mut u64, rng: &mut impl Rng) {
    *v ^= 1 << rng.gen_range(0..20);
}

/// Applies one random in-place mutation. Returns a description, or `None`
/// when the drawn mutation does not apply to this chain (e.g. a tx field
/// of a block without txs) or leaves it unchanged.
pub fn mutate(chain: &mut Vec<Block>, rng: &mut impl Rng) -> Option<String> {
    let before = chain.clone();
    let bi = rng.gen_range(0..chain.len());
    let kind = rng.gen_range(0..17);
    let desc = {
        let block = &mut chain[bi];
        let has_tx = !block.txs.is_empty();
        let ti = if has_tx { rng.gen_range(0..block.txs.len()) } else { 0 };
        match kind {
            0 => {
                bump(&mut block.header.index, rng);
                "header.index"
            }
            1 => {
                flip_hash(&mut block.header.prev_hash, rng);
                "header.prev_hash"
            }
            2 => {
                flip_hash(&mut block.header.body_digest, rng);
                "header.body_digest"
            }
            3 => {
                bump(&mut block.header.timestamp_us, rng);
                "header.timestamp_us"
            }
            4 => {
                block.header.proposer_id.push('x');
                "header.proposer_id"
            }
            5 => {
                block.header.difficulty ^= 1 << rng.gen_range(0..3);
                "header.difficulty"
            }
            6 => {
                bump(&mut block.header.nonce, rng);
                "header.nonce"
            }
            7 => {
                flip_sig(&mut block.proposer_signature, rng);
                "proposer_signature"
            }
            8 if has_tx => {
                bump(&mut block.txs[ti].seq, rng);
                "tx.seq"
            }
            9 if has_tx => {
                bump(&mut block.txs[ti].timestamp_us, rng);
                "tx.timestamp_us"
            }
            10 if has_tx => {
                let s = rng.gen_range(0..6);
                block.txs[ti].view.insert(s, LandmarkId::new_unchecked("FORGED"));
                "tx.view add"
            }
            11 if has_tx => {
                let sector = block.txs[ti].view.sector_mut(rng.gen_range(0..6));
                let first = sector.iter().next().cloned()?;
                sector.remove(&first);
                "tx.view remove"
            }
            12 if has_tx => {
                flip_sig(&mut block.txs[ti].signature, rng);
                "tx.signature"
            }
            13 if has_tx => {
                block.txs[ti].robot_id = "R9".into();
                "tx.robot_id"
            }
            14 if has_tx => {
                if rng.gen_bool(0.5) {
                    block.txs.remove(ti);
                    "tx removed"
                } else {
                    let dup = block.txs[ti].clone();
                    block.txs.insert(ti, dup);
                    "tx duplicated"
                }
            }
            15 if block.txs.len() >= 2 => {
                block.txs.swap(0, 1);
                "txs swapped"
            }
            16 if bi + 1 < chain.len() => {
                if rng.gen_bool(0.5) {
                    chain.remove(bi);
                    "block removed"
                } else {
                    chain.swap(bi, bi + 1);
                    "blocks swapped"
                }
            }
            _ => return None,
        }
    };
    (*chain != before).then(|| format!("{desc} at block {bi}"))
}

// --------------------------------------------------------------- planner

/// An undirected robot graph plus the robots that see the goal.
#[derive(Clone, Debug)]
pub struct RobotGraph {
    pub n: usize,
    pub adj: Vec<Vec<bool>>,
    pub goal_seers: Vec<bool>,
}

impl RobotGraph {
    pub fn name(i: usize) -> String {
        format!("R{i}")
    }

    /// Latest views realising the graph: one landmark per edge, plus GOAL.
    pub fn views(&self) -> (BTreeMap<String, PanoramicView>, LandmarkId) {
        let goal = LandmarkId::new_unchecked("GOAL");
        let mut views: BTreeMap<String, PanoramicView> = (0..self.n).map(|i| (Self::name(i), PanoramicView::empty())).collect();
        for a in 0..self.n {
            for b in a + 1..self.n {
                if self.adj[a][b] {
                    let id = LandmarkId::new_unchecked(format!("E{a}_{b}"));
                    views.get_mut(&Self::name(a)).unwrap().insert(a % 6, id.clone());
                    views.get_mut(&Self::name(b)).unwrap().insert(b % 6, id);
                }
            }
            if self.goal_seers[a] {
                views.get_mut(&Self::name(a)).unwrap().insert(0, goal.clone());
            }
        }
        (views, goal)
    }

    pub fn random(n: usize, density: f64, rng: &mut impl Rng) -> Self {
        let mut adj = vec![vec![false; n]; n];
        for a in 0..n {
            for b in a + 1..n {
                let e = rng.gen_bool(density);
                adj[a][b] = e;
                adj[b][a] = e;
            }
        }
        let mut goal_seers = vec![false; n];
        let k = rng.gen_range(1..=n.min(3));
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        for &i in &idx[..k] {
            goal_seers[i] = true;
        }
        RobotGraph { n, adj, goal_seers }
    }

    /// Node `n` stands for GOAL; connected means every robot reaches it.
    pub fn connected_with_goal(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack: Vec<usize> = (0..self.n).filter(|&i| self.goal_seers[i]).collect();
        for &s in &stack {
            seen[s] = true;
        }
        while let Some(v) = stack.pop() {
            for w in 0..self.n {
                if self.adj[v][w] && !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.iter().all(|&s| s)
    }
}

/// Oracle 1: the shortest simple path found by enumerating every simple
/// path with DFS. Hops count waypoints, i.e. robots on the path.
pub fn exhaustive_hops(g: &RobotGraph, from: usize) -> Option<usize> {
    fn dfs(g: &RobotGraph, v: usize, depth: usize, on_path: &mut Vec<bool>, best: &mut Option<usize>) {
        if g.goal_seers[v] {
            *best = Some(best.map_or(depth, |b| b.min(depth)));
        }
        for w in 0..g.n {
            if g.adj[v][w] && !on_path[w] {
                on_path[w] = true;
                dfs(g, w, depth + 1, on_path, best);
                on_path[w] = false;
            }
        }
    }
    let mut on_path = vec![false; g.n];
    on_path[from] = true;
    let mut best = None;
    dfs(g, from, 1, &mut on_path, &mut best);
    best
}

/// Oracle 2: Floyd–Warshall over robots plus a GOAL node.
pub fn floyd_hops(g: &RobotGraph) -> Vec<Option<usize>> {
    let n = g.n + 1;
    let inf = usize::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for i in 0..n {
        d[i][i] = 0;
    }
    for a in 0..g.n {
        for b in 0..g.n {
            if g.adj[a][b] {
                d[a][b] = 1;
            }
        }
        if g.goal_seers[a] {
            d[a][g.n] = 1;
            d[g.n][a] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    (0..g.n).map(|i| (d[i][g.n] < inf).then_some(d[i][g.n])).collect()
}

/// Structural validity of a planned chain against the views it came from.
pub fn chain_is_consistent(chain: &LandmarkChain, requester: &str, views: &BTreeMap<String, PanoramicView>, goal: &LandmarkId) -> bool {
    let k = chain.waypoints.len();
    if k == 0 || chain.via_robots.len() != k || chain.via_robots[0] != requester || chain.waypoints[k - 1] != *goal {
        return false;
    }
    let distinct: BTreeSet<_> = chain.via_robots.iter().collect();
    if distinct.len() != k {
        return false;
    }
    (0..k).all(|i| {
        let here = views[&chain.via_robots[i]].contains(&chain.waypoints[i]);
        let there = i + 1 == k || views[&chain.via_robots[i + 1]].contains(&chain.waypoints[i]);
        here && there
    })
}

/// Planner hop counts for every requester, `None` where unreachable.
pub fn planner_hops(g: &RobotGraph) -> Vec<Result<usize, String>> {
    let (views, goal) = g.views();
    let graph = build_visibility_graph(&views, &goal);
    (0..g.n)
        .map(|i| {
            let name = RobotGraph::name(i);
            match plan_landmark_chain(&graph, &name) {
                Ok(c) if chain_is_consistent(&c, &name, &views, &goal) => Ok(c.hops()),
                Ok(c) => Err(format!("inconsistent chain {c:?}")),
                Err(e) => Err(e.to_string()),
            }
        })
        .collect()
}

/// Compares planner and oracle for every requester; returns mismatches.
pub fn planner_mismatches(g: &RobotGraph, oracle: &[Option<usize>]) -> Vec<String> {
    planner_hops(g)
        .into_iter()
        .zip(oracle)
        .enumerate()
        .filter_map(|(i, (p, o))| match (p, o) {
            (Ok(h), Some(e)) if h == *e => None,
            (Err(e), None) if e == "goal unreachable" => None,
            (p, o) => Some(format!("R{i}: planner {p:?}, oracle {o:?} on {g:?}")),
        })
        .collect()
}

/// Every labeled graph on `n` robots (edge subsets x goal-seer subsets).
pub fn for_each_labeled_graph(n: usize, mut f: impl FnMut(&RobotGraph)) {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    for mask in 0u64..(1 << pairs.len()) {
        let mut adj = vec![vec![false; n]; n];
        for (k, &(a, b)) in pairs.iter().enumerate() {
            if mask >> k & 1 == 1 {
                adj[a][b] = true;
                adj[b][a] = true;
            }
        }
        for goals in 1u32..(1 << n) {
            let g = RobotGraph {
                n,
                adj: adj.clone(),
                goal_seers: (0..n).map(|i| goals >> i & 1 == 1).collect(),
            };
            f(&g);
        }
    }
}
