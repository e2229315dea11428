//! Visibility graphs over shared landmarks and landmark-chain planning.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::types::{LandmarkId, PanoramicView};

/// Decides which landmarks two views have in common. Exact id equality is
/// the only implementation here; a visual similarity matcher would plug in
/// through this trait.
pub trait LandmarkMatcher {
    fn common(&self, a: &PanoramicView, b: &PanoramicView) -> BTreeSet<LandmarkId>;
    fn sees(&self, view: &PanoramicView, landmark: &LandmarkId) -> bool;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ExactMatcher;

impl LandmarkMatcher for ExactMatcher {
    fn common(&self, a: &PanoramicView, b: &PanoramicView) -> BTreeSet<LandmarkId> {
        common_landmarks(a, b)
    }

    fn sees(&self, view: &PanoramicView, landmark: &LandmarkId) -> bool {
        view.contains(landmark)
    }
}

/// Intersection of the flattened views; sector positions are irrelevant.
pub fn common_landmarks(a: &PanoramicView, b: &PanoramicView) -> BTreeSet<LandmarkId> {
    let fa = a.flatten();
    b.flatten().into_iter().filter(|id| fa.contains(id)).collect()
}

/// Robots plus a distinguished GOAL node. Robot–robot edges carry their
/// shared landmarks; GOAL is adjacent to every robot that sees the goal.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct VisibilityGraph {
    adjacency: BTreeMap<String, BTreeMap<String, BTreeSet<LandmarkId>>>,
    goal_robots: BTreeSet<String>,
    goal_landmark: Option<LandmarkId>,
}

impl VisibilityGraph {
    pub fn new(goal_landmark: LandmarkId) -> Self {
        VisibilityGraph {
            goal_landmark: Some(goal_landmark),
            ..Default::default()
        }
    }

    pub fn add_robot(&mut self, robot: impl Into<String>) {
        self.adjacency.entry(robot.into()).or_default();
    }

    /// Adds `shared` to the edge `a–b`. Empty sets add nothing.
    pub fn connect(&mut self, a: &str, b: &str, shared: impl IntoIterator<Item = LandmarkId>) {
        let shared: BTreeSet<_> = shared.into_iter().collect();
        if shared.is_empty() || a == b {
            return;
        }
        self.add_robot(a);
        self.add_robot(b);
        self.adjacency.get_mut(a).unwrap().entry(b.to_owned()).or_default().extend(shared.iter().cloned());
        self.adjacency.get_mut(b).unwrap().entry(a.to_owned()).or_default().extend(shared);
    }

    pub fn attach_goal(&mut self, robot: &str) {
        self.add_robot(robot);
        self.goal_robots.insert(robot.to_owned());
    }

    pub fn goal_landmark(&self) -> &LandmarkId {
        self.goal_landmark.as_ref().expect("graph built with a goal")
    }

    pub fn robots(&self) -> impl Iterator<Item = &str> {
        self.adjacency.keys().map(String::as_str)
    }

    pub fn contains(&self, robot: &str) -> bool {
        self.adjacency.contains_key(robot)
    }

    pub fn sees_goal(&self, robot: &str) -> bool {
        self.goal_robots.contains(robot)
    }

    pub fn shared(&self, a: &str, b: &str) -> Option<&BTreeSet<LandmarkId>> {
        self.adjacency.get(a)?.get(b)
    }

    pub fn neighbors(&self, robot: &str) -> impl Iterator<Item = (&str, &BTreeSet<LandmarkId>)> {
        self.adjacency
            .get(robot)
            .into_iter()
            .flat_map(|m| m.iter().map(|(k, v)| (k.as_str(), v)))
    }

    /// Edge list as sorted `(a, b)` pairs; GOAL edges use `"GOAL"` as `b`.
    pub fn edge_pairs(&self) -> BTreeSet<(String, String)> {
        let mut out = BTreeSet::new();
        for (a, nbrs) in &self.adjacency {
            for b in nbrs.keys() {
                if a < b {
                    out.insert((a.clone(), b.clone()));
                }
            }
        }
        for r in &self.goal_robots {
            out.insert((r.clone(), GOAL_NODE.to_owned()));
        }
        out
    }
}

pub const GOAL_NODE: &str = "GOAL";

pub fn build_visibility_graph(latest_views: &BTreeMap<String, PanoramicView>, goal_landmark: &LandmarkId) -> VisibilityGraph {
    build_visibility_graph_with(&ExactMatcher, latest_views, goal_landmark)
}

pub fn build_visibility_graph_with(
    matcher: &impl LandmarkMatcher,
    latest_views: &BTreeMap<String, PanoramicView>,
    goal_landmark: &LandmarkId,
) -> VisibilityGraph {
    let mut g = VisibilityGraph::new(goal_landmark.clone());
    let robots: Vec<_> = latest_views.iter().collect();
    for (i, (a, va)) in robots.iter().enumerate() {
        g.add_robot(a.as_str());
        if matcher.sees(va, goal_landmark) {
            g.attach_goal(a);
        }
        for (b, vb) in &robots[i + 1..] {
            g.connect(a, b, matcher.common(va, vb));
        }
    }
    g
}

/// Waypoints to follow and the robots whose shared views produced them.
/// `waypoints[i]` is shared by `via_robots[i]` and `via_robots[i + 1]`,
/// and the last waypoint is the goal seen by the last robot.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandmarkChain {
    pub waypoints: Vec<LandmarkId>,
    pub via_robots: Vec<String>,
}

impl LandmarkChain {
    pub fn hops(&self) -> usize {
        self.waypoints.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PlanError {
    UnknownRequester(String),
    NoPath,
}

impl fmt::Display for PlanError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanError::UnknownRequester(r) => write!(f, "requester `{r}` is not in the graph"),
            PlanError::NoPath => f.write_str("goal unreachable"),
        }
    }
}

impl std::error::Error for PlanError {}

/// Hop distance to GOAL for every robot that can reach it.
fn goal_distances(graph: &VisibilityGraph) -> BTreeMap<&str, usize> {
    let mut dist = BTreeMap::new();
    let mut queue = VecDeque::new();
    for r in &graph.goal_robots {
        dist.insert(r.as_str(), 1);
        queue.push_back(r.as_str());
    }
    while let Some(r) = queue.pop_front() {
        let d = dist[r];
        for (n, _) in graph.neighbors(r) {
            if !dist.contains_key(n) {
                dist.insert(n, d + 1);
                queue.push_back(n);
            }
        }
    }
    dist
}

/// Shortest robot chain from `requester` to GOAL. Among equally short chains
/// the lexicographically smallest robot sequence wins, and each hop uses the
/// smallest shared landmark id.
pub fn plan_landmark_chain(graph: &VisibilityGraph, requester: &str) -> Result<LandmarkChain, PlanError> {
    if !graph.contains(requester) {
        return Err(PlanError::UnknownRequester(requester.to_owned()));
    }
    let dist = goal_distances(graph);
    let mut d = *dist.get(requester).ok_or(PlanError::NoPath)?;
    let mut current = requester;
    let mut chain = LandmarkChain {
        waypoints: Vec::with_capacity(d),
        via_robots: Vec::with_capacity(d),
    };
    loop {
        chain.via_robots.push(current.to_owned());
        if d == 1 {
            chain.waypoints.push(graph.goal_landmark().clone());
            return Ok(chain);
        }
        // neighbors iterate in id order, so the first match is the smallest
        let (next, shared) = graph
            .neighbors(current)
            .find(|(n, _)| dist.get(n) == Some(&(d - 1)))
            .expect("BFS layer has a predecessor");
        chain.waypoints.push(shared.first().expect("edges are non-empty").clone());
        current = next;
        d -= 1;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Topology {
    /// Complete `branching`-ary tree in heap order; robot 0 is the root.
    Tree { branching: usize },
    /// Robot `i` shares one landmark with robot `i + 1`.
    Chain,
    /// Each pair shares a landmark with probability `density`.
    Random { density: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainLengthStats {
    pub robots: usize,
    pub max_hops: usize,
    pub mean_hops: f64,
    /// Hops from robot 0 (tree root, chain head).
    pub root_hops: Option<usize>,
    pub unreachable_fraction: f64,
}

pub fn robot_name(i: usize) -> String {
    format!("R{i:03}")
}

fn edge_landmark(a: usize, b: usize) -> LandmarkId {
    LandmarkId::new(format!("E{}_{}", a.min(b), a.max(b))).expect("short id")
}

/// Builds the synthetic latest-view map for a topology. The goal landmark
/// sits between the goal robot and its tree parent (or chain predecessor),
/// so both of them see it.
pub fn synthetic_views(n: usize, topology: Topology, seed: u64) -> (BTreeMap<String, PanoramicView>, LandmarkId) {
    let goal = LandmarkId::new("GOAL").expect("short id");
    let mut views: BTreeMap<String, PanoramicView> = (0..n).map(|i| (robot_name(i), PanoramicView::empty())).collect();
    let link = |views: &mut BTreeMap<String, PanoramicView>, a: usize, b: usize, id: LandmarkId| {
        views.get_mut(&robot_name(a)).unwrap().insert(0, id.clone());
        views.get_mut(&robot_name(b)).unwrap().insert(0, id);
    };
    match topology {
        Topology::Tree { branching } => {
            let b = branching.max(1);
            let goal_leaf = (0..n).find(|i| b * i + 1 >= n).unwrap_or(0);
            for child in 1..n {
                let parent = (child - 1) / b;
                let id = if child == goal_leaf { goal.clone() } else { edge_landmark(parent, child) };
                link(&mut views, parent, child, id);
            }
            if goal_leaf == 0 {
                views.get_mut(&robot_name(0)).unwrap().insert(0, goal.clone());
            }
        }
        Topology::Chain => {
            for i in 1..n {
                let id = if i == n - 1 { goal.clone() } else { edge_landmark(i - 1, i) };
                link(&mut views, i - 1, i, id);
            }
            if n == 1 {
                views.get_mut(&robot_name(0)).unwrap().insert(0, goal.clone());
            }
        }
        Topology::Random { density } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for a in 0..n {
                for b in a + 1..n {
                    if rng.gen_bool(density.clamp(0.0, 1.0)) {
                        link(&mut views, a, b, edge_landmark(a, b));
                    }
                }
            }
            let g = rng.gen_range(0..n);
            views.get_mut(&robot_name(g)).unwrap().insert(0, goal.clone());
        }
    }
    (views, goal)
}

/// Planner hop counts over every robot as requester on a synthetic topology.
pub fn chain_length_stats(n: usize, topology: Topology, seed: u64) -> ChainLengthStats {
    assert!(n >= 1, "need at least one robot");
    let (views, goal) = synthetic_views(n, topology, seed);
    let graph = build_visibility_graph(&views, &goal);
    let hops: Vec<Option<usize>> = (0..n)
        .map(|i| plan_landmark_chain(&graph, &robot_name(i)).ok().map(|c| c.hops()))
        .collect();
    let reached: Vec<usize> = hops.iter().flatten().copied().collect();
    ChainLengthStats {
        robots: n,
        max_hops: reached.iter().copied().max().unwrap_or(0),
        mean_hops: if reached.is_empty() {
            0.0
        } else {
            reached.iter().sum::<usize>() as f64 / reached.len() as f64
        },
        root_hops: hops[0],
        unreachable_fraction: (n - reached.len()) as f64 / n as f64,
    }
}
