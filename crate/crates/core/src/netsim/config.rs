//! Scenario files: JSON in, validated [`ScenarioConfig`] out.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::acl::{Acl, RobotIdentity, Role};
use crate::chain::ChainRules;
use crate::consensus::ConsensusParams;
use crate::error::ConfigError;
use crate::types::LandmarkId;
use crate::world::{Pose, World};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub seed: u64,
    pub world: World,
    pub robots: Vec<RobotConfig>,
    #[serde(default)]
    pub consensus: ConsensusParams,
    #[serde(default)]
    pub transport: TransportConfig,
    #[serde(default)]
    pub adversaries: Vec<AdversaryConfig>,
    #[serde(default)]
    pub mission: Option<MissionConfig>,
    /// Scheduled changes to the world, e.g. a landmark disappearing.
    #[serde(default)]
    pub events: Vec<WorldEvent>,
    pub duration_us: u64,
    #[serde(default)]
    pub sim: SimParams,
}

fn default_name() -> String {
    "scenario".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    pub id: String,
    pub start: Pose,
    /// m/s
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default = "default_sense_period")]
    pub sense_period_us: u64,
    #[serde(default = "default_role")]
    pub role: Role,
    /// Random walk at `speed` instead of standing still (non-requesters only).
    #[serde(default)]
    pub wander: bool,
}

fn default_speed() -> f64 {
    1.0
}

fn default_sense_period() -> u64 {
    500_000
}

fn default_role() -> Role {
    Role::Member
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    /// Uniform one-way latency bounds `[min, max]`.
    pub latency_us: [u64; 2],
    pub drop_probability: f64,
    pub partitions: Vec<Partition>,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            latency_us: [2_000, 20_000],
            drop_probability: 0.0,
            partitions: Vec::new(),
        }
    }
}

/// While active, messages only flow inside a group. Nodes not listed in
/// any group form one more group of their own.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partition {
    pub start_us: u64,
    pub end_us: u64,
    pub groups: Vec<Vec<String>>,
}

impl Partition {
    fn group_of(&self, id: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.iter().any(|m| m == id))
    }

    pub fn separates(&self, a: &str, b: &str, now_us: u64) -> bool {
        (self.start_us..self.end_us).contains(&now_us) && self.group_of(a) != self.group_of(b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdversaryConfig {
    pub node: String,
    #[serde(default)]
    pub start_us: u64,
    pub behavior: AdversaryBehavior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AdversaryBehavior {
    /// Rewrites another robot's committed view and gossips the chain. With
    /// `rehash` every later block is re-mined and re-signed and one more
    /// block is appended, so the forgery is longer than the honest chain.
    Tamper {
        #[serde(default = "yes")]
        rehash: bool,
    },
    /// Signs txs under other members' ids and under ids outside the ACL.
    Spoof,
    /// Resubmits committed txs.
    Replay,
    /// Submits own txs at `rate_multiplier` times the sensing rate.
    Flood {
        #[serde(default = "default_flood_rate")]
        rate_multiplier: u32,
    },
    WithholdVotes,
    /// Goes silent, mines a private branch, then publishes it.
    ForkMiner {
        #[serde(default = "default_fork_rate")]
        blocks_per_tick: u32,
        #[serde(default = "default_release")]
        release_after_us: u64,
    },
}

fn yes() -> bool {
    true
}

fn default_flood_rate() -> u32 {
    100
}

fn default_fork_rate() -> u32 {
    2
}

fn default_release() -> u64 {
    4_000_000
}

impl AdversaryBehavior {
    pub fn name(&self) -> &'static str {
        match self {
            AdversaryBehavior::Tamper { .. } => "tamper",
            AdversaryBehavior::Spoof => "spoof",
            AdversaryBehavior::Replay => "replay",
            AdversaryBehavior::Flood { .. } => "flood",
            AdversaryBehavior::WithholdVotes => "withhold_votes",
            AdversaryBehavior::ForkMiner { .. } => "fork_miner",
        }
    }

    /// STRIDE category the behavior exercises.
    pub fn category(&self) -> &'static str {
        match self {
            AdversaryBehavior::Tamper { .. } | AdversaryBehavior::ForkMiner { .. } => "Tampering",
            AdversaryBehavior::Spoof | AdversaryBehavior::Replay => "Spoofing",
            AdversaryBehavior::Flood { .. } | AdversaryBehavior::WithholdVotes => "Denial of service",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionConfig {
    pub requester: String,
    #[serde(default = "yes")]
    pub blockchain_enabled: bool,
    /// Give up when no plan exists and nothing new was learned for this long.
    #[serde(default = "default_patience")]
    pub patience_us: u64,
    #[serde(default)]
    pub compare: Option<CompareConfig>,
}

fn default_patience() -> u64 {
    30_000_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    /// Defaults to the mission requester alone.
    #[serde(default)]
    pub requesters: Vec<String>,
    #[serde(default = "default_replications")]
    pub replications: u32,
    #[serde(default = "default_threshold")]
    pub overhead_threshold: f64,
}

fn default_replications() -> u32 {
    2
}

fn default_threshold() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldEvent {
    pub at_us: u64,
    pub remove_landmark: LandmarkId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub motion_step_us: u64,
    pub capture_radius_m: f64,
    /// Message-only phase after the run: no sensing, motion or proposals,
    /// lossless links, and a chain sync so honest nodes can converge.
    pub settle_us: u64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            motion_step_us: 100_000,
            capture_radius_m: 0.5,
            settle_us: 10_000_000,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = if overrides.is_empty() {
            let de = &mut serde_json::Deserializer::from_str(text);
            serde_path_to_error::deserialize(de).map_err(path_error)?
        } else {
            let mut value: Value = serde_json::from_str(text).map_err(|source| ConfigError::Json {
                context: "scenario".into(),
                source,
            })?;
            for o in overrides {
                apply_override(&mut value, o)?;
            }
            serde_path_to_error::deserialize(value).map_err(path_error)?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, overrides)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn robot(&self, id: &str) -> Option<&RobotConfig> {
        self.robots.iter().find(|r| r.id == id)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        self.world.validate().map_err(ConfigError::Invalid)?;
        self.consensus.validate().map_err(ConfigError::Invalid)?;
        if self.robots.is_empty() {
            return bad("at least one robot is required".into());
        }
        let mut ids = BTreeSet::new();
        for r in &self.robots {
            if r.id.is_empty() || r.id.len() > crate::codec::MAX_ID_BYTES {
                return bad(format!("robot id `{}` must be 1..=64 bytes", r.id));
            }
            if !ids.insert(r.id.as_str()) {
                return bad(format!("duplicate robot id `{}`", r.id));
            }
            if !self.world.arena.contains(r.start.point()) || !r.start.heading.is_finite() {
                return bad(format!("robot {} starts outside the arena", r.id));
            }
            if !(r.speed.is_finite() && r.speed >= 0.0) {
                return bad(format!("robot {} speed must be a non-negative number", r.id));
            }
            if r.sense_period_us == 0 {
                return bad(format!("robot {} sense_period_us must be positive", r.id));
            }
        }
        if !self.robots.iter().any(|r| r.role == Role::Member) {
            return bad("at least one robot must be a member".into());
        }
        let t = &self.transport;
        if t.latency_us[0] > t.latency_us[1] {
            return bad("transport.latency_us must be [min, max] with min <= max".into());
        }
        if !(0.0..1.0).contains(&t.drop_probability) {
            return bad("transport.drop_probability must lie in [0, 1)".into());
        }
        for (i, p) in t.partitions.iter().enumerate() {
            if p.start_us >= p.end_us {
                return bad(format!("partition {i}: start_us must precede end_us"));
            }
            for id in p.groups.iter().flatten() {
                if !ids.contains(id.as_str()) {
                    return bad(format!("partition {i}: unknown robot `{id}`"));
                }
            }
        }
        let mut adversarial = BTreeSet::new();
        for a in &self.adversaries {
            match self.robot(&a.node) {
                Some(r) if r.role == Role::Member => {}
                Some(_) => return bad(format!("adversary {} must be a member", a.node)),
                None => return bad(format!("adversary node `{}` is not a robot", a.node)),
            }
            if !adversarial.insert(a.node.as_str()) {
                return bad(format!("node {} has more than one adversary behavior", a.node));
            }
            match a.behavior {
                AdversaryBehavior::Flood { rate_multiplier: 0 } => return bad("flood rate_multiplier must be positive".into()),
                AdversaryBehavior::ForkMiner { blocks_per_tick: 0, .. } => {
                    return bad("fork_miner blocks_per_tick must be positive".into())
                }
                _ => {}
            }
        }
        if let Some(m) = &self.mission {
            if !ids.contains(m.requester.as_str()) {
                return bad(format!("mission requester `{}` is not a robot", m.requester));
            }
            if adversarial.contains(m.requester.as_str()) {
                return bad("the mission requester cannot be an adversary".into());
            }
            if let Some(c) = &m.compare {
                if c.replications == 0 {
                    return bad("compare.replications must be positive".into());
                }
                if !(c.overhead_threshold.is_finite() && c.overhead_threshold >= 0.0) {
                    return bad("compare.overhead_threshold must be non-negative".into());
                }
                for r in &c.requesters {
                    if !ids.contains(r.as_str()) || adversarial.contains(r.as_str()) {
                        return bad(format!("compare requester `{r}` must be an honest robot"));
                    }
                }
            }
        }
        for e in &self.events {
            if !self.world.landmarks.contains_key(&e.remove_landmark) {
                return bad(format!("event removes unknown landmark {}", e.remove_landmark));
            }
            if e.remove_landmark == self.world.goal_landmark {
                return bad("the goal landmark cannot be removed".into());
            }
        }
        if self.duration_us == 0 || self.sim.motion_step_us == 0 {
            return bad("duration_us and sim.motion_step_us must be positive".into());
        }
        if !(self.sim.capture_radius_m.is_finite() && self.sim.capture_radius_m > 0.0) {
            return bad("sim.capture_radius_m must be positive".into());
        }
        Ok(())
    }

    /// Deterministic identities: keys derive from the scenario seed and id.
    pub fn identities(&self) -> Vec<RobotIdentity> {
        self.robots
            .iter()
            .map(|r| RobotIdentity::keygen(r.id.clone(), r.role, RobotIdentity::derived_seed(self.seed, &r.id)))
            .collect()
    }

    pub fn acl(&self) -> Acl {
        Acl::from_identities(&self.identities()).expect("validated ids")
    }

    /// The rules every node enforces, per-block robot quota included.
    pub fn chain_rules(&self) -> ChainRules {
        ChainRules::new(self.acl(), self.consensus.difficulty).with_robot_quota(self.consensus.max_txs_per_robot_per_block)
    }
}

fn path_error(e: serde_path_to_error::Error<serde_json::Error>) -> ConfigError {
    let path = e.path().to_string();
    ConfigError::Json {
        context: format!("field `{path}`"),
        source: e.into_inner(),
    }
}

/// `a.b.0.c=value` where `value` is JSON, or a bare string when it does not
/// parse as JSON.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), ConfigError> {
    let bad = || ConfigError::BadOverride(assignment.to_owned());
    let (key, raw) = assignment.split_once('=').ok_or_else(bad)?;
    if key.is_empty() {
        return Err(bad());
    }
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
    let mut slot = root;
    for part in key.split('.') {
        slot = match slot {
            Value::Object(map) => map.entry(part.to_owned()).or_insert(Value::Null),
            Value::Array(items) => part.parse::<usize>().ok().and_then(|i| items.get_mut(i)).ok_or_else(bad)?,
            Value::Null => {
                *slot = Value::Object(Default::default());
                match slot {
                    Value::Object(map) => map.entry(part.to_owned()).or_insert(Value::Null),
                    _ => unreachable!(),
                }
            }
            _ => return Err(bad()),
        };
    }
    *slot = value;
    Ok(())
}
