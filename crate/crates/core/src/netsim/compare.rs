//! Paired missions with the ledger on and off.

use serde::{Deserialize, Serialize};

use super::config::{MissionConfig, ScenarioConfig};
use super::sim::{run_scenario, RunOutput};

pub const CAVEAT: &str = "mission times are simulated; absolute values are not comparable with \
                          measurements taken on physical robots or a 3-D simulator";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MissionTime {
    pub robot: String,
    pub replication: u32,
    pub seed: u64,
    pub bc_enabled: bool,
    pub success: bool,
    pub mission_time_us: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotOverhead {
    pub robot: String,
    pub mean_bc_us: Option<f64>,
    pub mean_no_bc_us: Option<f64>,
    pub delta: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub runs: Vec<MissionTime>,
    pub per_robot: Vec<RobotOverhead>,
    /// `(t_bc − t_no_bc) / t_no_bc` over the mean of all runs.
    pub delta: Option<f64>,
    pub threshold: f64,
    /// False when any mission failed.
    pub comparable: bool,
    pub within_threshold: bool,
    pub caveat: String,
}

fn mean(v: impl Iterator<Item = u64>) -> Option<f64> {
    let v: Vec<u64> = v.collect();
    (!v.is_empty()).then(|| v.iter().sum::<u64>() as f64 / v.len() as f64)
}

/// The configs `compare_missions` runs, in report order: for each requester
/// and replication, ledger on then off. Replication `r` uses `seed + r`.
pub fn comparison_configs(cfg: &ScenarioConfig) -> Vec<(MissionTime, ScenarioConfig)> {
    let base_mission = cfg.mission.clone().unwrap_or_else(|| MissionConfig {
        requester: cfg.robots[0].id.clone(),
        blockchain_enabled: true,
        patience_us: 30_000_000,
        compare: None,
    });
    let compare = base_mission.compare.clone();
    let mut requesters = compare.as_ref().map(|c| c.requesters.clone()).unwrap_or_default();
    if requesters.is_empty() {
        requesters.push(base_mission.requester.clone());
    }
    let replications = compare.as_ref().map_or(2, |c| c.replications);
    let mut out = Vec::new();
    for robot in &requesters {
        for r in 0..replications {
            for bc in [true, false] {
                let mut c = cfg.clone();
                c.seed = cfg.seed.wrapping_add(r as u64);
                c.mission = Some(MissionConfig {
                    requester: robot.clone(),
                    blockchain_enabled: bc,
                    compare: None,
                    ..base_mission.clone()
                });
                let key = MissionTime {
                    robot: robot.clone(),
                    replication: r,
                    seed: c.seed,
                    bc_enabled: bc,
                    success: false,
                    mission_time_us: 0,
                };
                out.push((key, c));
            }
        }
    }
    out
}

/// Runs every paired mission (in parallel; runs share nothing) and reports
/// the relative overhead.
pub fn compare_missions(cfg: &ScenarioConfig) -> (CompareReport, Vec<RunOutput>) {
    let plan = comparison_configs(cfg);
    let outputs: Vec<RunOutput> = std::thread::scope(|s| {
        let handles: Vec<_> = plan.iter().map(|(_, c)| s.spawn(move || run_scenario(c))).collect();
        handles.into_iter().map(|h| h.join().expect("simulation thread")).collect()
    });
    let runs: Vec<MissionTime> = plan
        .iter()
        .zip(&outputs)
        .map(|((key, _), out)| {
            let m = out.mission.as_ref().expect("comparison runs have a mission");
            MissionTime {
                success: m.success,
                mission_time_us: m.mission_time_us,
                ..key.clone()
            }
        })
        .collect();
    let comparable = runs.iter().all(|r| r.success);
    let mut robots: Vec<String> = runs.iter().map(|r| r.robot.clone()).collect();
    robots.dedup();
    let times = |robot: Option<&str>, bc: bool| {
        mean(
            runs.iter()
                .filter(|r| r.bc_enabled == bc && r.success && robot.is_none_or(|x| x == r.robot))
                .map(|r| r.mission_time_us),
        )
    };
    let delta_of = |bc: Option<f64>, no: Option<f64>| match (bc, no) {
        (Some(b), Some(n)) if n > 0.0 && comparable => Some((b - n) / n),
        _ => None,
    };
    let per_robot = robots
        .iter()
        .map(|r| {
            let (b, n) = (times(Some(r), true), times(Some(r), false));
            RobotOverhead {
                robot: r.clone(),
                mean_bc_us: b,
                mean_no_bc_us: n,
                delta: delta_of(b, n),
            }
        })
        .collect();
    let delta = delta_of(times(None, true), times(None, false));
    let threshold = cfg
        .mission
        .as_ref()
        .and_then(|m| m.compare.as_ref())
        .map_or(0.05, |c| c.overhead_threshold);
    let report = CompareReport {
        runs,
        per_robot,
        delta,
        threshold,
        comparable,
        within_threshold: delta.is_some_and(|d| d <= threshold),
        caveat: CAVEAT.into(),
    };
    (report, outputs)
}
