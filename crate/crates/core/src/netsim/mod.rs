//! Deterministic discrete-event simulation of a robot team.
//!
//! One seeded run drives every robot's sensing, its consensus node, the
//! lossy network between nodes, any adversaries and the homing mission.
//! Time is simulated in integer microseconds; the only wall-clock
//! measurements live in [`bench`].

pub mod attack;
pub mod bench;
pub mod compare;
pub mod config;
pub mod metrics;
pub mod sim;

pub use attack::{run_attack, AttackReport, Verdict};
pub use bench::{bench_ledger, BenchRow};
pub use compare::{compare_missions, CompareReport};
pub use config::{AdversaryBehavior, AdversaryConfig, MissionConfig, ScenarioConfig};
pub use metrics::{metrics_csv, MetricsRecord, Summary};
pub use sim::{run_scenario, MissionReport, RunOutput};
