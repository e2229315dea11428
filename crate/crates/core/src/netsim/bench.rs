//! Wall-clock ledger latencies: index update and latest-view retrieval.

use std::hint::black_box;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::Summary;
use crate::acl::{sign_tx, Acl, RobotIdentity, Role};
use crate::chain::{mine_block, ChainRules, DEFAULT_DIFFICULTY};
use crate::ledger::LedgerState;
use crate::types::{FovTransaction, LandmarkId, PanoramicView};
use crate::world::{compute_view, Arena, Point, Pose, World};

pub const RETRIEVAL_PROBES: usize = 1_000;
/// Lookups timed together per probe; one lookup is below timer resolution.
pub const LOOKUPS_PER_PROBE: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub positions: usize,
    pub update_ns: Summary,
    pub retrieval_ns: Summary,
    /// The retrieved view matches the last committed one.
    pub retrieval_correct: bool,
}

fn bench_world(rng: &mut ChaCha8Rng) -> World {
    let arena = Arena {
        width: 130.0,
        height: 180.0,
    };
    let landmarks = (0..60)
        .map(|i| {
            (
                LandmarkId::new_unchecked(format!("L{i:02}")),
                Point::new(rng.gen_range(0.0..arena.width), rng.gen_range(0.0..arena.height)),
            )
        })
        .collect();
    World {
        arena,
        landmarks,
        obstacles: Vec::new(),
        goal_landmark: LandmarkId::new_unchecked("L00"),
        sensor_range: 30.0,
    }
}

/// Commits `n_positions` FOV updates of one robot walking a seeded random
/// path through a single-node chain, timing each `apply_block`, then times
/// latest-view retrieval over [`RETRIEVAL_PROBES`] probes.
pub fn bench_ledger(n_positions: usize, seed: u64) -> BenchRow {
    assert!(n_positions >= 1, "n_positions must be at least 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let world = bench_world(&mut rng);
    let robot = RobotIdentity::keygen("R1", Role::Member, RobotIdentity::derived_seed(seed, "R1"));
    let rules = ChainRules::new(Acl::from_identities([&robot]).expect("one member"), DEFAULT_DIFFICULTY);
    let mut ledger = LedgerState::new(&rules, 0);
    let mut pose = Pose::new(65.0, 90.0, 0.0);
    let mut update_ns = Vec::with_capacity(n_positions);
    let mut last_view = PanoramicView::empty();

    for seq in 1..=n_positions as u64 {
        let heading = pose.heading + rng.gen_range(-1.0..1.0);
        let x = (pose.x + 2.0 * f64::cos(heading)).clamp(0.0, world.arena.width);
        let y = (pose.y + 2.0 * f64::sin(heading)).clamp(0.0, world.arena.height);
        pose = Pose::new(x, y, heading);
        last_view = compute_view(&world, &pose);
        let tx = sign_tx(&robot, FovTransaction::unsigned("R1", seq, seq * 1_000, last_view.clone())).expect("own id");
        let block = mine_block(&ledger.tip().header, vec![tx], &robot, seq * 1_000, rules.difficulty).expect("difficulty within cap");
        let t = Instant::now();
        ledger.apply_block(block, &rules).expect("own chain is valid");
        update_ns.push(t.elapsed().as_nanos() as f64);
    }

    let mut retrieval_ns = Vec::with_capacity(RETRIEVAL_PROBES);
    for _ in 0..RETRIEVAL_PROBES {
        let t = Instant::now();
        for _ in 0..LOOKUPS_PER_PROBE {
            black_box(ledger.latest_view(black_box("R1")));
        }
        retrieval_ns.push(t.elapsed().as_nanos() as f64 / LOOKUPS_PER_PROBE as f64);
    }
    let retrieval_correct = ledger
        .latest_view("R1")
        .is_some_and(|v| v.seq == n_positions as u64 && v.view == last_view);

    BenchRow {
        positions: n_positions,
        update_ns: Summary::of(&update_ns).expect("n >= 1"),
        retrieval_ns: Summary::of(&retrieval_ns).expect("probes > 0"),
        retrieval_correct,
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["positions", "update_ns_median", "retrieval_ns_median"]).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.positions.to_string(),
            format!("{:.1}", r.update_ns.median_ns),
            format!("{:.2}", r.retrieval_ns.median_ns),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_position_round_trips() {
        let row = bench_ledger(1, 3);
        assert_eq!(row.update_ns.samples, 1);
        assert_eq!(row.retrieval_ns.samples, RETRIEVAL_PROBES);
        assert!(row.retrieval_correct);
    }

    #[test]
    fn csv_has_one_row_per_count() {
        let rows: Vec<_> = [1, 2].iter().map(|&n| bench_ledger(n, 1)).collect();
        let text = bench_csv(&rows);
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("positions,update_ns_median,retrieval_ns_median\n"));
    }
}
