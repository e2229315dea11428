use serde::{Deserialize, Serialize};

pub const METRICS_CSV_HEADER: [&str; 12] = [
    "scenario",
    "seed",
    "bc_enabled",
    "robot",
    "mission_time_us",
    "hops",
    "distance_m",
    "blocks",
    "msgs",
    "mean_convergence_us",
    "ledger_bytes",
    "validations",
];

/// Order statistics of a wall-clock sample, in nanoseconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub samples: usize,
    pub median_ns: f64,
    pub mean_ns: f64,
    pub min_ns: f64,
    pub max_ns: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        Some(Summary {
            samples: n,
            median_ns: median,
            mean_ns: v.iter().sum::<f64>() / n as f64,
            min_ns: v[0],
            max_ns: v[n - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub scenario: String,
    pub seed: u64,
    pub bc_enabled: bool,
    /// Mission requester, or `-` for runs without a mission.
    pub robot: String,
    pub mission_success: bool,
    /// Time of goal capture, or the time the run stopped.
    pub mission_time_us: u64,
    /// Waypoints actually reached.
    pub hops: usize,
    pub distance_m: f64,
    pub blocks_committed: usize,
    pub msgs_sent: u64,
    /// Submission to inclusion on every honest node, one entry per tx in the
    /// reference chain that every honest node holds.
    pub convergence_us: Vec<u64>,
    pub ledger_update_wall_ns: Option<Summary>,
    pub retrieval_wall_ns: Option<Summary>,
    /// Encoded size of the reference chain.
    pub ledger_bytes: usize,
    /// Signature and block checks performed by honest nodes.
    pub validations_performed: u64,
}

impl MetricsRecord {
    pub fn mean_convergence_us(&self) -> f64 {
        if self.convergence_us.is_empty() {
            0.0
        } else {
            self.convergence_us.iter().sum::<u64>() as f64 / self.convergence_us.len() as f64
        }
    }

    pub fn csv_row(&self) -> [String; 12] {
        [
            self.scenario.clone(),
            self.seed.to_string(),
            self.bc_enabled.to_string(),
            self.robot.clone(),
            self.mission_time_us.to_string(),
            self.hops.to_string(),
            format!("{:.3}", self.distance_m),
            self.blocks_committed.to_string(),
            self.msgs_sent.to_string(),
            format!("{:.1}", self.mean_convergence_us()),
            self.ledger_bytes.to_string(),
            self.validations_performed.to_string(),
        ]
    }
}

pub fn metrics_csv<'a>(records: impl IntoIterator<Item = &'a MetricsRecord>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(METRICS_CSV_HEADER).expect("in-memory write");
    for r in records {
        w.write_record(r.csv_row()).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_median() {
        assert_eq!(Summary::of(&[3.0, 1.0, 2.0]).unwrap().median_ns, 2.0);
        assert_eq!(Summary::of(&[4.0, 1.0, 2.0, 3.0]).unwrap().median_ns, 2.5);
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn csv_quotes_awkward_ids() {
        let r = MetricsRecord {
            scenario: "a,b".into(),
            seed: 1,
            bc_enabled: true,
            robot: "R1".into(),
            mission_success: true,
            mission_time_us: 5,
            hops: 3,
            distance_m: 1.0,
            blocks_committed: 2,
            msgs_sent: 10,
            convergence_us: vec![10, 20],
            ledger_update_wall_ns: None,
            retrieval_wall_ns: None,
            ledger_bytes: 100,
            validations_performed: 7,
        };
        let text = metrics_csv([&r]);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), METRICS_CSV_HEADER.join(","));
        assert_eq!(lines.next().unwrap(), "\"a,b\",1,true,R1,5,3,1.000,2,10,15.0,100,7");
    }
}
