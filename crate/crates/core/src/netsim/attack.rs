//! Adversary runs judged per STRIDE category.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::config::{AdversaryBehavior, ScenarioConfig};
use super::sim::{run_scenario, RunOutput};
use crate::acl::Role;
use crate::chain::compare_valid_chains;
use crate::types::{tx_digest, Block};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub category: String,
    pub behavior: String,
    /// `None` when the category is not exercised by this run.
    pub held: Option<bool>,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct AttackReport {
    pub output: RunOutput,
    pub verdicts: Vec<Verdict>,
    /// The same scenario without adversaries, run for paired comparisons.
    pub baseline: Option<RunOutput>,
}

impl AttackReport {
    pub fn all_held(&self) -> bool {
        self.verdicts.iter().all(|v| v.held != Some(false))
    }
}

fn honest_chains(out: &RunOutput) -> impl Iterator<Item = (&str, &[Block])> {
    out.honest.iter().map(move |h| (h.as_str(), out.chains[h].as_slice()))
}

fn count_digests(out: &RunOutput, wanted: &BTreeSet<crate::codec::Hash512>) -> BTreeMap<String, usize> {
    honest_chains(out)
        .map(|(id, chain)| {
            let n = chain
                .iter()
                .flat_map(|b| &b.txs)
                .filter(|t| tx_digest(t).is_ok_and(|d| wanted.contains(&d)))
                .count();
            (id.to_owned(), n)
        })
        .collect()
}

fn mean_honest_convergence(out: &RunOutput, attackers: &BTreeSet<String>) -> Option<f64> {
    let v: Vec<u64> = out
        .tx_convergence
        .iter()
        .filter(|c| !attackers.contains(&c.robot_id))
        .map(|c| c.convergence_us)
        .collect();
    (!v.is_empty()).then(|| v.iter().sum::<u64>() as f64 / v.len() as f64)
}

/// Runs the scenario and checks the honest invariant for each behavior
/// present. Flood additionally runs the adversary-free twin to compare
/// honest convergence.
pub fn run_attack(cfg: &ScenarioConfig) -> AttackReport {
    let output = run_scenario(cfg);
    let attackers: BTreeSet<String> = cfg.adversaries.iter().map(|a| a.node.clone()).collect();
    let mut kinds: BTreeMap<&'static str, (&AdversaryBehavior, Vec<String>)> = BTreeMap::new();
    for a in &cfg.adversaries {
        kinds.entry(a.behavior.name()).or_insert((&a.behavior, Vec::new())).1.push(a.node.clone());
    }
    let safe = output.safety.violations.is_empty();
    let safety_note = if safe {
        "honest chains valid throughout".to_owned()
    } else {
        format!("violations: {}", output.safety.violations.join("; "))
    };
    let mut verdicts = Vec::new();
    let mut baseline = None;

    for (name, (behavior, nodes)) in &kinds {
        let (held, detail) = match behavior {
            AdversaryBehavior::Tamper { .. } => {
                let hits: usize = count_digests(&output, &output.evidence.tampered).values().sum();
                (
                    safe && hits == 0,
                    format!(
                        "{} tampered chains gossiped, {hits} tampered txs in honest chains; {safety_note}",
                        output.evidence.tampered_chains_sent
                    ),
                )
            }
            AdversaryBehavior::Spoof => {
                let hits: usize = count_digests(&output, &output.evidence.spoofed).values().sum();
                (
                    safe && hits == 0,
                    format!(
                        "{} spoofed txs sent, {} malicious proposals, {hits} committed; {safety_note}",
                        output.evidence.spoofed.len(),
                        output.evidence.malicious_proposals
                    ),
                )
            }
            AdversaryBehavior::Replay => {
                let mut dupes = 0;
                for (_, chain) in honest_chains(&output) {
                    let mut seen = BTreeSet::new();
                    for t in chain.iter().flat_map(|b| &b.txs) {
                        if !seen.insert((t.robot_id.as_str(), t.seq)) {
                            dupes += 1;
                        }
                    }
                }
                (
                    safe && dupes == 0,
                    format!(
                        "{} distinct txs replayed, {dupes} duplicate commits; {safety_note}",
                        output.evidence.replayed.len()
                    ),
                )
            }
            AdversaryBehavior::Flood { .. } => {
                let limit = cfg.consensus.max_txs_per_robot_per_block as usize;
                let occupancy = honest_chains(&output)
                    .flat_map(|(_, c)| c.iter())
                    .map(|b| b.txs.iter().filter(|t| nodes.contains(&t.robot_id)).count())
                    .max()
                    .unwrap_or(0);
                let members = output.rules.acl.member_count();
                let mempool_cap = members * cfg.consensus.max_pending_per_robot as usize;
                let mut twin = cfg.clone();
                twin.adversaries.clear();
                let base = run_scenario(&twin);
                let attacked = mean_honest_convergence(&output, &attackers);
                let calm = mean_honest_convergence(&base, &attackers);
                let ratio = match (attacked, calm) {
                    (Some(a), Some(c)) if c > 0.0 => Some(a / c),
                    _ => None,
                };
                baseline = Some(base);
                let ok = safe
                    && occupancy <= limit
                    && output.safety.max_honest_mempool <= mempool_cap
                    && ratio.is_some_and(|r| r <= 2.0);
                (
                    ok,
                    format!(
                        "{} flood txs; max attacker txs per block {occupancy} (limit {limit}); \
                         max honest mempool {} (cap {mempool_cap}); honest convergence ratio {}; {safety_note}",
                        output.evidence.flood_txs,
                        output.safety.max_honest_mempool,
                        ratio.map_or("n/a".to_owned(), |r| format!("{r:.3}"))
                    ),
                )
            }
            AdversaryBehavior::WithholdVotes => {
                let members = output.rules.acl.member_count();
                let required = cfg.consensus.required_votes(members);
                let honest_voters = members - nodes.len();
                let stalled = honest_voters < required;
                (
                    safe,
                    format!(
                        "{} of {members} members withhold; quorum {} {}; {} commits after start; {safety_note}",
                        nodes.len(),
                        required,
                        if stalled { "unreachable" } else { "reachable" },
                        output.safety.commits_after_attack
                    ),
                )
            }
            AdversaryBehavior::ForkMiner { .. } => {
                let (agree, best) = converged_to_best(&output);
                (
                    safe && agree && best,
                    format!(
                        "{} private branches published; honest agreement {agree}; longest valid {best}; {safety_note}",
                        output.evidence.forks_published.len()
                    ),
                )
            }
        };
        verdicts.push(Verdict {
            category: behavior.category().into(),
            behavior: (*name).into(),
            held: Some(held),
            detail,
        });
    }

    let r = &output.receipts;
    verdicts.push(Verdict {
        category: "Repudiation".into(),
        behavior: "receipts".into(),
        held: Some(r.invalid == 0),
        detail: format!(
            "{} receipts, {} invalid; {} of {} committed txs hold a peer receipt",
            r.total, r.invalid, r.committed_with_receipt, r.committed
        ),
    });
    let observers: BTreeSet<&str> = cfg.robots.iter().filter(|r| r.role == Role::Observer).map(|r| r.id.as_str()).collect();
    verdicts.push(if observers.is_empty() {
        Verdict {
            category: "Elevation of privilege".into(),
            behavior: "role check".into(),
            held: None,
            detail: "no observer-role robots in this scenario".into(),
        }
    } else {
        let leaked = honest_chains(&output)
            .flat_map(|(_, c)| c.iter().flat_map(|b| &b.txs))
            .filter(|t| observers.contains(t.robot_id.as_str()))
            .count();
        Verdict {
            category: "Elevation of privilege".into(),
            behavior: "role check".into(),
            held: Some(leaked == 0),
            detail: format!("{leaked} observer txs committed"),
        }
    });
    verdicts.push(Verdict {
        category: "Information disclosure".into(),
        behavior: "-".into(),
        held: None,
        detail: "not modeled: views are shared with every member".into(),
    });

    AttackReport {
        output,
        verdicts,
        baseline,
    }
}

/// All honest nodes hold the same chain, and no chain any honest node held
/// or any adversary published beats it under the fork-choice rule.
pub fn converged_to_best(out: &RunOutput) -> (bool, bool) {
    let mut chains = honest_chains(out).map(|(_, c)| c);
    let Some(first) = chains.next() else { return (true, true) };
    let agree = chains.all(|c| c == first);
    let tip = first.last().expect("chains hold genesis").hash();
    let best = out
        .safety
        .tips_seen
        .iter()
        .all(|&(len, h)| first.len() > len || (first.len() == len && tip <= h));
    (agree, best && honest_chains(out).all(|(_, c)| compare_valid_chains(first, c).is_ge()))
}
