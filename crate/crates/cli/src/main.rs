//! `bcvh`: run scenarios and attacks, benchmark the ledger, verify exported
//! chains and emit golden vectors.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 mission failure,
//! 3 integrity failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bcvh::acl::Acl;
use bcvh::chain::{verify_chain, ChainRules, DEFAULT_DIFFICULTY};
use bcvh::ledger::{blocks_from_jsonl, blocks_to_jsonl};
use bcvh::netsim::bench::bench_csv;
use bcvh::netsim::compare::CompareReport;
use bcvh::netsim::{bench_ledger, compare_missions, metrics_csv, run_attack, run_scenario, RunOutput, ScenarioConfig, Verdict};
use bcvh::vectors::golden_file;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

const EXIT_CONFIG: u8 = 1;
const EXIT_MISSION: u8 = 2;
const EXIT_INTEGRITY: u8 = 3;

#[derive(Parser)]
#[command(name = "bcvh", version, about = "Blockchain-backed visual homing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario (or its ledger on/off comparison) and write outputs.
    Run(ScenarioArgs),
    /// Run a scenario with adversaries and judge each threat category.
    Attack(ScenarioArgs),
    /// Time ledger updates and latest-view retrieval.
    Bench {
        /// Position counts, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [40usize, 200, 500])]
        positions: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-verify an exported ledger against its ACL.
    Verify {
        #[arg(long)]
        ledger: PathBuf,
        #[arg(long)]
        acl: PathBuf,
        /// Required leading zero bits of every non-genesis block.
        #[arg(long, default_value_t = DEFAULT_DIFFICULTY)]
        difficulty: u32,
        /// Per-robot transaction cap per block, if the chain enforced one.
        #[arg(long)]
        robot_quota: Option<u32>,
    },
    /// Write the golden hash and signature vectors.
    Vectors {
        /// Destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Dotted-path override, e.g. `consensus.difficulty=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Replaces the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
}

struct Failure(u8, String);

impl Failure {
    fn config(msg: impl Into<String>) -> Self {
        Failure(EXIT_CONFIG, msg.into())
    }
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    write(path, &text)
}

fn load(args: &ScenarioArgs) -> Result<ScenarioConfig, Failure> {
    let mut overrides = args.overrides.clone();
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    let cfg = ScenarioConfig::load(&args.scenario, &overrides).map_err(|e| Failure::config(e.to_string()))?;
    fs::create_dir_all(&args.out).map_err(|e| Failure::config(format!("cannot create {}: {e}", args.out.display())))?;
    Ok(cfg)
}

/// trace.jsonl, ledger.jsonl and acl.json for one run.
fn write_run_files(dir: &Path, out: &RunOutput) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::config(format!("cannot create {}: {e}", dir.display())))?;
    write(&dir.join("trace.jsonl"), &out.trace_jsonl())?;
    write(&dir.join("ledger.jsonl"), &blocks_to_jsonl(out.reference_chain()))?;
    write_json(&dir.join("acl.json"), &out.rules.acl)
}

#[derive(Serialize)]
struct RunSummary<'a> {
    scenario: &'a str,
    seed: u64,
    difficulty: u32,
    reference_node: &'a str,
    chain_length: usize,
    mission: Option<&'a bcvh::netsim::MissionReport>,
    metrics: &'a bcvh::netsim::MetricsRecord,
    safety_violations: &'a [String],
}

fn summary<'a>(cfg: &'a ScenarioConfig, out: &'a RunOutput) -> RunSummary<'a> {
    RunSummary {
        scenario: &cfg.name,
        seed: cfg.seed,
        difficulty: out.rules.difficulty,
        reference_node: &out.reference_node,
        chain_length: out.reference_chain().len(),
        mission: out.mission.as_ref(),
        metrics: &out.metrics,
        safety_violations: &out.safety.violations,
    }
}

#[derive(Serialize)]
struct CompareFile<'a> {
    scenario: &'a str,
    seed: u64,
    comparison: &'a CompareReport,
}

fn cmd_run(args: &ScenarioArgs) -> Result<u8, Failure> {
    let cfg = load(args)?;
    let wants_compare = cfg.mission.as_ref().is_some_and(|m| m.compare.is_some());
    if !wants_compare {
        log::info!("running `{}` seed {}", cfg.name, cfg.seed);
        let out = run_scenario(&cfg);
        write_run_files(&args.out, &out)?;
        write(&args.out.join("metrics.csv"), &metrics_csv([&out.metrics]))?;
        write_json(&args.out.join("report.json"), &summary(&cfg, &out))?;
        return Ok(match &out.mission {
            Some(m) if !m.success => {
                eprintln!("mission failed: {}", m.failure.as_deref().unwrap_or("unknown"));
                EXIT_MISSION
            }
            _ => 0,
        });
    }

    log::info!("running comparison for `{}`", cfg.name);
    let (report, outputs) = compare_missions(&cfg);
    for (run, out) in report.runs.iter().zip(&outputs) {
        let tag = if run.bc_enabled { "bc" } else { "nobc" };
        let dir = args.out.join("runs").join(format!("{}-r{}-{tag}", run.robot, run.replication));
        write_run_files(&dir, out)?;
    }
    // the first ledger-enabled run stands in at the top level
    write_run_files(&args.out, &outputs[0])?;
    write(&args.out.join("metrics.csv"), &metrics_csv(outputs.iter().map(|o| &o.metrics)))?;
    write_json(
        &args.out.join("report.json"),
        &CompareFile {
            scenario: &cfg.name,
            seed: cfg.seed,
            comparison: &report,
        },
    )?;
    match report.delta {
        Some(d) => println!("overhead delta {d:.4} (threshold {})", report.threshold),
        None => println!("overhead delta unavailable: not every mission succeeded"),
    }
    println!("note: {}", report.caveat);
    Ok(if report.comparable { 0 } else { EXIT_MISSION })
}

#[derive(Serialize)]
struct AttackFile<'a> {
    run: RunSummary<'a>,
    verdicts: &'a [Verdict],
    all_held: bool,
}

fn cmd_attack(args: &ScenarioArgs) -> Result<u8, Failure> {
    let cfg = load(args)?;
    if cfg.adversaries.is_empty() {
        return Err(Failure::config("scenario declares no adversaries"));
    }
    let report = run_attack(&cfg);
    write_run_files(&args.out, &report.output)?;
    write(&args.out.join("metrics.csv"), &metrics_csv([&report.output.metrics]))?;
    write_json(
        &args.out.join("report.json"),
        &AttackFile {
            run: summary(&cfg, &report.output),
            verdicts: &report.verdicts,
            all_held: report.all_held(),
        },
    )?;
    for v in &report.verdicts {
        let status = match v.held {
            Some(true) => "held",
            Some(false) => "BROKEN",
            None => "n/a",
        };
        println!("{:<24} {:<15} {status:<6} {}", v.category, v.behavior, v.detail);
    }
    Ok(if report.all_held() { 0 } else { EXIT_INTEGRITY })
}

fn cmd_bench(positions: &[usize], seed: u64, out: Option<&Path>) -> Result<u8, Failure> {
    if positions.is_empty() || positions.contains(&0) {
        return Err(Failure::config("position counts must be at least 1"));
    }
    let rows: Vec<_> = positions
        .iter()
        .map(|&n| {
            log::info!("bench {n} positions");
            bench_ledger(n, seed)
        })
        .collect();
    let csv = bench_csv(&rows);
    match out {
        Some(path) => write(path, &csv)?,
        None => print!("{csv}"),
    }
    Ok(0)
}

fn cmd_verify(ledger: &Path, acl: &Path, difficulty: u32, quota: Option<u32>) -> Result<u8, Failure> {
    let read = |p: &Path| fs::read_to_string(p).map_err(|e| Failure::config(format!("cannot read {}: {e}", p.display())));
    let acl_text = read(acl)?;
    let acl: Acl = serde_json::from_str(&acl_text).map_err(|e| Failure::config(format!("{}: {e}", acl.display())))?;
    let blocks = blocks_from_jsonl(&read(ledger)?)
        .map_err(|(line, e)| Failure::config(format!("{} line {line}: {e}", ledger.display())))?;
    let mut rules = ChainRules::new(acl, difficulty);
    if let Some(q) = quota {
        rules = rules.with_robot_quota(q);
    }
    match verify_chain(&blocks, &rules) {
        Ok(()) => {
            println!("valid: {} blocks", blocks.len());
            Ok(0)
        }
        Err(fault) => {
            println!("invalid at index {}: {} ({})", fault.index, fault.fault.check(), fault.fault);
            Ok(EXIT_INTEGRITY)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BCVH_LOG", "off")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Attack(a) => cmd_attack(a),
        Command::Bench { positions, seed, out } => cmd_bench(positions, *seed, out.as_deref()),
        Command::Verify {
            ledger,
            acl,
            difficulty,
            robot_quota,
        } => cmd_verify(ledger, acl, *difficulty, *robot_quota),
        Command::Vectors { out } => {
            let text = golden_file();
            match out {
                Some(p) => write(p, &text).map(|_| 0),
                None => {
                    print!("{text}");
                    Ok(0)
                }
            }
        }
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
