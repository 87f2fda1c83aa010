//! The `picard-sim` command line.
//!
//! Every fulfillment mode runs the same grid (seeds × β × policy ×
//! partitioning × M × algorithm) and differs only in its defaults. Results go
//! to `results.csv`, `summary.json` and `timings.csv` in `--out`, plus
//! `trace.csv` with `--trace`. Exit status is 0 on success, 1 on usage or
//! I/O errors, and 2 on a contract violation or an oracle mismatch.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::engine::{sequential_actions, Execution};
use crate::error::{Result, SimError};
use crate::experiment::{median, run_fo, Algo, Partitioning, RunOptions, RunRecord, TraceLine};
use crate::fo::FoAction;
use crate::instgen::{generate_instance, load_instance, save_instance, Instance, DEFAULT_COVERAGE, MANIFEST_FILE};
use crate::linear::{perturbed_gain, picard_convergence_curve, warm_start_cache, LinearSystemSpec};
use crate::policies::{CapacityPenalizedPolicy, DualNetworkPolicy, FoPolicy, GreedyPolicy};
use crate::timewarp::WindowRule;

pub const SEED_ENV: &str = "PICARD_SIM_SEED";

pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const TRACE_FILE: &str = "trace.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";

#[derive(Debug, Parser)]
#[command(name = "picard-sim", version, about = "Parallel policy simulation by Picard iteration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic fulfillment instance.
    Generate(GenerateArgs),
    /// Simulate one or more configurations.
    Simulate(GridArgs),
    /// Sweep the number of processes (default M = 1,10,100,1000).
    SweepBatch(GridArgs),
    /// Sweep demand skew and partitioning.
    SweepBeta(GridArgs),
    /// Sweep the capacity bonus of the penalized policy.
    SweepGamma(GridArgs),
    /// Compare Picard iteration with the windowed baseline.
    TimewarpCompare(GridArgs),
    /// Convergence of Picard iteration on contractive linear systems.
    LinearConvergence(LinearArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long = "J", default_value_t = 30)]
    nodes: usize,
    #[arg(long = "I", default_value_t = 10_000)]
    products: usize,
    #[arg(long = "T", default_value_t = 30_000)]
    horizon: usize,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    beta: f64,
    #[arg(long, default_value_t = DEFAULT_COVERAGE)]
    coverage: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PolicyKind {
    Greedy,
    /// Dual-price network with zero weights.
    Dual,
    /// Dual-price network with small random weights.
    DualRandom,
    Penalized,
}

#[derive(Debug, Args)]
struct GridArgs {
    /// Existing instance directory; otherwise one is generated per seed and β.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long = "J", default_value_t = 30)]
    nodes: usize,
    #[arg(long = "I", default_value_t = 10_000)]
    products: usize,
    #[arg(long = "T", default_value_t = 30_000)]
    horizon: usize,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    beta: Option<Vec<f64>>,
    #[arg(long, default_value_t = DEFAULT_COVERAGE)]
    coverage: f64,
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    #[arg(long, value_enum, value_delimiter = ',')]
    algo: Option<Vec<Algo>>,
    #[arg(long, value_enum, value_delimiter = ',')]
    partition: Option<Vec<Partitioning>>,
    #[arg(long = "M", value_delimiter = ',')]
    processes: Option<Vec<usize>>,
    #[arg(long, value_enum)]
    policy: Option<PolicyKind>,
    /// Capacity bonus; implies the penalized policy.
    #[arg(long, value_delimiter = ',')]
    gamma: Option<Vec<f64>>,
    /// Chunk width in steps; 0 runs the whole horizon at once.
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    no_oracle: bool,
    #[arg(long)]
    trace: bool,
    /// Window rule of the baseline.
    #[arg(long, value_enum, default_value_t = WindowRule::AllNodes)]
    window: WindowRule,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct LinearArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [0.3, 0.6, 0.9])]
    rho: Vec<f64>,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    p: usize,
    #[arg(long = "T", default_value_t = 200)]
    horizon: usize,
    #[arg(long, value_delimiter = ',')]
    seed: Option<Vec<u64>>,
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
    /// Start from the rollout of a gain perturbed by this much instead of
    /// from zero actions.
    #[arg(long)]
    warm_start: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Mode {
    Simulate,
    SweepBatch,
    SweepBeta,
    SweepGamma,
    TimewarpCompare,
}

/// Runs the command line and returns the process exit status.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(Outcome::Ok) => 0,
        Ok(Outcome::OracleMismatch(msg)) => {
            eprintln!("picard-sim: oracle mismatch: {msg}");
            2
        }
        Err(e) => {
            eprintln!("picard-sim: {e}");
            if e.is_contract_violation() {
                2
            } else {
                1
            }
        }
    }
}

enum Outcome {
    Ok,
    OracleMismatch(String),
}

fn dispatch(command: Command) -> Result<Outcome> {
    match command {
        Command::Generate(args) => generate(args),
        Command::Simulate(args) => grid(Mode::Simulate, args),
        Command::SweepBatch(args) => grid(Mode::SweepBatch, args),
        Command::SweepBeta(args) => grid(Mode::SweepBeta, args),
        Command::SweepGamma(args) => grid(Mode::SweepGamma, args),
        Command::TimewarpCompare(args) => grid(Mode::TimewarpCompare, args),
        Command::LinearConvergence(args) => linear(args),
    }
}

/// `PICARD_SIM_SEED`, when set, replaces the seed list.
fn seeds(flag: Option<Vec<u64>>) -> Result<Vec<u64>> {
    if let Ok(raw) = std::env::var(SEED_ENV) {
        return raw
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| SimError::InvalidConfig(format!("{SEED_ENV}={raw:?} is not a seed list")))
            })
            .collect();
    }
    Ok(flag.unwrap_or_else(|| vec![0]))
}

fn generate(args: GenerateArgs) -> Result<Outcome> {
    let seed = seeds(Some(vec![args.seed]))?;
    let [seed] = seed[..] else {
        return Err(SimError::InvalidConfig("generate takes a single seed".into()));
    };
    let instance = generate_instance(args.nodes, args.products, args.horizon, args.beta, args.coverage, seed)?;
    save_instance(&instance, &args.out)?;
    println!("{}", args.out.join(MANIFEST_FILE).display());
    Ok(Outcome::Ok)
}

struct Grid {
    seeds: Vec<u64>,
    betas: Vec<f64>,
    policies: Vec<PolicyKindWithGamma>,
    partitions: Vec<Partitioning>,
    processes: Vec<usize>,
    algos: Vec<Algo>,
}

#[derive(Debug, Clone, Copy)]
struct PolicyKindWithGamma {
    kind: PolicyKind,
    gamma: f64,
}

fn resolve(mode: Mode, args: &GridArgs, seed_list: Vec<u64>) -> Result<Grid> {
    let default_m: &[usize] = match mode {
        Mode::SweepBatch => &[1, 10, 100, 1000],
        _ => &[256],
    };
    let betas = args.beta.clone().unwrap_or_else(|| match mode {
        Mode::SweepBeta => vec![0.0, -0.4, -0.8, -1.0],
        _ => vec![0.0],
    });
    let gammas = args.gamma.clone().or_else(|| (mode == Mode::SweepGamma).then(|| vec![0.0, 0.5, 1.0]));
    let policies = match (args.policy, gammas) {
        (Some(kind), None) => vec![PolicyKindWithGamma { kind, gamma: 0.0 }],
        (None, None) => vec![PolicyKindWithGamma {
            kind: PolicyKind::Greedy,
            gamma: 0.0,
        }],
        (None | Some(PolicyKind::Penalized), Some(gs)) => gs
            .into_iter()
            .map(|gamma| PolicyKindWithGamma {
                kind: PolicyKind::Penalized,
                gamma,
            })
            .collect(),
        (Some(_), Some(_)) => {
            return Err(SimError::InvalidConfig("--gamma only applies to the penalized policy".into()));
        }
    };
    let partitions = args.partition.clone().unwrap_or_else(|| match mode {
        Mode::SweepBeta => vec![Partitioning::Product, Partitioning::Uniform],
        _ => vec![Partitioning::Product],
    });
    let processes = args.processes.clone().unwrap_or_else(|| default_m.to_vec());
    if processes.contains(&0) {
        return Err(SimError::InvalidConfig("M values must be at least 1".into()));
    }
    let algos = args.algo.clone().unwrap_or_else(|| match mode {
        Mode::TimewarpCompare => vec![Algo::Picard, Algo::Timewarp],
        _ => vec![Algo::Picard],
    });
    Ok(Grid {
        seeds: seed_list,
        betas,
        policies,
        partitions,
        processes,
        algos,
    })
}

fn build_policy(spec: PolicyKindWithGamma, instance: &Instance, seed: u64) -> Result<FoPolicy> {
    let env = instance.env();
    Ok(match spec.kind {
        PolicyKind::Greedy => FoPolicy::Greedy(GreedyPolicy),
        PolicyKind::Dual => FoPolicy::DualNetwork(Box::new(DualNetworkPolicy::zeros(&env, instance.horizon()))),
        PolicyKind::DualRandom => {
            FoPolicy::DualNetwork(Box::new(DualNetworkPolicy::seeded(&env, instance.horizon(), seed)))
        }
        PolicyKind::Penalized => FoPolicy::CapacityPenalized(
            CapacityPenalizedPolicy::new(spec.gamma).map_err(|e| SimError::InvalidConfig(e.0))?,
        ),
    })
}

#[derive(Debug, Serialize)]
struct Timing {
    seed: u64,
    algo: Algo,
    #[serde(rename = "M")]
    processes: usize,
    beta: f64,
    gamma: f64,
    partitioning: Partitioning,
    wall_time_s: f64,
}

#[derive(Debug, Serialize)]
struct GroupSummary {
    algo: Algo,
    partitioning: Partitioning,
    #[serde(rename = "M")]
    processes: usize,
    beta: f64,
    gamma: f64,
    runs: usize,
    median_eval_proxy: Option<f64>,
    median_iterations_to_correct: Option<f64>,
    median_conflicts: Option<f64>,
}

#[derive(Debug, Serialize)]
struct Summary {
    mode: Mode,
    runs: usize,
    oracle_checked: bool,
    oracle_mismatches: usize,
    groups: Vec<GroupSummary>,
}

fn write_csv<S: Serialize>(path: &Path, rows: &[S], header: &[&str]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(!rows.is_empty())
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    if rows.is_empty() {
        w.write_record(header)?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

const RESULTS_HEADER: [&str; 13] = [
    "seed",
    "algo",
    "M",
    "beta",
    "gamma",
    "partitioning",
    "iterations_to_correct",
    "iterations_to_converged",
    "conflicts",
    "sync_rounds",
    "rollbacks",
    "eval_proxy",
    "oracle_equal",
];

fn summarize(mode: Mode, records: &[RunRecord], oracle_checked: bool) -> Summary {
    type Key = (Algo, Partitioning, usize, u64, u64);
    let mut groups: BTreeMap<Key, Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        let key = (r.algo, r.partitioning, r.processes, r.beta.to_bits(), r.gamma.to_bits());
        groups.entry(key).or_default().push(r);
    }
    let med = |rs: &[&RunRecord], f: fn(&RunRecord) -> Option<f64>| median(&rs.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
    Summary {
        mode,
        runs: records.len(),
        oracle_checked,
        oracle_mismatches: records.iter().filter(|r| r.oracle_equal == Some(false)).count(),
        groups: groups
            .into_values()
            .map(|rs| GroupSummary {
                algo: rs[0].algo,
                partitioning: rs[0].partitioning,
                processes: rs[0].processes,
                beta: rs[0].beta,
                gamma: rs[0].gamma,
                runs: rs.len(),
                median_eval_proxy: med(&rs, |r| Some(r.eval_proxy)),
                median_iterations_to_correct: med(&rs, |r| r.iterations_to_correct.map(|k| k as f64)),
                median_conflicts: med(&rs, |r| r.conflicts.map(|c| c as f64)),
            })
            .collect(),
    }
}

fn grid(mode: Mode, args: GridArgs) -> Result<Outcome> {
    let execution = match args.threads {
        Some(0) => return Err(SimError::InvalidConfig("--threads must be at least 1".into())),
        Some(1) => Execution::Serial,
        _ => Execution::Parallel,
    };
    let run = || grid_inner(mode, &args, execution);
    match args.threads {
        Some(n) if n > 1 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SimError::InvalidConfig(format!("thread pool: {e}")))?
            .install(run),
        _ => run(),
    }
}

fn grid_inner(mode: Mode, args: &GridArgs, execution: Execution) -> Result<Outcome> {
    let grid = resolve(mode, args, seeds(args.seed.clone())?)?;
    fs::create_dir_all(&args.out)?;
    let loaded = match args.instance.as_deref() {
        Some(dir) => Some(load_instance(dir).map_err(|e| match e {
            SimError::Io(io) => SimError::InvalidData(format!("cannot read instance {}: {io}", dir.display())),
            other => other,
        })?),
        None => None,
    };
    let betas = match &loaded {
        Some(inst) => vec![inst.meta.beta],
        None => grid.betas.clone(),
    };

    let mut records = Vec::new();
    let mut timings = Vec::new();
    let mut trace: Vec<TraceLine> = Vec::new();
    let mut mismatch = None;
    for &seed in &grid.seeds {
        for &beta in &betas {
            let generated;
            let instance = match &loaded {
                Some(inst) => inst,
                None => {
                    generated = generate_instance(args.nodes, args.products, args.horizon, beta, args.coverage, seed)?;
                    &generated
                }
            };
            for &policy_spec in &grid.policies {
                let policy = build_policy(policy_spec, instance, seed)?;
                let oracle: Option<Vec<FoAction>> = if args.no_oracle {
                    None
                } else {
                    Some(sequential_actions(&instance.env(), &policy, &instance.orders)?)
                };
                for &partitioning in &grid.partitions {
                    for &processes in &grid.processes {
                        for &algo in &grid.algos {
                            let mut options = RunOptions::new(algo, partitioning, processes, seed);
                            options.max_steps = args.max_steps;
                            options.max_iterations = args.max_iterations;
                            options.execution = execution;
                            options.record_trace = args.trace;
                            options.window_rule = args.window;
                            let out = run_fo(instance, &policy, &options, oracle.as_deref())?;
                            if out.record.oracle_equal == Some(false) && mismatch.is_none() {
                                let oracle = oracle.as_deref().unwrap_or_default();
                                let t = out.actions.iter().zip(oracle).position(|(a, b)| a != b).unwrap_or(0);
                                mismatch = Some(format!(
                                    "seed {seed} algo {algo} M {processes} partitioning {partitioning} gamma {}: first difference at t = {t}",
                                    policy.gamma()
                                ));
                            }
                            timings.push(Timing {
                                seed,
                                algo,
                                processes,
                                beta: out.record.beta,
                                gamma: out.record.gamma,
                                partitioning,
                                wall_time_s: out.wall_time_s,
                            });
                            trace.extend(out.trace);
                            records.push(out.record);
                        }
                    }
                }
            }
        }
    }

    write_csv(&args.out.join(RESULTS_FILE), &records, &RESULTS_HEADER)?;
    write_csv(
        &args.out.join(TIMINGS_FILE),
        &timings,
        &["seed", "algo", "M", "beta", "gamma", "partitioning", "wall_time_s"],
    )?;
    if args.trace {
        write_csv(
            &args.out.join(TRACE_FILE),
            &trace,
            &[
                "seed",
                "algo",
                "M",
                "gamma",
                "partitioning",
                "chunk",
                "iteration",
                "changed_slots",
                "max_evals",
                "t_reset",
                "window_length",
            ],
        )?;
    }
    let summary = summarize(mode, &records, !args.no_oracle);
    let mut json = serde_json::to_vec_pretty(&summary)?;
    json.push(b'\n');
    fs::write(args.out.join(SUMMARY_FILE), json)?;

    Ok(match mismatch {
        Some(msg) => Outcome::OracleMismatch(msg),
        None => Outcome::Ok,
    })
}

#[derive(Debug, Serialize)]
struct ConvergenceRow {
    seed: u64,
    rho: f64,
    iteration: usize,
    relative_rmse: f64,
}

#[derive(Debug, Serialize)]
struct RhoSummary {
    rho: f64,
    runs: usize,
    /// `ceil(log(tolerance) / log(rho)) + 2`.
    iteration_budget: Option<usize>,
    median_iterations_to_tolerance: Option<f64>,
    reached_tolerance: usize,
    max_ratio_after_first: Option<f64>,
}

#[derive(Debug, Serialize)]
struct LinearSummary {
    n: usize,
    p: usize,
    #[serde(rename = "T")]
    horizon: usize,
    tolerance: f64,
    warm_start: Option<f64>,
    rhos: Vec<RhoSummary>,
}

/// `ceil(log(tol) / log(rho)) + 2` for `0 < rho < 1`.
pub fn iteration_budget(rho: f64, tolerance: f64) -> Option<usize> {
    (rho > 0.0 && rho < 1.0 && tolerance > 0.0 && tolerance < 1.0)
        .then(|| (tolerance.ln() / rho.ln()).ceil() as usize + 2)
}

fn linear(args: LinearArgs) -> Result<Outcome> {
    let seed_list = seeds(args.seed.clone())?;
    fs::create_dir_all(&args.out)?;
    let mut rows = Vec::new();
    let mut rhos = Vec::new();
    for &rho in &args.rho {
        let mut iterations = Vec::new();
        let mut max_ratio: Option<f64> = None;
        for &seed in &seed_list {
            let spec = LinearSystemSpec::random(args.n, args.p, args.horizon, rho, seed)?;
            let initial = match args.warm_start {
                Some(scale) => Some(warm_start_cache(&spec, perturbed_gain(&spec, scale, seed ^ 0x5eed))?),
                None => None,
            };
            let curve = picard_convergence_curve(&spec, initial, args.tolerance)?;
            for (k, e) in curve.rmse.iter().enumerate() {
                rows.push(ConvergenceRow {
                    seed,
                    rho,
                    iteration: k + 1,
                    relative_rmse: *e,
                });
            }
            if let Some(r) = curve.ratios().into_iter().reduce(f64::max) {
                max_ratio = Some(max_ratio.map_or(r, |m| m.max(r)));
            }
            if let Some(k) = curve.iterations_to_tolerance {
                iterations.push(k as f64);
            }
        }
        rhos.push(RhoSummary {
            rho,
            runs: seed_list.len(),
            iteration_budget: iteration_budget(rho, args.tolerance),
            median_iterations_to_tolerance: median(&iterations),
            reached_tolerance: iterations.len(),
            max_ratio_after_first: max_ratio,
        });
    }
    write_csv(
        &args.out.join(CONVERGENCE_FILE),
        &rows,
        &["seed", "rho", "iteration", "relative_rmse"],
    )?;
    let summary = LinearSummary {
        n: args.n,
        p: args.p,
        horizon: args.horizon,
        tolerance: args.tolerance,
        warm_start: args.warm_start,
        rhos,
    };
    let mut json = serde_json::to_vec_pretty(&summary)?;
    json.push(b'\n');
    fs::write(args.out.join(SUMMARY_FILE), json)?;
    Ok(Outcome::Ok)
}
