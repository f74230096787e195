// Copyright 2026 The reconflow Authors
// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use reconflow_cli::bench::{self, SweepOptions};
use reconflow_cli::catalog::{self, CatalogOptions};
use reconflow_cli::experiment::{self, ExperimentSpec, RunMode};
use reconflow_cli::fuzz::{self, FuzzConfig, GraphSource};
use reconflow_cli::plan;
use reconflow_cli::request::{self, RequestFile};
use reconflow_core::engine::ScheduleLog;
use reconflow_core::sched::{FriesOptions, Scheduler, SchedulerKind};
use reconflow_core::txn::check_conflict_serializable;
use reconflow_core::EngineError;

const EXIT_USAGE: u8 = 1;
const EXIT_VIOLATION: u8 = 2;
const EXIT_ENGINE: u8 = 3;

#[derive(Parser)]
#[command(name = "reconflow", version, about = "Runtime reconfiguration of pipelined dataflows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute an experiment spec and write metrics to $RECONFLOW_OUT_DIR.
    Run(RunArgs),
    /// Check a schedule log for conflict serializability.
    Check {
        log: PathBuf,
        /// Print the verdict as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Print the components, heads and path lengths of a reconfiguration.
    Plan(PlanArgs),
    /// Randomized safety campaign.
    Fuzz(FuzzArgs),
    /// Delay sweeps and channel counts, as CSV.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Deterministic,
    Concurrent,
}

impl From<ModeArg> for RunMode {
    fn from(m: ModeArg) -> RunMode {
        match m {
            ModeArg::Deterministic => RunMode::Deterministic,
            ModeArg::Concurrent => RunMode::Concurrent,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    spec: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[arg(long)]
    reps: Option<u32>,
    /// Run repetitions in parallel.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct SchedulerArgs {
    #[arg(long, default_value = "fries")]
    scheduler: SchedulerKind,
    /// Add one-to-many ancestors (Fries).
    #[arg(long)]
    extended: bool,
    /// Prune added ancestors; implies --extended.
    #[arg(long)]
    pruning: bool,
}

impl SchedulerArgs {
    fn scheduler(&self) -> Scheduler {
        let options = FriesOptions { extended: self.extended || self.pruning, pruning: self.pruning, skip_guard: false };
        Scheduler::from_kind(self.scheduler, options)
    }
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long)]
    workflow: String,
    /// Comma-separated operators to reconfigure.
    #[arg(long, value_delimiter = ',', conflicts_with = "request")]
    ops: Vec<String>,
    /// Request file; overrides the scheduler flags.
    #[arg(long)]
    request: Option<PathBuf>,
    #[command(flatten)]
    sched: SchedulerArgs,
    #[arg(long, default_value_t = 1)]
    workers: u32,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct FuzzArgs {
    #[command(flatten)]
    sched: SchedulerArgs,
    /// A catalog workflow, `random` or `random-one-to-many`.
    #[arg(long, default_value = "random")]
    graph: String,
    #[arg(long, default_value_t = 1000)]
    runs: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 8)]
    max_vertices: usize,
    #[arg(long, default_value_t = 2)]
    max_workers: u32,
    /// Fixed reconfiguration set; random per run when omitted.
    #[arg(long, value_delimiter = ',')]
    ops: Vec<String>,
    /// Exit with status 2 when a run is not serializable.
    #[arg(long)]
    expect_safe: bool,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Sweep {
    Rate,
    Queue,
    Channels,
    All,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "all")]
    sweep: Sweep,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "deterministic")]
    mode: ModeArg,
    #[arg(long, default_value_t = 10)]
    reps: u32,
}

/// Fails with an exit code.
struct Exit(u8);

fn classify(e: &anyhow::Error) -> u8 {
    if e.chain().any(|c| c.downcast_ref::<EngineError>().is_some()) {
        EXIT_ENGINE
    } else {
        EXIT_USAGE
    }
}

fn run(args: RunArgs) -> Result<()> {
    let text = fs::read_to_string(&args.spec).with_context(|| format!("cannot read {}", args.spec.display()))?;
    let mut spec = ExperimentSpec::from_json(&text)?;
    if let Some(s) = args.seed {
        spec.seed = s;
    }
    if let Some(m) = args.mode {
        spec.mode = m.into();
    }
    if let Some(r) = args.reps {
        spec.reps = r;
    }
    spec.parallel |= args.parallel;
    spec.validate()?;
    let report = experiment::run_experiment(&spec)?;
    let stem = args.spec.file_stem().and_then(|s| s.to_str()).unwrap_or("experiment");
    let (csv, json) = report.write(&experiment::out_dir(), stem)?;
    println!("channels {}", report.channels);
    for (i, d) in report.delay_ms.iter().enumerate() {
        println!("reconfiguration {}: delay {:.3} ms +/- {:.3} (n={})", i + 1, d.mean, d.ci95, d.n);
    }
    println!("invalid tuples {:.1} +/- {:.1}", report.invalid.mean, report.invalid.ci95);
    println!("mean latency {:.3} ms +/- {:.3}", report.latency_ms.mean, report.latency_ms.ci95);
    println!("wrote {} and {}", csv.display(), json.display());
    Ok(())
}

fn check(log: PathBuf, json: bool) -> Result<std::result::Result<(), Exit>> {
    let text = fs::read_to_string(&log).with_context(|| format!("cannot read {}", log.display()))?;
    let log = ScheduleLog::from_jsonl(&text)?;
    let v = check_conflict_serializable(&log)?;
    if json {
        println!("{}", v.to_json());
    } else if v.serializable {
        println!("serializable ({} transactions)", v.transactions);
    } else {
        println!("not serializable: {} split transactions", v.violations);
        if let Some(w) = &v.witness {
            println!(
                "witness: txn {} runs Phi({}) before Mu({}) and Mu({}) before Phi({})",
                w.txn_id, w.phi_before_mu.worker, w.phi_before_mu.worker, w.mu_before_phi.worker, w.mu_before_phi.worker
            );
        }
    }
    Ok(if v.serializable { Ok(()) } else { Err(Exit(EXIT_VIOLATION)) })
}

fn plan_cmd(args: PlanArgs) -> Result<()> {
    let wf = catalog::workflow(&args.workflow, &CatalogOptions { workers: args.workers, ..CatalogOptions::default() })?;
    let (updates, scheduler) = match &args.request {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
            let rf: RequestFile = serde_json::from_str(&text).context("invalid request file")?;
            (rf.updates.clone(), rf.scheduler())
        }
        None if args.ops.is_empty() => return Err(anyhow!("give --ops or --request")),
        None => (request::touch(&wf, &args.ops, "new"), args.sched.scheduler()),
    };
    let p = plan::plan(&wf, &updates, scheduler)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&p)?);
    } else {
        print!("{}", plan::render(&p));
    }
    Ok(())
}

fn fuzz_cmd(args: FuzzArgs) -> Result<std::result::Result<(), Exit>> {
    let graph = match args.graph.as_str() {
        "random" => GraphSource::Random { one_to_many: 0.0 },
        "random-one-to-many" => GraphSource::Random { one_to_many: 0.4 },
        name => {
            catalog::workflow(name, &CatalogOptions::default())?;
            GraphSource::Catalog(name.to_string())
        }
    };
    let cfg = FuzzConfig {
        scheduler: args.sched.scheduler(),
        graph,
        runs: args.runs,
        first_seed: args.seed,
        max_vertices: args.max_vertices,
        max_workers: args.max_workers,
        ops: args.ops,
    };
    let r = fuzz::campaign(&cfg)?;
    println!("{} runs, {} rejected by the scheduler", r.runs, r.rejected);
    match r.failure {
        None => {
            println!("no violation");
            Ok(Ok(()))
        }
        Some(f) => {
            println!("violation at {}", f.original);
            println!("minimized: {}", f.minimized);
            if let Some(w) = &f.verdict.witness {
                println!("witness: {w}");
            }
            if f.verdict.version_violations > 0 {
                println!("{} tuples processed under the wrong version", f.verdict.version_violations);
            }
            if !f.verdict.retained.is_empty() {
                println!("workers still holding two configurations: {}", f.verdict.retained.join(","));
            }
            Ok(if args.expect_safe { Err(Exit(EXIT_VIOLATION)) } else { Ok(()) })
        }
    }
}

fn bench_cmd(args: BenchArgs) -> Result<()> {
    let dir = experiment::out_dir();
    fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let o = SweepOptions { reps: args.reps.max(1), seed: args.seed, mode: args.mode.into() };
    let schedulers = ["epoch", "fries"];
    let all = args.sweep == Sweep::All;
    if all || args.sweep == Sweep::Rate {
        let rows = bench::rate_sweep(bench::RATES, &schedulers, o)?;
        bench::write_sweep_csv(&rows, &dir.join("w1_rate.csv"))?;
        print_rows(&rows);
    }
    if all || args.sweep == Sweep::Queue {
        let rows = bench::cost_sweep(bench::QUEUES, &schedulers, o)?;
        bench::write_sweep_csv(&rows, &dir.join("w1_queue.csv"))?;
        print_rows(&rows);
    }
    if all || args.sweep == Sweep::Channels {
        let rows = bench::w2_channels(bench::W2_WORKERS)?;
        bench::write_channel_csv(&rows, &dir.join("w2_channels.csv"))?;
        for r in rows {
            println!("w2 workers {:>3}: {:>5} channels, {:>5} in MCS of J1,J4", r.workers, r.channels, r.mcs_channels);
        }
    }
    println!("wrote CSVs to {}", dir.display());
    Ok(())
}

fn print_rows(rows: &[bench::SweepRow]) {
    for r in rows {
        println!(
            "{} {:>6} {:<6} delay {:>12.3} ms +/- {:.3}",
            r.sweep, r.param, r.scheduler, r.delay_ms.mean, r.delay_ms.ci95
        );
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_USAGE) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(a) => run(a).map(Ok),
        Command::Check { log, json } => check(log, json),
        Command::Plan(a) => plan_cmd(a).map(Ok),
        Command::Fuzz(a) => fuzz_cmd(a),
        Command::Bench(a) => bench_cmd(a).map(Ok),
    };
    match result {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(Exit(code))) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(classify(&e))
        }
    }
}
