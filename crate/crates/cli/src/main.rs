use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mapfboost::bench_io::{
    csv_row, load_map, load_scen, make_instance, read_solution, sanitize_label, write_csv, write_solution, CSV_HEADER,
};
use mapfboost::grid::{validate_paths, PathIssue};
use mapfboost::policy::{RankMode, SampleMode};
use mapfboost::runner::{
    aggregate, bench_sweep, expand_sweep, histogram_csv, noise_study, ordering_histogram, read_log, run_instance,
    write_log, Algo, HeuristicSpec, LogEntry, PolicySpec, RunSpec, Shield, SweepConfig,
};

#[derive(Parser)]
#[command(name = "mapfboost", version, about = "PIBT, LaCAM and collision shields for one-step MAPF policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one instance and print its result row.
    Solve(SolveArgs),
    /// Run a sweep file and write per-run and aggregate CSV rows.
    Bench(BenchArgs),
    /// Check a solution file for conflicts.
    Validate(ValidateArgs),
    /// Build action-by-position histograms from ordering logs.
    Stats(StatsArgs),
}

#[derive(Args)]
struct InstanceArgs {
    #[arg(long)]
    map: PathBuf,
    #[arg(long)]
    scen: PathBuf,
    /// Use the first N scenario entries.
    #[arg(long)]
    agents: usize,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long, default_value = "pibt")]
    algo: Algo,
    #[arg(long, default_value = "bd")]
    heuristic: HeuristicSpec,
    /// Degrade the ranking tables by up to K percent.
    #[arg(long = "noise-K", default_value_t = 0.0)]
    noise_k: f64,
    #[arg(long, default_value = "h")]
    order: String,
    /// Weight of the policy term for `--order sum`.
    #[arg(long = "R", default_value_t = 0.0)]
    r: f64,
    #[arg(long, default_value = "pibt")]
    shield: Shield,
    #[arg(long, default_value = "strict")]
    sample: SampleMode,
    /// none, uniform, softmax:TAU,KAPPA or external:CMD
    #[arg(long, default_value = "none")]
    policy: PolicySpec,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Wall-clock limit in seconds.
    #[arg(long, default_value_t = 60.0)]
    timeout: f64,
    /// One-step loops stop after this many steps (default 16 * (w + h)).
    #[arg(long)]
    max_timesteps: Option<usize>,
    #[arg(long)]
    node_cap: Option<usize>,
    /// Write the solution here when one is found.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-step ordering logs (JSON lines) here.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Override the worker count of the sweep file.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    quiet: bool,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    #[arg(long)]
    paths: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    /// Directory of `.jsonl` ordering logs.
    #[arg(long)]
    logs: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => solve(a),
        Command::Bench(a) => bench(a),
        Command::Validate(a) => validate(a),
        Command::Stats(a) => stats(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn file_label(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn load_instance(a: &InstanceArgs) -> Result<mapfboost::grid::Instance> {
    let map = load_map(&a.map).with_context(|| format!("loading {}", a.map.display()))?;
    let entries = load_scen(&a.scen).with_context(|| format!("loading {}", a.scen.display()))?;
    Ok(make_instance(map.into(), &entries, a.agents)?)
}

fn seconds(s: f64) -> Result<Duration> {
    if !(s > 0.0 && s.is_finite()) {
        bail!("timeout must be a positive number of seconds, got {s}");
    }
    Ok(Duration::from_secs_f64(s))
}

fn write_log_file(path: &Path, log: &[LogEntry]) -> Result<()> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(f);
    write_log(log, &mut w)?;
    w.flush()?;
    Ok(())
}

fn solve(a: SolveArgs) -> Result<bool> {
    let inst = load_instance(&a.instance)?;
    let mut spec = RunSpec {
        map_name: file_label(&a.instance.map),
        scen_name: file_label(&a.instance.scen),
        algo: a.algo,
        shield: a.shield,
        order: RankMode::parse(&a.order, a.r).map_err(anyhow::Error::msg)?,
        sample: a.sample,
        policy: a.policy,
        heuristic: a.heuristic,
        noise_k: a.noise_k,
        seed: a.seed,
        timeout: seconds(a.timeout)?,
        max_timesteps: a.max_timesteps,
        log_orderings: a.log.is_some(),
        ..RunSpec::default()
    };
    if let Some(cap) = a.node_cap {
        spec.node_cap = cap;
    }
    spec.validate().map_err(anyhow::Error::msg)?;
    let out = run_instance(&spec, &inst);
    println!("{CSV_HEADER}");
    println!("{}", csv_row(&out.record));
    if let (Some(path), Some(paths)) = (&a.out, &out.paths) {
        fs::write(path, write_solution(paths)).with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(path) = &a.log {
        write_log_file(path, &out.log)?;
    }
    Ok(out.record.success)
}

fn bench(a: BenchArgs) -> Result<bool> {
    let cfg = SweepConfig::load(&a.config)?;
    let jobs = expand_sweep(&cfg)?;
    if let Some(dir) = &cfg.log_dir {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let threads = a.threads.unwrap_or(cfg.threads);
    let done = AtomicUsize::new(0);
    let total = jobs.len();
    let outputs = bench_sweep(&jobs, threads, |_, out| {
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        if !a.quiet {
            let r = &out.record;
            eprintln!(
                "[{k}/{total}] {} {} n={} seed={} {} {}ms",
                r.param("method").unwrap_or(&r.algo),
                r.scen,
                r.n_agents,
                r.seed,
                if r.success { "ok" } else { "fail" },
                r.runtime_ms
            );
        }
    });
    if let Some(dir) = &cfg.log_dir {
        for out in outputs.iter().filter(|o| !o.log.is_empty()) {
            let r = &out.record;
            let name = format!(
                "{}_{}_n{}_s{}.jsonl",
                sanitize_label(r.param("method").unwrap_or(&r.algo)),
                sanitize_label(&r.scen),
                r.n_agents,
                r.seed
            );
            write_log_file(&dir.join(name), &out.log)?;
        }
    }
    let mut records: Vec<_> = outputs.into_iter().map(|o| o.record).collect();
    let agg = aggregate(&records);
    let noise = noise_study(&records);
    for r in &agg {
        eprintln!(
            "{} n={}: success {} mean cost {}",
            r.param("method").unwrap_or(""),
            r.n_agents,
            r.param("success_rate").unwrap_or("-"),
            r.param("mean_cost").unwrap_or("-")
        );
    }
    records.extend(agg);
    records.extend(noise);
    fs::write(&a.out, write_csv(&records)).with_context(|| format!("writing {}", a.out.display()))?;
    Ok(true)
}

fn validate(a: ValidateArgs) -> Result<bool> {
    let inst = load_instance(&a.instance)?;
    let text = fs::read_to_string(&a.paths).with_context(|| format!("reading {}", a.paths.display()))?;
    let paths = read_solution(&text).with_context(|| format!("parsing {}", a.paths.display()))?;
    let report = validate_paths(&paths, &inst);
    if report.passed() {
        println!("valid: {} agents, horizon {}", paths.n_agents(), paths.horizon());
        return Ok(true);
    }
    for issue in &report.issues {
        match issue {
            PathIssue::Conflict { t, conflict } => println!("t={t}: {conflict:?}"),
            other => println!("{other:?}"),
        }
    }
    for (agent, _) in report.reached_goal.iter().enumerate().filter(|(_, r)| !**r) {
        println!("agent {agent} does not end at its goal");
    }
    println!("invalid");
    Ok(false)
}

fn stats(a: StatsArgs) -> Result<bool> {
    let mut files: Vec<PathBuf> = fs::read_dir(&a.logs)
        .with_context(|| format!("reading {}", a.logs.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no .jsonl logs in {}", a.logs.display());
    }
    let mut entries = Vec::new();
    for f in &files {
        let r = BufReader::new(fs::File::open(f).with_context(|| format!("opening {}", f.display()))?);
        entries.extend(read_log(r).with_context(|| format!("parsing {}", f.display()))?);
    }
    let hists = ordering_histogram(&entries);
    fs::write(&a.out, histogram_csv(&hists)).with_context(|| format!("writing {}", a.out.display()))?;
    for at_goal in [false, true] {
        let pick = |sampled| hists.iter().find(|h| h.key.sampled == sampled && h.key.at_goal == at_goal);
        if let (Some(s), Some(p)) = (pick(false), pick(true)) {
            println!(
                "at_goal={at_goal}: {} samples, max |strict - sampled| = {:.4}",
                s.total,
                s.max_abs_diff(p)
            );
        }
    }
    Ok(true)
}
