use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adbo_core::bench::Benchmark;
use adbo_core::harness::{
    compare, random_search_success_probability, run, ExperimentConfig, HarnessError, Method, ReportSummary, Runner,
};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adbo", version, about = "Distributed Bayesian optimization experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment (or several seeds) and write its report.
    Run(RunArgs),
    /// Tabulate report directories.
    Compare(CompareArgs),
    /// Probability that random search hits an epsilon-box around a point.
    Prob(ProbArgs),
}

#[derive(Args)]
struct RunArgs {
    /// adbo-qucb, sdbo-bucb, scbo-cl, acbo-cl, acbo-qucb, acbo-bucb, rd-acbo or seq-1.
    #[arg(long)]
    method: Option<String>,
    /// ackley, griewank, levy, schwefel or hartmann6d.
    #[arg(long)]
    benchmark: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Budget in simulated seconds.
    #[arg(long = "t-wall")]
    t_wall: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report directory; with --repeats, one `seed-N` subdirectory per run.
    #[arg(long)]
    out: Option<PathBuf>,
    /// sim or realtime.
    #[arg(long)]
    runner: Option<String>,
    /// Flat TOML experiment file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of consecutive seeds to run.
    #[arg(long, default_value_t = 1)]
    repeats: u64,
}

#[derive(Args)]
struct CompareArgs {
    /// Report directories, or parents containing them.
    #[arg(required = true)]
    dirs: Vec<PathBuf>,
    /// Objective level for the time-to-threshold column.
    #[arg(long)]
    threshold: Option<f64>,
    /// Emit CSV instead of an aligned table.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct ProbArgs {
    #[arg(long, allow_hyphen_values = true)]
    low: f64,
    #[arg(long, allow_hyphen_values = true)]
    high: f64,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    dim: u32,
    #[arg(long)]
    draws: u64,
}

fn build_config(args: &RunArgs) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => {
            let method: Method = args.method.as_deref().unwrap_or("adbo-qucb").parse()?;
            ExperimentConfig::new(method, if method == Method::Seq1 { 1 } else { 8 })
        }
    };
    if let Some(m) = &args.method {
        cfg.method = m.parse()?;
        if cfg.method == Method::Seq1 && args.workers.is_none() {
            cfg.n_worker = 1;
        }
    }
    if args.benchmark.is_some() || args.dim.is_some() {
        let name = args.benchmark.clone().unwrap_or_else(|| cfg.benchmark.name().to_string());
        let dim = args.dim.unwrap_or(if name == "hartmann6d" { 6 } else { cfg.benchmark.dim() });
        cfg.benchmark = Benchmark::by_name(&name, dim)?;
    }
    if let Some(w) = args.workers {
        cfg.n_worker = w;
    }
    if let Some(t) = args.t_wall {
        cfg.t_wall = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = &args.runner {
        cfg.runner = r.parse::<Runner>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_run(args: &RunArgs) -> Result<(), HarnessError> {
    let base = build_config(args)?;
    for k in 0..args.repeats.max(1) {
        let mut cfg = base.clone();
        cfg.seed = base.seed + k;
        let mut report = run(&cfg)?;
        if let Some(out) = &args.out {
            let dir = if args.repeats > 1 { out.join(format!("seed-{}", cfg.seed)) } else { out.clone() };
            report.write_dir(&dir)?;
        }
        print!("{}", report.summary_text());
        if k + 1 < args.repeats {
            println!();
        }
    }
    Ok(())
}

fn collect_dirs(path: &Path, out: &mut Vec<PathBuf>) -> Result<(), HarnessError> {
    if path.join("summary.txt").is_file() {
        out.push(path.to_path_buf());
        return Ok(());
    }
    let mut children: Vec<PathBuf> =
        std::fs::read_dir(path)?.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    children.sort();
    for c in children {
        collect_dirs(&c, out)?;
    }
    Ok(())
}

fn cmd_compare(args: &CompareArgs) -> Result<(), HarnessError> {
    let mut dirs = Vec::new();
    for d in &args.dirs {
        collect_dirs(d, &mut dirs)?;
    }
    if dirs.is_empty() {
        return Err(HarnessError::Report("no report directories found".into()));
    }
    let summaries = dirs.iter().map(ReportSummary::load).collect::<Result<Vec<_>, _>>()?;
    let table = compare(&summaries, args.threshold);
    print!("{}", if args.csv { table.to_csv() } else { table.to_text() });
    Ok(())
}

fn cmd_prob(args: &ProbArgs) -> Result<(), HarnessError> {
    if !(args.epsilon > 0.0 && args.high > args.low) {
        return Err(HarnessError::InvalidConfig("need epsilon > 0 and high > low".into()));
    }
    let p = random_search_success_probability(args.low, args.high, args.epsilon, args.dim, args.draws);
    println!("{p:e}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Prob(a) => cmd_prob(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
