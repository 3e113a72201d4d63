use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dcf_core::experiment::{self, csv_row, parse_points, parse_seeds, SweepKind, SweepSpec, CSV_HEADER};
use dcf_core::{ScenarioConfig, SimError, Simulation};

#[derive(Parser)]
#[command(name = "dcfsim", version, about = "TCP over IEEE 802.11 DCF multi-hop simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and print its CSV row.
    Run(RunArgs),
    /// Sweep one MAC parameter over several seeds.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario file (TOML) with overrides of the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of intermediate chain nodes (6, 8 or 10).
    #[arg(long)]
    nodes: Option<u32>,
    /// Simulated seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Accept any positive number of intermediate nodes.
    #[arg(long)]
    allow_any_n: bool,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    seed: Option<u64>,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the MAC event log here.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// retry, cwmin, cwmax, cwpairs or none.
    #[arg(long, default_value = "none")]
    sweep: String,
    /// Comma-separated values; cw pairs as MIN:MAX. Defaults to the standard grid.
    #[arg(long)]
    values: Option<String>,
    /// Inclusive range `1..5` or a comma list.
    #[arg(long, default_value = "1..5")]
    seeds: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for two-column plot files, one per metric.
    #[arg(long)]
    plot_dir: Option<PathBuf>,
}

enum Failure {
    Config(String),
    Internal(String),
    Io(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Internal(_) => 3,
            Failure::Io(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Internal(m) | Failure::Io(m) => m,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            e if e.is_internal() => Failure::Internal(e.to_string()),
            SimError::Trace(io) => Failure::Io(format!("trace output failed: {io}")),
            e => Failure::Config(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn load(args: &ScenarioArgs) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => ScenarioConfig::from_file(path).map_err(|e| Failure::Config(e.to_string()))?,
        None => ScenarioConfig::default(),
    };
    if let Some(n) = args.nodes {
        cfg.n_intermediate = n;
    }
    if let Some(d) = args.duration {
        cfg.duration = d;
    }
    cfg.validate(args.allow_any_n).map_err(|e| Failure::Config(e.to_string()))?;
    Ok(cfg)
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(io_err(path)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut cfg = load(&args.scenario)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let mut sim = Simulation::from_config(&cfg, args.scenario.allow_any_n)?;
    if let Some(path) = &args.trace {
        let file = File::create(path).map_err(io_err(path))?;
        sim.trace_to_writer(Box::new(BufWriter::new(file)));
    }
    let out = sim.run()?;
    let r = out.report;
    emit(args.out.as_deref(), &format!("{CSV_HEADER}\n{}\n", csv_row(&cfg, &r)))?;
    if args.out.is_some() {
        println!(
            "delivered {} of {} sent, avg delay {:.4} s, dropped {} (collision {}, retry {}, queue {}), in flight {}",
            r.delivered,
            r.sent,
            r.avg_delay_s,
            r.total_dropped,
            r.collision_dropped,
            r.retry_dropped,
            r.queue_dropped,
            r.in_flight_at_end
        );
    }
    Ok(())
}

fn sweep(args: SweepArgs) -> Result<(), Failure> {
    let base = load(&args.scenario)?;
    let kind: SweepKind = args.sweep.parse().map_err(Failure::Config)?;
    let seeds = parse_seeds(&args.seeds).map_err(Failure::Config)?;
    let mut spec = SweepSpec::new(kind, seeds, base);
    spec.allow_any_n = args.scenario.allow_any_n;
    if let Some(values) = &args.values {
        spec.points = parse_points(kind, values).map_err(Failure::Config)?;
    }
    for p in &spec.points {
        p.apply(&spec.base).validate(spec.allow_any_n).map_err(|e| Failure::Config(format!("at {p}: {e}")))?;
    }
    let result = experiment::run_sweep(&spec).map_err(|e| {
        let msg = e.to_string();
        match Failure::from(e.source) {
            Failure::Internal(_) => Failure::Internal(msg),
            Failure::Io(_) => Failure::Io(msg),
            Failure::Config(_) => Failure::Config(msg),
        }
    })?;
    emit(args.out.as_deref(), &result.to_csv())?;
    if let Some(dir) = &args.plot_dir {
        let files = result.write_plot_files(dir).map_err(io_err(dir))?;
        eprintln!("wrote {} plot files to {}", files.len(), dir.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
    };
    match res {
        Ok(()) => {
            let _ = std::io::stdout().flush();
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("dcfsim: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
