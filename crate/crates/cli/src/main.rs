use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hyfl::centralized::CentralRun;
use hyfl_cli::plot::{cmd_plot, PlotOptions, XAxis};
use hyfl_cli::{cmd_central, cmd_partition_info, cmd_run, cmd_tune, CliError, CliResult, ExperimentConfig};

/// Hybrid federated dual coordinate ascent simulator.
#[derive(Parser)]
#[command(name = "hyfl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment; writes a history CSV and metadata JSON.
    Run(Common),
    /// Solve centrally to a small duality gap; writes central.json.
    Central(Common),
    /// Random search with grey relational selection.
    Tune {
        #[command(flatten)]
        common: Common,
        /// Parallel evaluations (default: available cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Number of search points (overrides tune.points).
        #[arg(long)]
        points: Option<usize>,
    },
    /// Per-client sample, feature and nonzero counts.
    PartitionInfo(Common),
    /// Plot history CSVs to loss.svg and accuracy.svg.
    Plot {
        /// History CSV files written by `run` or `tune`.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Moving-average window (1 = unsmoothed).
        #[arg(long, default_value_t = 1)]
        window: usize,
        #[arg(long, value_enum, default_value_t = XAxis::Iteration)]
        x_axis: XAxis,
        /// Optimal objective for relative loss.
        #[arg(long, conflicts_with = "central")]
        p_star: Option<f64>,
        /// Read the optimal objective from a central.json.
        #[arg(long)]
        central: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Seconds per round trip: 0, 0.2575, 0.8 or any non-negative value.
    #[arg(long)]
    latency: Option<f64>,
}

impl Common {
    fn load(&self) -> CliResult<ExperimentConfig> {
        let data_dir = std::env::var_os("HYFL_DATA_DIR").map(PathBuf::from);
        let mut cfg = ExperimentConfig::load(&self.config, data_dir.as_deref())?;
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(l) = self.latency {
            cfg.latency = l;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn p_star_from(path: &Path) -> CliResult<f64> {
    CentralRun::load_json(path)
        .map(|c| c.p_star)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(c) => print!("{}", cmd_run(&c.load()?)?),
        Command::Central(c) => {
            let (r, files) = cmd_central(&c.load()?)?;
            println!("P* {}  D* {}  gap {}  iterations {}", r.p_star, r.d_star, r.gap, r.iterations);
            println!("accuracy {}", r.accuracy);
            if !r.converged {
                log::warn!("gap target not reached");
            }
            files.iter().for_each(|f| println!("wrote {}", f.display()));
        }
        Command::Tune { common, jobs, points } => {
            let mut cfg = common.load()?;
            if let Some(p) = points {
                cfg.tune.points = p;
                cfg.validate()?;
            }
            let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let (sel, files) = cmd_tune(&cfg, jobs)?;
            println!("selected {}", serde_json::to_string(&sel).expect("serializable"));
            files.iter().for_each(|f| println!("wrote {}", f.display()));
        }
        Command::PartitionInfo(c) => {
            let (s, path) = cmd_partition_info(&c.load()?)?;
            println!("{}", serde_json::to_string_pretty(&s).expect("serializable"));
            println!("wrote {}", path.display());
        }
        Command::Plot { inputs, out, window, x_axis, p_star, central } => {
            let p_star = match (p_star, central) {
                (Some(p), _) => Some(p),
                (None, Some(path)) => Some(p_star_from(&path)?),
                (None, None) => None,
            };
            if window == 0 {
                return Err(CliError::Config("window must be at least 1".into()));
            }
            let (_, files) = cmd_plot(&inputs, &PlotOptions { window, x_axis, p_star }, &out)?;
            files.iter().for_each(|f| println!("wrote {}", f.display()));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
