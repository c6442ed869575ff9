use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use teleassist_core::harness::{
    load_logs, run_experiment, summarize, EpisodeLog, ExperimentConfig, HarnessError,
};
use teleassist_core::oracle::check_hmm;
use teleassist_core::session::{SessionConfig, VisualizationCondition};
use teleassist_core::workspace::Scenario;
use teleassist_service::{AppState, ServiceConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser)]
#[command(
    name = "teleassist",
    version,
    about = "Shared-autonomy teleoperation experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch experiment and write logs plus summary tables.
    Run {
        #[arg(long)]
        experiment: PathBuf,
        #[arg(long, env = "TELEASSIST_OUT")]
        out: PathBuf,
        /// Worker threads; 0 uses every core.
        #[arg(long, env = "TELEASSIST_JOBS", default_value_t = 0)]
        jobs: usize,
        /// Overrides the experiment's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Re-run a logged episode from its header and inputs and compare.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Summarize a directory of episode logs.
    Summarize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Check the belief filter against a brute-force reference.
    Oracle {
        #[arg(long, value_enum)]
        check: OracleCheck,
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        tolerance: f64,
    },
    /// Host live sessions over WebSocket.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Builtin scenario name or scenario file.
        #[arg(long, default_value = "tabletop4")]
        scenario: String,
        /// Session config file (JSON); flags below override it.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        /// none, goal_only or goal_plus_trajectory.
        #[arg(long)]
        condition: Option<String>,
        #[arg(long)]
        rate_hz: Option<f64>,
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long)]
        log_dir: Option<PathBuf>,
        /// One tick per control message instead of the clock.
        #[arg(long)]
        lockstep: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleCheck {
    Hmm,
}

enum Failure {
    Config(String),
    Check(String),
    Other(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::ReplayMismatch(_) => Failure::Check(e.to_string()),
            HarnessError::Io(_) | HarnessError::Csv(_) => Failure::Other(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            experiment,
            out,
            jobs,
            seed,
        } => run(&experiment, &out, jobs, seed),
        Command::Replay { log } => replay(&log),
        Command::Summarize { input, csv } => summarize_dir(&input, &csv),
        Command::Oracle {
            check: OracleCheck::Hmm,
            instances,
            seed,
            tolerance,
        } => oracle(instances, seed, tolerance),
        Command::Serve {
            port,
            host,
            scenario,
            config,
            alpha,
            condition,
            rate_hz,
            static_dir,
            log_dir,
            lockstep,
        } => serve(ServeArgs {
            port,
            host,
            scenario,
            config,
            alpha,
            condition,
            rate_hz,
            static_dir,
            log_dir,
            lockstep,
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Check(m)) => {
            eprintln!("check failed: {m}");
            ExitCode::from(EXIT_CHECK)
        }
        Err(Failure::Other(m)) => {
            eprintln!("error: {m}");
            ExitCode::FAILURE
        }
    }
}

fn run(experiment: &Path, out: &Path, jobs: usize, seed: Option<u64>) -> Result<(), Failure> {
    let mut cfg = ExperimentConfig::load(experiment)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let scenario = cfg.load_scenario(experiment.parent())?;
    let start = Instant::now();
    let batch = run_experiment(&cfg, &scenario, jobs)?;
    batch.write(out)?;
    eprintln!(
        "{} episodes in {:.2}s -> {}",
        batch.logs.len(),
        start.elapsed().as_secs_f64(),
        out.display()
    );
    print!("{}", String::from_utf8_lossy(&batch.summary.to_csv()?));
    Ok(())
}

fn read_log(path: &Path) -> Result<EpisodeLog, Failure> {
    let file =
        fs::File::open(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    Ok(EpisodeLog::read_jsonl(std::io::BufReader::new(file))?)
}

fn replay(path: &Path) -> Result<(), Failure> {
    let log = read_log(path)?;
    log.verify_replay()?;
    println!(
        "{}: {} ticks reproduced, outcome {}",
        path.display(),
        log.records.len(),
        serde_json::to_string(&log.outcome).expect("outcome serializes")
    );
    Ok(())
}

fn summarize_dir(input: &Path, csv: &Path) -> Result<(), Failure> {
    let logs = load_logs(input)?;
    let summary = summarize(&logs)?;
    let table = summary.to_csv()?;
    fs::write(csv, &table).map_err(|e| Failure::Other(format!("{}: {e}", csv.display())))?;
    print!("{}", String::from_utf8_lossy(&table));
    Ok(())
}

fn oracle(instances: usize, seed: u64, tolerance: f64) -> Result<(), Failure> {
    let report = check_hmm(instances, seed);
    println!(
        "hmm: {} instances, max |error| {:.3e} (tolerance {:.0e}), {:.2}s",
        report.instances,
        report.max_abs_error,
        tolerance,
        report.elapsed.as_secs_f64()
    );
    if report.max_abs_error <= tolerance {
        Ok(())
    } else {
        Err(Failure::Check(format!(
            "filter differs from the path-sum reference by {:.3e}",
            report.max_abs_error
        )))
    }
}

struct ServeArgs {
    port: Option<u16>,
    host: String,
    scenario: String,
    config: Option<PathBuf>,
    alpha: Option<f64>,
    condition: Option<String>,
    rate_hz: Option<f64>,
    static_dir: Option<PathBuf>,
    log_dir: Option<PathBuf>,
    lockstep: bool,
}

fn serve(args: ServeArgs) -> Result<(), Failure> {
    let port = teleassist_service::resolve_port(args.port).map_err(Failure::Config)?;
    let scenario =
        Scenario::resolve(&args.scenario, None).map_err(|e| Failure::Config(e.to_string()))?;
    let mut session = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            serde_json::from_str::<SessionConfig>(&text)
                .map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        None => SessionConfig::default(),
    };
    if let Some(a) = args.alpha {
        session.controller.alpha = a;
    }
    if let Some(c) = &args.condition {
        session.condition = serde_json::from_value::<VisualizationCondition>(c.as_str().into())
            .map_err(|_| Failure::Config(format!("unknown condition `{c}`")))?;
    }
    if let Some(r) = args.rate_hz {
        if !(r.is_finite() && r > 0.0) {
            return Err(Failure::Config(format!("rate must be positive, got {r}")));
        }
        session.rate_hz = r;
    }
    let mut cfg = ServiceConfig::new(scenario);
    cfg.session = session;
    cfg.lockstep = args.lockstep;
    cfg.static_dir = args.static_dir;
    cfg.log_dir = args.log_dir;
    let state = AppState::new(cfg).map_err(|e| Failure::Config(e.to_string()))?;

    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let addr = format!("{}:{port}", args.host);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Failure::Other(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Failure::Config(format!("bind {addr}: {e}")))?;
        eprintln!("listening on ws://{addr}/ws");
        teleassist_service::serve(listener, state)
            .await
            .map_err(|e| Failure::Other(e.to_string()))
    })
}
