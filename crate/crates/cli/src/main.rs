//! `lbs`: batch driver for the local Bak-Sneppen simulator.
//!
//! Each subcommand merges its flags with an optional JSON config file
//! (explicit flags win), runs a computation that is deterministic in
//! `--seed`, and writes one versioned CSV to `--out` (stdout by default;
//! relative paths land under `$LBS_OUT_DIR` when that is set).
//!
//! Exit codes: 0 success, 1 input error, 2 statistical test failure,
//! 3 internal error. Every failure prints a one-line JSON record on stderr.

mod commands;
mod config;
mod graphspec;
mod output;

use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use crate::config::FileConfig;

const GRAPH_HELP: &str =
    "Graph spec: cycle:N | path:N | star:K | complete:N | regular:N,D | edges:PATH";

#[derive(Parser)]
#[command(name = "lbs", version, about = "Local Bak-Sneppen simulator and verification toolkit")]
struct Cli {
    /// JSON config file supplying defaults; explicit flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Output file; `-` or omitted means stdout. Relative paths are resolved
    /// under $LBS_OUT_DIR when that variable is set.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Worker threads for replica-parallel subcommands (default: all cores).
    /// Output bytes do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Base RNG seed; every replica stream is derived from it by index.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InitKind {
    /// I.i.d. Exp(1) fitness, uniform active vertex.
    Iid,
    /// Near-constant fitness with a tiny symmetry-breaking perturbation.
    Equal,
    /// Exact stationary sample.
    Stationary,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one trajectory and emit per-step summaries.
    Simulate {
        #[arg(long, help = GRAPH_HELP)]
        graph: Option<String>,
        /// Steps to run (default 1000).
        #[arg(long)]
        steps: Option<u64>,
        /// Emit every thin-th step (default 1).
        #[arg(long)]
        thin: Option<u64>,
        /// Thresholds for the count/fraction columns (default 1).
        #[arg(long, value_delimiter = ',')]
        b: Vec<f64>,
        /// Initial condition (default iid).
        #[arg(long, value_enum)]
        init: Option<InitKind>,
    },

    /// Draw exact stationary samples, one CSV row per sample.
    SampleStationary {
        #[arg(long, help = GRAPH_HELP)]
        graph: Option<String>,
        /// Number of samples (default 1000).
        #[arg(long)]
        samples: Option<u64>,
    },

    /// Test that one dynamics step leaves the exact sampler's law unchanged;
    /// exits 2 with the failing test list when any marginal moves.
    VerifyStationarity {
        #[arg(long, help = GRAPH_HELP)]
        graph: Option<String>,
        /// Samples per cohort (default 10000).
        #[arg(long)]
        samples: Option<u64>,
        /// Family-wise significance level, Bonferroni-split (default 1e-3).
        #[arg(long)]
        significance: Option<f64>,
        /// Thresholds for the above-threshold count tests (default 0.5,1,2).
        #[arg(long, value_delimiter = ',')]
        b: Vec<f64>,
        /// Negative control: shift the stepped cohort by this amount so the
        /// test must reject; checks the verifier has power.
        #[arg(long, value_name = "DELTA")]
        inject_bias: Option<f64>,
    },

    /// Closed-form stationary fitness marginal against sampled draws on a grid.
    Density {
        #[arg(long, help = GRAPH_HELP)]
        graph: Option<String>,
        /// Vertex whose marginal to evaluate (default 0).
        #[arg(long)]
        vertex: Option<usize>,
        /// Sampler draws behind the empirical CDF column (default 10000).
        #[arg(long)]
        samples: Option<u64>,
        /// Grid upper end (default 5).
        #[arg(long)]
        grid_max: Option<f64>,
        /// Grid size including both ends (default 101).
        #[arg(long)]
        grid_points: Option<usize>,
    },

    /// General-graph mixing bounds: tails sandwiching the worst-case
    /// total-variation distance.
    Coupling {
        #[arg(long, help = GRAPH_HELP)]
        graph: Option<String>,
        /// Largest time on the tail grid (default 200).
        #[arg(long)]
        horizon: Option<u64>,
        /// Replicas per start vertex / start pair (default 2000).
        #[arg(long)]
        replicas: Option<u64>,
    },

    /// Cycle-specific sandwich from the three walk functionals
    /// (equator exit and cover times).
    CycleBounds {
        /// Cycle length, divisible by 4 (default 8).
        #[arg(long)]
        n: Option<usize>,
        /// Largest time on the tail grid (default 400).
        #[arg(long)]
        horizon: Option<u64>,
        /// Walk replicas (default 10000).
        #[arg(long)]
        replicas: Option<u64>,
    },

    /// Avalanche spacing scan over an (alpha, b) grid with the exact binomial
    /// sandwich and regime classification. Needs a regular graph.
    Avalanche {
        #[arg(long, help = GRAPH_HELP)]
        graph: Option<String>,
        /// Occupation fractions to scan (default 0.5).
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
        /// Fitness thresholds to scan (default 1).
        #[arg(long, value_delimiter = ',')]
        b: Vec<f64>,
        /// Steps per grid cell (default 100000).
        #[arg(long)]
        steps: Option<u64>,
    },

    /// Critical threshold b_c over a (d, alpha) grid.
    Bc {
        /// Degrees to tabulate (default 2).
        #[arg(long, value_delimiter = ',')]
        d: Vec<u32>,
        /// Occupation fractions to tabulate (default 0.5).
        #[arg(long, value_delimiter = ',')]
        alpha: Vec<f64>,
    },
}

/// CLI failure, ordered by exit code: input 1, statistical 2, internal 3.
#[derive(Debug)]
enum Failure {
    Input(String),
    Statistical { message: String, failing: Vec<String> },
    Internal(String),
}

impl Failure {
    fn input(msg: impl Into<String>) -> Self {
        Failure::Input(msg.into())
    }

    fn exit_code(&self) -> i32 {
        match self {
            Failure::Input(_) => 1,
            Failure::Statistical { .. } => 2,
            Failure::Internal(_) => 3,
        }
    }

    /// One-line machine-parseable error record.
    fn to_json(&self) -> String {
        match self {
            Failure::Input(m) => serde_json::json!({"error": "input", "message": m}),
            Failure::Statistical { message, failing } => {
                serde_json::json!({"error": "statistical", "message": message, "failing": failing})
            }
            Failure::Internal(m) => serde_json::json!({"error": "internal", "message": m}),
        }
        .to_string()
    }
}

impl From<lbs_core::Error> for Failure {
    fn from(e: lbs_core::Error) -> Self {
        use lbs_core::Error as E;
        match e {
            E::Input(_) | E::Construction(_) | E::InsufficientData { .. } => {
                Failure::Input(e.to_string())
            }
            E::Observer { .. } | E::Internal(_) => Failure::Internal(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Internal(format!("io: {e}"))
    }
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return 0;
        }
        Err(e) => {
            eprintln!("{}", Failure::Input(e.to_string()).to_json());
            return 1;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.to_json());
            f.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let file = match &cli.config {
        Some(path) => config::load(path)?,
        None => FileConfig::default(),
    };
    let seed = cli.seed.or(file.seed).unwrap_or(1);
    let threads = cli.threads.or(file.threads);
    let out = cli.out.clone().or_else(|| file.out.clone());

    // The pool only wraps computation; writing happens afterwards on this
    // thread, so output order never depends on scheduling.
    let rendered = in_pool(threads, || commands::render(cli.cmd, &file, seed))??;

    output::write_out(out.as_deref(), &rendered.text)?;
    match rendered.failure {
        None => Ok(()),
        Some((message, failing)) => Err(Failure::Statistical { message, failing }),
    }
}

fn in_pool<T: Send>(
    threads: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, Failure> {
    match threads {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Failure::input(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}
