//! `pdmp-lab`: batch experiments for the Bouncy Particle Sampler and
//! Randomized HMC.

mod commands;
mod config;
mod target;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use target::Target;

#[derive(Parser, Debug)]
#[command(name = "pdmp-lab", version, about = "PDMP sampling experiments", args_override_self = true)]
struct Cli {
    /// Worker threads for replicate ensembles.
    #[arg(long, global = true, env = "PDMP_LAB_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one trajectory and write its event log.
    #[command(args_override_self = true)]
    Sample(SampleArgs),
    /// Closed-form refreshment tuning with its certificate.
    #[command(args_override_self = true)]
    Tune(TuneArgs),
    /// Check the certificate inequalities, optionally over a grid.
    #[command(args_override_self = true)]
    Certify(CertifyArgs),
    /// Synchronously coupled RHMC pairs and the fitted contraction rate.
    #[command(args_override_self = true)]
    Couple(CoupleArgs),
    /// Events-per-ESS scaling study across dimensions.
    #[command(args_override_self = true)]
    Scaling(ScalingArgs),
    /// Distance between BPS first-coordinate paths and the RHMC limit.
    #[command(args_override_self = true)]
    Weaklimit(WeakLimitArgs),
    /// Effective sample sizes of the test functions for one setting.
    #[command(args_override_self = true)]
    EssBench(EssBenchArgs),
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[arg(long, value_parser = ["bps", "rhmc"])]
    process: String,
    #[arg(long, default_value = "gaussian")]
    target: Target,
    #[arg(long)]
    d: usize,
    #[arg(long = "lambda-ref")]
    lambda_ref: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, conflicts_with = "events", required_unless_present = "events")]
    horizon: Option<f64>,
    #[arg(long)]
    events: Option<usize>,
    /// RHMC flow: auto, exact or leapfrog:<h>.
    #[arg(long, default_value = "auto")]
    flow: String,
    /// Fixed thinning window for BPS.
    #[arg(long)]
    slice: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Event log path; standard output when absent.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct TuneArgs {
    #[arg(long)]
    m: f64,
    #[arg(long = "M")]
    big_m: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Sharper rates for Gaussian targets.
    #[arg(long)]
    gaussian: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct CertifyArgs {
    #[arg(long, required_unless_present = "grid")]
    m: Option<f64>,
    #[arg(long = "M", required_unless_present = "grid")]
    big_m: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, conflicts_with = "grid")]
    gaussian: bool,
    #[arg(long)]
    json: bool,
    /// Sweep m/M and alpha instead of checking one point.
    #[arg(long)]
    grid: bool,
    #[arg(long = "grid-ratio", default_value_t = 100)]
    grid_ratio: usize,
    #[arg(long = "grid-scale", default_value_t = 100)]
    grid_scale: usize,
    #[arg(long = "grid-alpha", default_value_t = 20)]
    grid_alpha: usize,
    /// Smallest m/M of the sweep.
    #[arg(long = "min-ratio", default_value_t = 1e-3)]
    min_ratio: f64,
    #[arg(long = "max-alpha", default_value_t = 0.99)]
    max_alpha: f64,
}

#[derive(Args, Debug)]
struct CoupleArgs {
    #[arg(long, default_value = "gaussian")]
    target: Target,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Defaults to the tuned rate.
    #[arg(long = "lambda-ref")]
    lambda_ref: Option<f64>,
    /// Certificate supplying the rate and metric: gaussian or wasserstein.
    #[arg(long, default_value = "gaussian", value_parser = ["gaussian", "wasserstein"])]
    family: String,
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    #[arg(long, default_value_t = 10.0)]
    horizon: f64,
    #[arg(long = "grid-step", default_value_t = 0.25)]
    grid_step: f64,
    /// Start of the fitting window; defaults to 1 / lambda_ref.
    #[arg(long = "t-min")]
    t_min: Option<f64>,
    #[arg(long = "n-boot", default_value_t = 500)]
    n_boot: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long = "stream-base", default_value_t = 0)]
    stream_base: u64,
    /// Start both copies of every pair at the same point.
    #[arg(long)]
    identical: bool,
    /// Trace CSV (`replicate,t,d2`).
    #[arg(long)]
    out: Option<String>,
    /// Ensemble-mean CSV (`t,mean_d2,se`).
    #[arg(long)]
    summary: Option<String>,
}

#[derive(Args, Debug)]
struct ScalingArgs {
    #[arg(long)]
    f: String,
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    #[arg(long, default_value = "const1")]
    policy: String,
    #[arg(long, default_value_t = 100_000)]
    budget: usize,
    #[arg(long, default_value_t = 20)]
    replicates: usize,
    #[arg(long, default_value_t = 0.25)]
    dt: f64,
    #[arg(long, default_value = "blocking")]
    aggregate: String,
    #[arg(long = "n-boot", default_value_t = 2000)]
    n_boot: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Fit report path; standard output when absent.
    #[arg(long)]
    out: Option<String>,
    /// Per-replicate ESS CSV.
    #[arg(long)]
    csv: Option<String>,
    /// Required slope range `lo:hi`; exit 4 when the fit misses it.
    #[arg(long = "expect-slope")]
    expect_slope: Option<String>,
}

#[derive(Args, Debug)]
struct WeakLimitArgs {
    #[arg(long)]
    b: f64,
    #[arg(long, value_delimiter = ',', required = true)]
    dims: Vec<usize>,
    #[arg(long = "T")]
    horizon: f64,
    #[arg(long, default_value_t = 2000)]
    replicates: usize,
    #[arg(long = "lambda-ref", default_value_t = 1.0)]
    lambda_ref: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Path functional: residuals or snapshots.
    #[arg(long, default_value = "residuals")]
    statistic: String,
    #[arg(long, default_value_t = 10)]
    snapshots: usize,
    #[arg(long = "residual-step", default_value_t = 0.5)]
    residual_step: f64,
    #[arg(long = "n-boot", default_value_t = 200)]
    n_boot: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Report CSV (`d,distance,se,hamiltonian_rms`).
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args, Debug)]
struct EssBenchArgs {
    #[arg(long, default_value = "bps", value_parser = ["bps", "rhmc"])]
    process: String,
    #[arg(long, default_value = "gaussian")]
    target: Target,
    #[arg(long)]
    d: usize,
    #[arg(long = "lambda-ref", default_value_t = 1.0)]
    lambda_ref: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 100_000)]
    events: usize,
    #[arg(long, default_value_t = 4)]
    replicates: usize,
    /// Comma-separated test functions; all that fit `d` when absent.
    #[arg(long, value_delimiter = ',')]
    functions: Vec<String>,
    #[arg(long, default_value_t = 0.25)]
    dt: f64,
    #[arg(long, default_value = "auto")]
    flow: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// ESS CSV path; standard output when absent.
    #[arg(long)]
    out: Option<String>,
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(commands::EXIT_USAGE);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { commands::EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return ExitCode::from(commands::EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(commands::EXIT_USAGE);
        }
    }
    let outcome = match cli.command {
        Command::Sample(a) => commands::sample(a),
        Command::Tune(a) => commands::tune(a),
        Command::Certify(a) => commands::certify(a),
        Command::Couple(a) => commands::couple(a),
        Command::Scaling(a) => commands::scaling(a),
        Command::Weaklimit(a) => commands::weaklimit(a),
        Command::EssBench(a) => commands::ess_bench(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
