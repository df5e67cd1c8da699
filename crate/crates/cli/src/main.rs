use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sessionlens_core::config::PipelineConfig;
use sessionlens_core::fixture::{generate, FixtureConfig};
use sessionlens_core::pipeline::{self, PipelineError};

/// Fuzzy clustering of web-log user sessions.
#[derive(Parser, Debug)]
#[command(name = "sessionlens", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse, clean and sessionize a log; writes sessions.csv, vocabulary.csv, cleaning.json.
    Preprocess(PipelineArgs),
    /// Weight URLs and sessions, reduce the matrix; writes weights.csv, reduction.json, matrix files.
    Weigh(PipelineArgs),
    /// Run fuzzy c-means in both modes at --k (or every k of the sweep).
    Cluster(PipelineArgs),
    /// Sweep k in both modes and compare Xie–Beni validity; writes sweep.csv.
    Sweep(PipelineArgs),
    /// Write a synthetic log with planted session profiles.
    Fixture(FixtureArgs),
}

#[derive(Args, Debug)]
struct PipelineArgs {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Access log (plain or gzip). Without it, earlier stages are read from --output-dir.
    #[arg(long)]
    input: Option<String>,
    /// common, combined or auto.
    #[arg(long)]
    dialect: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
    #[arg(long)]
    session_timeout_minutes: Option<String>,
    #[arg(long)]
    alpha1: Option<String>,
    #[arg(long)]
    alpha2: Option<String>,
    #[arg(long)]
    beta1: Option<String>,
    #[arg(long)]
    beta2: Option<String>,
    /// Fuzzifier, > 1.
    #[arg(long)]
    q: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long)]
    max_iter: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Single cluster count for `cluster`.
    #[arg(long)]
    k: Option<String>,
    #[arg(long)]
    k_min: Option<String>,
    #[arg(long)]
    k_max: Option<String>,
    /// Memberships below this are left out of clusters JSON.
    #[arg(long)]
    membership_floor: Option<String>,
    /// Worker threads for the sweep, 0 = auto. Overrides SESSIONLENS_THREADS.
    #[arg(long)]
    threads: Option<String>,
    /// Any other config key, e.g. --set emit_histogram=false.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl PipelineArgs {
    fn resolve(&self) -> Result<PipelineConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Ok(threads) = std::env::var("SESSIONLENS_THREADS") {
            cfg.set("threads", threads.trim())?;
        }
        let flags = [
            ("input", &self.input),
            ("dialect", &self.dialect),
            ("output_dir", &self.output_dir),
            ("session_timeout_minutes", &self.session_timeout_minutes),
            ("alpha1", &self.alpha1),
            ("alpha2", &self.alpha2),
            ("beta1", &self.beta1),
            ("beta2", &self.beta2),
            ("q", &self.q),
            ("epsilon", &self.epsilon),
            ("max_iter", &self.max_iter),
            ("seed", &self.seed),
            ("k", &self.k),
            ("k_min", &self.k_min),
            ("k_max", &self.k_max),
            ("membership_floor", &self.membership_floor),
            ("threads", &self.threads),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        for pair in &self.set {
            let (key, value) = pair.split_once('=').unwrap_or((pair.as_str(), ""));
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct FixtureArgs {
    /// Log file to write.
    #[arg(long, default_value = "fixture.log")]
    output: PathBuf,
    /// Ground-truth CSV; defaults to <output>.truth.csv.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 2011)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    profiles: usize,
    #[arg(long, default_value_t = 30)]
    sessions_per_profile: usize,
    #[arg(long, default_value_t = 12)]
    pages_per_profile: usize,
    /// Fewest distinct profile pages in a planted session.
    #[arg(long, default_value_t = 8)]
    min_pages: usize,
    #[arg(long, default_value_t = 12)]
    max_pages: usize,
    #[arg(long, default_value_t = 6)]
    single_page_sessions: usize,
    #[arg(long, default_value_t = 0.3)]
    rare_page_rate: f64,
    /// Leave out embedded objects, errors and robot traffic.
    #[arg(long)]
    no_noise: bool,
}

fn run_fixture(args: &FixtureArgs) -> Result<String, String> {
    if args.profiles == 0 || args.pages_per_profile == 0 {
        return Err("profiles and pages_per_profile must be positive".into());
    }
    if args.min_pages == 0 || args.min_pages > args.max_pages {
        return Err("need 1 <= min_pages <= max_pages".into());
    }
    if !(0.0..=1.0).contains(&args.rare_page_rate) {
        return Err("rare_page_rate must lie in [0, 1]".into());
    }
    let cfg = FixtureConfig {
        seed: args.seed,
        profiles: args.profiles,
        sessions_per_profile: args.sessions_per_profile,
        pages_per_profile: args.pages_per_profile,
        min_pages: args.min_pages,
        max_pages: args.max_pages,
        single_page_sessions: args.single_page_sessions,
        rare_page_rate: args.rare_page_rate,
        noise: !args.no_noise,
        ..FixtureConfig::default()
    };
    let fx = generate(&cfg);
    let truth = args.truth.clone().unwrap_or_else(|| {
        let mut name = args.output.clone().into_os_string();
        name.push(".truth.csv");
        PathBuf::from(name)
    });
    std::fs::write(&args.output, &fx.log).map_err(|e| format!("cannot write `{}`: {e}", args.output.display()))?;
    std::fs::write(&truth, fx.truth_csv()).map_err(|e| format!("cannot write `{}`: {e}", truth.display()))?;
    Ok(format!(
        "wrote {} lines to {} and {} sessions to {}\n",
        fx.log.lines().count(),
        args.output.display(),
        fx.sessions.len(),
        truth.display()
    ))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Fixture(args) => run_fixture(args).map_err(|msg| (msg, 2)),
        Command::Preprocess(args) => args.resolve().and_then(|cfg| pipeline::run_preprocess(&cfg)).map_err(failure),
        Command::Weigh(args) => args.resolve().and_then(|cfg| pipeline::run_weigh(&cfg)).map_err(failure),
        Command::Cluster(args) => args.resolve().and_then(|cfg| pipeline::run_cluster(&cfg)).map_err(failure),
        Command::Sweep(args) => args.resolve().and_then(|cfg| pipeline::run_sweep(&cfg)).map_err(failure),
    };
    match outcome {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err((msg, code)) => {
            eprintln!("sessionlens: {msg}");
            ExitCode::from(code)
        }
    }
}

fn failure(e: PipelineError) -> (String, u8) {
    (e.to_string(), e.exit_code() as u8)
}
