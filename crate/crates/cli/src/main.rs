mod plot;

use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use safe_explore::experiment::{self, EnvironmentId, ExperimentConfig, Method, AGGREGATE_CSV, EPISODES_CSV};
use safe_explore::verify::{run_suite, Suite, SuiteOptions};
use safe_explore::Error;

pub const OUTPUT_DIR_VAR: &str = "SAFE_EXPLORE_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "results";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("verification failed: {0}")]
    VerificationFailed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::Validation(_) | Error::ConfigParse(_) | Error::Domain(_) | Error::Shape { .. }) => 2,
            CliError::Core(Error::UnrecoverableSafety { .. } | Error::Infeasible(_)) => 3,
            CliError::Input(_) => 2,
            CliError::VerificationFailed(_) => 4,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "safe-explore", version, about = "Safe exploration experiments and verification suites")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train with safe exploration and write per-step, per-episode and aggregate CSVs.
    Run(ConfigArgs),
    /// Run a verification suite and exit with status 4 if any check fails.
    Verify {
        /// lemma1 | lemma2 | theorem1-stay | theorem1-back | theorem2
        suite: Suite,
        #[command(flatten)]
        config: ConfigArgs,
        /// Monte Carlo samples per check.
        #[arg(long)]
        samples: Option<usize>,
        /// Random states per environment.
        #[arg(long)]
        states: Option<usize>,
        /// Random Markov chains (lemma2).
        #[arg(long)]
        specs: Option<usize>,
    },
    /// Render cost.svg and frequency.svg from a run's CSVs.
    Plot {
        /// Directory holding episodes.csv and aggregate.csv.
        #[arg(required_unless_present_all = ["episodes", "aggregate"])]
        dir: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<PathBuf>,
        #[arg(long)]
        aggregate: Option<PathBuf>,
        /// Where to write the SVGs (defaults to the input directory).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the fully resolved configuration as TOML.
    PrintConfig(ConfigArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// TOML configuration file; missing keys take their defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    env: Option<EnvironmentId>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    tau: Option<usize>,
    /// Output directory (else the config value, else $SAFE_EXPLORE_OUTPUT_DIR, else ./results).
    #[arg(long, short)]
    output: Option<PathBuf>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag.clone() { cfg.$($field).+ = v; })*
            };
        }
        set!(
            env => environment,
            method => method,
            seed => seed,
            runs => runs,
            episodes => episodes,
            steps => steps,
            eta => safety.eta,
            xi => safety.xi,
            tau => safety.tau,
        );
        if let Some(o) = &self.output {
            cfg.output_dir = Some(o.clone());
        } else if cfg.output_dir.is_none() {
            cfg.output_dir = std::env::var_os(OUTPUT_DIR_VAR).map(PathBuf::from);
        }
        Ok(cfg)
    }
}

fn run(args: &ConfigArgs) -> Result<(), CliError> {
    let mut cfg = args.resolve()?;
    cfg.validate()?;
    let dir = cfg.output_dir.get_or_insert_with(|| PathBuf::from(DEFAULT_OUTPUT_DIR)).clone();
    log::info!("running {} / {} with seed {}", cfg.environment, cfg.method, cfg.seed);
    let result = experiment::run_experiment(&cfg)?;
    experiment::write_artifacts(&result, &dir)?;
    let r = &result.report;
    println!(
        "{} {}: {} runs x {} episodes x {} steps",
        cfg.environment, cfg.method, cfg.runs, cfg.episodes, cfg.steps
    );
    println!(
        "safety frequency: min {:.4} mean {:.4} (eta {}); band {} strict {}",
        r.min_frequency,
        r.mean_frequency,
        r.threshold,
        if r.pass_band { "pass" } else { "fail" },
        if r.pass_strict { "pass" } else { "fail" }
    );
    println!("artifacts written to {}", dir.display());
    Ok(())
}

fn verify(suite: Suite, args: &ConfigArgs, opts: SuiteOptions) -> Result<(), CliError> {
    let cfg = args.resolve()?;
    let report = run_suite(suite, &cfg, &opts)?;
    println!("{report}");
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("verify-{suite}.csv"));
        report.write_csv(std::fs::File::create(&path)?)?;
        println!("report written to {}", path.display());
    }
    if report.passed() {
        Ok(())
    } else {
        Err(CliError::VerificationFailed(format!("{} of {} checks failed", report.failures().count(), report.checks.len())))
    }
}

fn plot(dir: Option<&Path>, episodes: Option<PathBuf>, aggregate: Option<PathBuf>, output: Option<PathBuf>) -> Result<(), CliError> {
    let pick = |given: Option<PathBuf>, name: &str| -> Result<PathBuf, CliError> {
        given
            .or_else(|| dir.map(|d| d.join(name)))
            .ok_or_else(|| CliError::Input(format!("no path for {name}")))
    };
    let episodes = pick(episodes, EPISODES_CSV)?;
    let aggregate = pick(aggregate, AGGREGATE_CSV)?;
    let out = output
        .or_else(|| dir.map(Path::to_path_buf))
        .or_else(|| aggregate.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    for p in plot::plot_files(&episodes, &aggregate, &out)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => run(&args),
        Command::Verify {
            suite,
            config,
            samples,
            states,
            specs,
        } => {
            let d = SuiteOptions::default();
            let opts = SuiteOptions {
                seed: config.seed.unwrap_or(d.seed),
                samples: samples.unwrap_or(d.samples),
                states: states.unwrap_or(d.states),
                specs: specs.unwrap_or(d.specs),
            };
            verify(suite, &config, opts)
        }
        Command::Plot {
            dir,
            episodes,
            aggregate,
            output,
        } => plot(dir.as_deref(), episodes, aggregate, output),
        Command::PrintConfig(args) => {
            let cfg = args.resolve()?;
            print!("{}", cfg.to_toml_string()?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
