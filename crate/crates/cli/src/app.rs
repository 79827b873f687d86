//! Argument parsing and command dispatch.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use lace::dataio::LabelMap;
use lace::estimator::EstimatorConfig;
use lace::oracle::ConsistencySettings;
use serde::Serialize;

use crate::estimate::{estimate, parse_fee, EstimateRequest};
use crate::failure::{ExitStatus, Failure};
use crate::reproduce::{reproduce, Conventions, DatasetSnapshot, RunManifest};
use crate::validate::{run_battery, ValidateSettings};

#[derive(Debug, Parser)]
#[command(
    name = "lace",
    version,
    about = "Long-term causal effects from short-term behavioral experiments"
)]
pub struct Cli {
    /// Worker threads for the Monte Carlo loops (results do not depend on it).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score the estimator and both baselines on the held-out period over random fees.
    Reproduce(ReproduceArgs),
    /// One estimate for one fee vector.
    Estimate(EstimateArgs),
    /// Synthetic checks against the brute-force oracle.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    /// Panel CSV; the bundled table is used when omitted.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    #[arg(long, default_value_t = 3)]
    pub horizon: usize,
    /// `12`: table game 1 ran the baseline policy. `21`: the reverse.
    #[arg(long, default_value = "12")]
    pub label_map: LabelMap,
    /// Give the column role the zero-sum payoffs `-Gᵀ` instead of `Gᵀ`.
    #[arg(long)]
    pub negate_column_payoffs: bool,
    /// Multinomial sample size behind each reported frequency vector.
    #[arg(long, default_value_t = 20)]
    pub effective_count: u32,
}

impl ModelArgs {
    fn config(&self) -> EstimatorConfig {
        EstimatorConfig {
            iterations: self.iterations,
            horizon: self.horizon,
            seed: self.seed,
            effective_count: self.effective_count,
            negate_column_payoffs: self.negate_column_payoffs,
            ..EstimatorConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct ReproduceArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 25)]
    pub fees: usize,
    /// Pre-period of the DID baseline.
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
    pub did_pre: u8,
    /// Replay the run recorded in a results file or bare manifest; other
    /// model flags are ignored.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "results")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Ten comma-separated fee components, row actions then column actions.
    #[arg(
        long,
        conflicts_with = "fee_file",
        default_value = "0,1,0,2,0,0,0,0,1,1"
    )]
    pub fee: String,
    #[arg(long)]
    pub fee_file: Option<PathBuf>,
    /// Also estimate the randomization variance from this many designs.
    #[arg(long)]
    pub variance: Option<usize>,
    /// Write `estimate.json` here in addition to standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Estimator iterations per synthetic experiment.
    #[arg(long, default_value_t = ConsistencySettings::default().iterations)]
    pub iterations: usize,
    #[arg(long, default_value_t = ConsistencySettings::default().experiments)]
    pub experiments: usize,
    #[arg(long, default_value_t = ConsistencySettings::default().oracle_replicates)]
    pub oracle_replicates: usize,
    /// Flip the estimator's fee sign in the consistency check, which must then fail.
    #[arg(long)]
    pub inject_wrong_sign: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .and_then(|()| fs::write(dir.join(name), contents))
        .map_err(|e| Failure::data(e).context(format!("cannot write {}", dir.join(name).display())))
}

fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

#[derive(Serialize)]
struct Timing {
    wall_clock_seconds: f64,
    workers: usize,
}

fn cmd_reproduce(args: &ReproduceArgs) -> Result<(), Failure> {
    let manifest = match &args.manifest {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::data(e).context(format!("cannot read {}", path.display())))?;
            RunManifest::from_json(&text)?
        }
        None => {
            let m = &args.model;
            RunManifest::new(
                DatasetSnapshot::load(m.dataset.as_deref())?,
                m.seed,
                args.fees,
                m.label_map,
                Conventions {
                    did_pre: args.did_pre.into(),
                    ..Conventions::default()
                },
                m.config(),
            )
        }
    };
    let start = Instant::now();
    let output = reproduce(&manifest)?;
    let elapsed = start.elapsed().as_secs_f64();
    write(&args.out, "results.json", &output.to_json())?;
    write(&args.out, "results.csv", &output.to_csv())?;
    let timing = Timing {
        wall_clock_seconds: elapsed,
        workers: rayon::current_num_threads(),
    };
    write(&args.out, "timing.json", &to_json(&timing))?;
    println!("method  mse");
    println!("lace    {:.6}", output.mse.lace);
    println!("naive   {:.6}", output.mse.naive);
    println!("did     {:.6}", output.mse.did);
    log::info!("wrote {} in {elapsed:.2}s", args.out.display());
    Ok(())
}

fn cmd_estimate(args: &EstimateArgs) -> Result<(), Failure> {
    let fee =
        match &args.fee_file {
            Some(path) => parse_fee(&fs::read_to_string(path).map_err(|e| {
                Failure::data(e).context(format!("cannot read {}", path.display()))
            })?)?,
            None => parse_fee(&args.fee)?,
        };
    let request = EstimateRequest {
        dataset: DatasetSnapshot::load(args.model.dataset.as_deref())?,
        label_map: args.model.label_map,
        fee,
        estimator: args.model.config(),
        variance_designs: args.variance,
    };
    let output = estimate(&request)?;
    let json = to_json(&output);
    if let Some(dir) = &args.out {
        write(dir, "estimate.json", &json)?;
    }
    print!("{json}");
    Ok(())
}

fn cmd_validate(args: &ValidateArgs) -> Result<(), Failure> {
    let settings = ValidateSettings {
        seed: args.seed,
        consistency: ConsistencySettings {
            iterations: args.iterations,
            experiments: args.experiments,
            oracle_replicates: args.oracle_replicates,
        },
        inject_wrong_sign: args.inject_wrong_sign,
    };
    let report = run_battery(&settings)?;
    for check in &report.checks {
        let mark = if check.passed { "PASS" } else { "FAIL" };
        println!("{mark} {:<20} {}", check.name, check.detail);
    }
    if let Some(dir) = &args.out {
        write(dir, "validation.json", &to_json(&report))?;
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(Failure::new(
            ExitStatus::ValidationFailed,
            anyhow::anyhow!("validation battery failed"),
        ))
    }
}

pub fn run(cli: &Cli) -> Result<(), Failure> {
    let dispatch = || match &cli.command {
        Command::Reproduce(a) => cmd_reproduce(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Validate(a) => cmd_validate(a),
    };
    match cli.workers {
        None => dispatch(),
        Some(0) => Err(Failure::usage("--workers must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Failure::usage(format!("cannot start {n} workers: {e}")))?
            .install(dispatch),
    }
}

/// Parse `args`, run, report, and return the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitStatus::Usage.code()
            } else {
                ExitStatus::Success.code()
            };
        }
    };
    match run(&cli) {
        Ok(()) => ExitStatus::Success.code(),
        Err(f) => {
            eprintln!("error: {f}");
            f.status.code()
        }
    }
}
