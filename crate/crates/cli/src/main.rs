//! `ddspce`: transfer-capability studies with sparse polynomial chaos
//! surrogates and a Monte Carlo baseline.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical
//! failure, 3 sample budget exhausted (the best model is still written).

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ddspce_core::assess::DistributionSummary;
use ddspce_core::pipeline::{self, Overrides, RunConfig};
use ddspce_core::pce::FitError;
use ddspce_core::{Error, Parallelism};

#[derive(Parser)]
#[command(name = "ddspce", version, about = "Probabilistic transfer capability with sparse PCE surrogates")]
struct Cli {
    /// Worker threads (0 = available parallelism, 1 = sequential).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Suppress progress output on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the surrogate from the training pool.
    Fit(Common),
    /// Monte Carlo baseline over the MCS sample set.
    Mcs(Common),
    /// Evaluate a fitted surrogate on the evaluation set.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<output_dir>/model.json`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// TRM/ATC report from saved summaries.
    Atc {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<output_dir>/mcs_summary.json` when present.
        #[arg(long)]
        mcs_summary: Option<PathBuf>,
        /// Defaults to `<output_dir>/surrogate_summary.json` when present.
        #[arg(long)]
        surrogate_summary: Option<PathBuf>,
    },
    /// Evaluate the surrogate, then write the ATC report.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        mcs_summary: Option<PathBuf>,
    },
    /// Draw synthetic input samples from the config's `synth` section.
    Sample {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    network: Option<PathBuf>,
    #[arg(long)]
    samples: Option<PathBuf>,
    #[arg(long)]
    eval_samples: Option<PathBuf>,
    #[arg(long)]
    mcs_samples: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum polynomial degree.
    #[arg(long)]
    degree: Option<usize>,
    #[arg(long)]
    q_norm: Option<f64>,
    #[arg(long)]
    e_stop: Option<f64>,
    /// Training-size budget.
    #[arg(long)]
    max_mp: Option<usize>,
    /// Comma-separated confidence levels in percent.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    #[arg(long)]
    etc: Option<f64>,
    #[arg(long)]
    cbm: Option<f64>,
}

impl Common {
    fn load(&self) -> Result<RunConfig, Error> {
        let ov = Overrides {
            network: self.network.clone(),
            samples: self.samples.clone(),
            eval_samples: self.eval_samples.clone(),
            mcs_samples: self.mcs_samples.clone(),
            output_dir: self.output_dir.clone(),
            seed: self.seed,
            degree: self.degree,
            q_norm: self.q_norm,
            e_stop: self.e_stop,
            max_mp: self.max_mp,
            confidence_levels: self.levels.clone(),
            etc: self.etc,
            cbm: self.cbm,
        };
        Ok(RunConfig::load(&self.config, &ov)?)
    }
}

fn summary_at(explicit: Option<&Path>, fallback: PathBuf) -> Result<Option<DistributionSummary>, Error> {
    match explicit {
        Some(p) => pipeline::load_summary(p).map(Some),
        None if fallback.exists() => pipeline::load_summary(&fallback).map(Some),
        None => Ok(None),
    }
}

fn print_distribution(label: &str, r: &pipeline::SampleReport, cfg: &RunConfig) {
    let s = &r.summary;
    println!(
        "{label}: {} values, mean {:.4} MW, std {:.4} MW, range [{:.4}, {:.4}]; outputs in {}",
        s.count,
        s.mean,
        s.std,
        s.min,
        s.max,
        cfg.output_dir.display()
    );
}

fn run(cli: &Cli) -> Result<(), Error> {
    let par = Parallelism::from_threads(Some(cli.threads));
    match &cli.command {
        Command::Fit(common) => {
            let cfg = common.load()?;
            let result = pipeline::cmd_fit(&cfg, par);
            let rounds = match &result {
                Ok(report) => &report.log.rounds,
                Err(Error::Fit(FitError::BudgetExhausted { best, .. })) => &best.rounds,
                Err(_) => &Vec::new(),
            };
            if !cli.quiet {
                for r in rounds {
                    eprintln!(
                        "round {:>3}: M_p = {:>5}, e_cloo = {:.4e}, active terms = {}/{}",
                        r.round, r.training_size, r.e_cloo, r.active_terms, r.candidate_terms
                    );
                }
            }
            if matches!(result, Err(Error::Fit(FitError::BudgetExhausted { .. }))) {
                eprintln!("best model so far written to {}", cfg.output_dir.join("model.json").display());
            }
            let report = result?;
            println!(
                "model written to {} (e_cloo {:.4e}, {} evaluator calls)",
                report.model_path.display(),
                report.log.e_cloo,
                report.log.evaluator_calls
            );
        }
        Command::Mcs(common) => {
            let cfg = common.load()?;
            let progress = |done: usize, total: usize| {
                if done.is_multiple_of((total / 20).max(1)) || done == total {
                    eprint!("\rmcs: {done}/{total}");
                    let _ = std::io::stderr().flush();
                }
            };
            let hook: Option<ddspce_core::assess::Progress<'_>> = (!cli.quiet).then_some(&progress);
            let report = pipeline::cmd_mcs(&cfg, par, hook)?;
            if !cli.quiet {
                eprintln!();
            }
            print_distribution("mcs", &report, &cfg);
        }
        Command::Evaluate { common, model } => {
            let cfg = common.load()?;
            let model = model.clone().unwrap_or_else(|| cfg.output_dir.join("model.json"));
            let report = pipeline::cmd_evaluate(&cfg, &model, par)?;
            print_distribution("surrogate", &report, &cfg);
        }
        Command::Atc { common, mcs_summary, surrogate_summary } => {
            let cfg = common.load()?;
            let mcs = summary_at(mcs_summary.as_deref(), cfg.output_dir.join("mcs_summary.json"))?;
            let sur = summary_at(surrogate_summary.as_deref(), cfg.output_dir.join("surrogate_summary.json"))?;
            let doc = pipeline::cmd_atc(&cfg, mcs.as_ref(), sur.as_ref())?;
            print!("{}", doc.to_text());
        }
        Command::Report { common, model, mcs_summary } => {
            let cfg = common.load()?;
            let model = model.clone().unwrap_or_else(|| cfg.output_dir.join("model.json"));
            let mcs = summary_at(mcs_summary.as_deref(), cfg.output_dir.join("mcs_summary.json"))?;
            let (eval, doc) = pipeline::cmd_report(&cfg, &model, mcs.as_ref(), par)?;
            print_distribution("surrogate", &eval, &cfg);
            print!("{}", doc.to_text());
        }
        Command::Sample { common, rows, out } => {
            let cfg = common.load()?;
            let s = pipeline::cmd_sample(&cfg, *rows, cfg.seed, out)?;
            println!("{} rows x {} columns written to {}", s.nrows(), s.ncols(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
