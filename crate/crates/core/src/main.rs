use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sigauth::auth::{enroll_population, threshold_for_priority, Priority, Store, ThresholdPolicy, Verifier};
use sigauth::error::{Error, Result};
use sigauth::eval::ScoredProbe;
use sigauth::pipeline::{bench_training, check_disjoint, write_json, Dataset, EvalReport, RunConfig};
use sigauth::sigdata::load_samples;

#[derive(Parser)]
#[command(
    name = "sigauth",
    version,
    about = "Dynamic signature enrollment, verification and evaluation"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand; they override the config file.
#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Dataset directory.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; `bench` takes a comma-separated list including 1.
    #[arg(long, global = true, value_delimiter = ',')]
    workers: Option<Vec<usize>>,
    #[arg(long, global = true)]
    locals: Option<usize>,
    #[arg(long, global = true)]
    hidden: Option<usize>,
    #[arg(long, global = true)]
    variance_target: Option<f64>,
    /// Four increasing thresholds: low,avg,high,vhigh.
    #[arg(long, global = true)]
    threshold_policy: Option<ThresholdPolicy>,
    /// Directory for report files.
    #[arg(long, global = true, default_value = "reports")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic enrollment set, held-out probes and a manifest.
    Gen {
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
    },
    /// Fit the population PCA model and train every user in the dataset.
    Enroll,
    /// Verify one sample against an enrolled user.
    Verify {
        #[arg(long)]
        user: String,
        /// JSONL file holding the probe.
        #[arg(long)]
        sample: PathBuf,
        /// Zero-based line among the file's records.
        #[arg(long, default_value_t = 0)]
        index: usize,
        /// Use this tier's threshold instead of the user's own.
        #[arg(long)]
        priority: Option<Priority>,
        /// Explicit threshold; wins over any tier.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Score held-out probes against the store and report error rates.
    Eval {
        /// Also report specificity computed as TF / (TF + TG).
        #[arg(long = "paper-eq2")]
        printed_specificity: bool,
    },
    /// Time training at several worker counts.
    Bench {
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        users: Option<usize>,
    },
}

fn run_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_toml_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(v) = &c.store {
        cfg.store = v.clone();
    }
    if let Some(v) = &c.data {
        cfg.data = v.clone();
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some([w]) = c.workers.as_deref() {
        cfg.workers = *w;
    }
    if let Some(v) = c.locals {
        cfg.locals = v;
    }
    if let Some(v) = c.hidden {
        cfg.hidden = v;
    }
    if let Some(v) = c.variance_target {
        cfg.variance_target = v;
    }
    if let Some(v) = c.threshold_policy {
        cfg.policy = v;
    }
    Ok(cfg)
}

fn emit<T: Serialize>(out: &Path, name: &str, value: &T, table: Option<String>) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let path = out.join(name);
    write_json(&path, value)?;
    match table {
        Some(t) => print!("{t}"),
        None => println!("{}", serde_json::to_string_pretty(value).expect("report serializes")),
    }
    println!("report: {}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct EnrollReport {
    pca_id: String,
    components: usize,
    users: Vec<sigauth::auth::EnrolledUser>,
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = run_config(&cli.common)?;
    let bench = matches!(cli.command, Command::Bench { .. });
    if !bench && cli.common.workers.as_ref().is_some_and(|w| w.len() != 1) {
        return Err(Error::Config("--workers takes a single count here".into()));
    }
    match cli.command {
        Command::Gen { users, noise } => {
            if let Some(u) = users {
                cfg.users = u;
            }
            if let Some(n) = noise {
                cfg.noise = n;
            }
            cfg.validate()?;
            let manifest = Dataset::generate(&cfg)?.write(&cfg.data, &cfg)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&manifest).expect("manifest serializes")
            );
            println!("dataset: {}", cfg.data.display());
        }
        Command::Enroll => {
            cfg.validate()?;
            let data = Dataset::read(&cfg.data)?;
            let store = Store::open(&cfg.store)?;
            let (pca, users) = enroll_population(
                &data.enroll,
                &data.priorities,
                &store,
                &cfg.pca_config(),
                &cfg.enroll_config(),
            )?;
            let mut table = format!(
                "pca {} k={}\n{:<8} {:>7}  local errors\n",
                pca.id, pca.k, "user", "version"
            );
            for u in &users {
                let errs: Vec<String> = u.local_errors.iter().map(|e| format!("{e:.5}")).collect();
                table.push_str(&format!("{:<8} {:>7}  {}\n", u.user_id, u.version, errs.join(" ")));
            }
            let report = EnrollReport {
                pca_id: pca.id,
                components: pca.k,
                users,
            };
            emit(&cli.common.out, "enroll_report.json", &report, Some(table))?;
        }
        Command::Verify {
            user,
            sample,
            index,
            priority,
            threshold,
        } => {
            cfg.policy.validate()?;
            let samples = load_samples(&sample)?;
            let probe = samples
                .get(index)
                .ok_or_else(|| Error::InvalidSample(format!("{} has no record at index {index}", sample.display())))?;
            let store = Store::open(&cfg.store)?;
            let verifier = Verifier::open(&store)?;
            let decision = match (threshold, priority) {
                (Some(t), _) => verifier.verify(&user, probe, t)?,
                (None, Some(p)) => {
                    let mut d = verifier.verify(&user, probe, threshold_for_priority(&cfg.policy, p))?;
                    d.priority = p;
                    d
                }
                (None, None) => verifier.security_check(&user, probe, &cfg.policy)?,
            };
            println!("{}", serde_json::to_string(&decision).expect("decision serializes"));
            return Ok(if decision.accepted {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            });
        }
        Command::Eval { printed_specificity } => {
            cfg.policy.validate()?;
            let data = Dataset::read(&cfg.data)?;
            if data.probes.is_empty() {
                return Err(Error::EmptyProbes);
            }
            check_disjoint(&data.enroll, &data.probes)?;
            let store = Store::open(&cfg.store)?;
            let verifier = Verifier::open(&store)?;
            let mut records = BTreeMap::new();
            let mut scored = Vec::with_capacity(data.probes.len());
            for p in &data.probes {
                if !records.contains_key(&p.user_id) {
                    records.insert(p.user_id.clone(), store.load(&p.user_id)?);
                }
                // A probe that fails the quality gate is a rejection.
                let score = verifier.score(&records[&p.user_id], p)?.unwrap_or(0.0);
                scored.push(ScoredProbe::new(score, p.kind.is_genuine()));
            }
            let report = EvalReport::build(&scored, &cfg.policy, printed_specificity)?;
            let table = report.table();
            emit(&cli.common.out, "eval_report.json", &report, Some(table))?;
        }
        Command::Bench { reps, users } => {
            let worker_counts = cli.common.workers.clone().unwrap_or_else(|| vec![1, 2, 4, 8]);
            if let Some(u) = users {
                cfg.users = u;
            }
            // Fixed epoch count so every run does the same work.
            cfg.err_goal = 0.0;
            cfg.validate()?;
            let report = bench_training(&cfg, &worker_counts, reps.unwrap_or(cfg.repetitions))?;
            let table = report.table();
            emit(&cli.common.out, "bench_report.json", &report, Some(table))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(2)
        }
    }
}
