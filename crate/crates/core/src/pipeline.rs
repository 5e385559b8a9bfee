//! End-to-end orchestration: run configuration, synthetic dataset files,
//! the in-memory training pipeline, evaluation and benchmark reports.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::auth::{group_by_user, threshold_for_priority, EnrollConfig, Priority, ThresholdPolicy};
use crate::error::{Error, Result};
use crate::eval::{
    confusion_at, eer, error_curve, far, frr, sensitivity, specificity, specificity_as_printed, speedup, time_runs,
    Confusion, CurvePoint, ScoredProbe, Timing,
};
use crate::executor;
use crate::features::{assemble_matrix, extract_features};
use crate::nnet::{RpropConfig, StopConfig};
use crate::pca::{PcaConfig, PcaModel};
use crate::sigdata::{load_samples, synth_dataset, user_id, write_samples, SampleSplit, SignatureSample};
use crate::training::{train_users, EnsembleNet, Fusion, TrainConfig};

/// Probe seeds start here so held-out probes never reuse an enrollment seed.
pub const PROBE_SEED_BASE: u64 = 1_000_000;

/// Generator noise level, calibrated so the default benchmark separates
/// genuine samples from forgeries with an EER below 0.10.
pub const DEFAULT_NOISE: f64 = 0.15;

pub const ENROLL_FILE: &str = "enroll.jsonl";
pub const PROBE_FILE: &str = "probes.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything a run needs; loadable from TOML, every field optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub users: usize,
    pub enroll_split: SampleSplit,
    pub probe_split: SampleSplit,
    pub noise: f64,
    pub workers: usize,
    /// Map-reduce partitions for the covariance pass. Independent of
    /// `workers` so results do not depend on the thread count.
    pub partitions: usize,
    pub locals: usize,
    pub hidden: usize,
    pub variance_target: f64,
    pub max_components: usize,
    pub max_epochs: usize,
    pub err_goal: f64,
    pub fusion: Fusion,
    pub policy: ThresholdPolicy,
    pub store: PathBuf,
    pub data: PathBuf,
    pub repetitions: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            users: 50,
            enroll_split: SampleSplit::default(),
            probe_split: SampleSplit {
                genuine: 10,
                skilled: 5,
                random: 5,
            },
            noise: DEFAULT_NOISE,
            workers: executor::available_workers(),
            partitions: 8,
            locals: 4,
            hidden: 16,
            variance_target: crate::pca::DEFAULT_VARIANCE_TARGET,
            max_components: crate::pca::DEFAULT_MAX_COMPONENTS,
            max_epochs: StopConfig::default().max_epochs,
            err_goal: StopConfig::default().err_goal,
            fusion: Fusion::Mean,
            policy: ThresholdPolicy::default(),
            store: PathBuf::from("store"),
            data: PathBuf::from("data"),
            repetitions: 15,
        }
    }
}

impl RunConfig {
    pub fn from_toml_file(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.policy.validate()?;
        if self.users == 0 {
            return Err(Error::Config("users must be at least 1".into()));
        }
        if !(self.noise >= 0.0) {
            return Err(Error::NegativeNoise(self.noise));
        }
        if self.partitions == 0 {
            return Err(Error::ZeroPartitions);
        }
        if !(self.variance_target > 0.0 && self.variance_target <= 1.0) {
            return Err(Error::InvalidVarianceTarget(self.variance_target));
        }
        self.train_config().validate()
    }

    pub fn pca_config(&self) -> PcaConfig {
        PcaConfig {
            variance_target: self.variance_target,
            max_components: self.max_components,
            partitions: self.partitions,
            workers: self.workers,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            workers: self.workers,
            locals: self.locals,
            hidden: self.hidden,
            rprop: RpropConfig::default(),
            stop: StopConfig {
                max_epochs: self.max_epochs,
                err_goal: self.err_goal,
            },
            seed: self.seed,
            fusion: self.fusion,
        }
    }

    pub fn enroll_config(&self) -> EnrollConfig {
        EnrollConfig {
            min_genuine: self.enroll_split.genuine.min(25),
            train: self.train_config(),
        }
    }

    /// Short description of the training workload, used to pair timings.
    pub fn workload(&self) -> String {
        format!(
            "users={} samples={} locals={} hidden={} epochs={} seed={}",
            self.users,
            self.enroll_split.total(),
            self.locals,
            self.hidden,
            self.max_epochs,
            self.seed
        )
    }
}

/// Synthetic access tier: roughly 2 staff per 7 patients.
fn assign_priorities(seed: u64, users: usize) -> BTreeMap<String, Priority> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5052_494f_5249_5459);
    (0..users)
        .map(|j| {
            let staff = rng.random_bool(2.0 / 9.0);
            let upper = rng.random_bool(0.25);
            let p = match (staff, upper) {
                (true, false) => Priority::RegularStaff,
                (true, true) => Priority::PrivilegedStaff,
                (false, false) => Priority::PrivilegedPatient,
                (false, true) => Priority::VipPatient,
            };
            (user_id(j), p)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub enroll: Vec<SignatureSample>,
    pub probes: Vec<SignatureSample>,
    pub priorities: BTreeMap<String, Priority>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub users: usize,
    pub noise: f64,
    pub enroll_split: SampleSplit,
    pub probe_split: SampleSplit,
    pub enroll_samples: usize,
    pub probe_samples: usize,
    pub priorities: BTreeMap<String, Priority>,
    /// SHA-256 of each data file.
    pub checksums: BTreeMap<String, String>,
}

fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl Dataset {
    pub fn generate(cfg: &RunConfig) -> Result<Dataset> {
        Ok(Dataset {
            enroll: synth_dataset(cfg.seed, cfg.users, cfg.enroll_split, cfg.noise, 0)?,
            probes: synth_dataset(cfg.seed, cfg.users, cfg.probe_split, cfg.noise, PROBE_SEED_BASE)?,
            priorities: assign_priorities(cfg.seed, cfg.users),
        })
    }

    /// Write the sample files and manifest into `dir`.
    pub fn write(&self, dir: &Path, cfg: &RunConfig) -> Result<Manifest> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut checksums = BTreeMap::new();
        for (name, samples) in [(ENROLL_FILE, &self.enroll), (PROBE_FILE, &self.probes)] {
            let path = dir.join(name);
            write_samples(&path, samples)?;
            checksums.insert(name.to_string(), file_sha256(&path)?);
        }
        let manifest = Manifest {
            seed: cfg.seed,
            users: cfg.users,
            noise: cfg.noise,
            enroll_split: cfg.enroll_split,
            probe_split: cfg.probe_split,
            enroll_samples: self.enroll.len(),
            probe_samples: self.probes.len(),
            priorities: self.priorities.clone(),
            checksums,
        };
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }

    /// Read a dataset directory. The probe file and manifest are optional.
    pub fn read(dir: &Path) -> Result<Dataset> {
        let enroll = load_samples(dir.join(ENROLL_FILE))?;
        let probe_path = dir.join(PROBE_FILE);
        let probes = if probe_path.exists() {
            load_samples(&probe_path)?
        } else {
            Vec::new()
        };
        let manifest_path = dir.join(MANIFEST_FILE);
        let priorities = if manifest_path.exists() {
            let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
            let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::Config(format!("manifest: {e}")))?;
            m.priorities
        } else {
            BTreeMap::new()
        };
        Ok(Dataset {
            enroll,
            probes,
            priorities,
        })
    }
}

/// Fail with `OVERLAPPING_SPLIT` if any probe is byte-identical to an
/// enrollment sample.
pub fn check_disjoint(enroll: &[SignatureSample], probes: &[SignatureSample]) -> Result<()> {
    let seen: HashSet<String> = enroll.iter().map(SignatureSample::content_hash).collect();
    let overlap = probes.iter().filter(|p| seen.contains(&p.content_hash())).count();
    if overlap > 0 {
        return Err(Error::OverlappingSplit(overlap));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trained {
    pub pca: PcaModel,
    pub ensembles: Vec<EnsembleNet>,
}

impl Trained {
    pub fn ensemble(&self, user_id: &str) -> Option<&EnsembleNet> {
        self.ensembles.iter().find(|e| e.user_id == user_id)
    }
}

/// Features, map-reduce covariance, PCA and parallel ensemble training,
/// without touching the store.
pub fn train_pipeline(samples: &[SignatureSample], cfg: &RunConfig) -> Result<Trained> {
    let matrix = assemble_matrix(samples)?;
    let pca = PcaModel::fit(&matrix.values(), &cfg.pca_config())?;
    let groups = group_by_user(&matrix);
    let ensembles = train_users(&groups, &pca, &cfg.train_config())?;
    Ok(Trained { pca, ensembles })
}

/// Score every probe against the ensemble of the user it claims to be.
pub fn score_probes(pca: &PcaModel, ensembles: &[EnsembleNet], probes: &[SignatureSample]) -> Result<Vec<ScoredProbe>> {
    let by_user: HashMap<&str, &EnsembleNet> = ensembles.iter().map(|e| (e.user_id.as_str(), e)).collect();
    probes
        .iter()
        .map(|p| {
            let ens = by_user
                .get(p.user_id.as_str())
                .ok_or_else(|| Error::UnknownUser(p.user_id.clone()))?;
            let f = extract_features(p)?;
            Ok(ScoredProbe::new(
                ens.score_features(pca, &f.values)?,
                p.kind.is_genuine(),
            ))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub threshold: f64,
    pub confusion: Confusion,
    pub sensitivity: f64,
    pub specificity: f64,
    pub far: f64,
    pub frr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub specificity_as_printed: Option<f64>,
}

impl OperatingPoint {
    pub fn at(probes: &[ScoredProbe], threshold: f64, printed_specificity: bool) -> Result<Self> {
        let c = confusion_at(probes, threshold)?;
        Ok(OperatingPoint {
            threshold,
            confusion: c,
            sensitivity: sensitivity(&c)?,
            specificity: specificity(&c)?,
            far: far(&c)?,
            frr: frr(&c)?,
            specificity_as_printed: if printed_specificity {
                Some(specificity_as_printed(&c)?)
            } else {
                None
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierPoint {
    pub priority: Priority,
    #[serde(flatten)]
    pub point: OperatingPoint,
}

/// Schema of `eval_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub genuine_probes: usize,
    pub forged_probes: usize,
    pub eer: f64,
    pub eer_threshold: f64,
    /// Operating point at the EER threshold.
    pub at_eer: OperatingPoint,
    /// Operating point at each priority tier's threshold.
    pub tiers: Vec<TierPoint>,
    pub curve: Vec<CurvePoint>,
}

impl EvalReport {
    pub fn build(probes: &[ScoredProbe], policy: &ThresholdPolicy, printed_specificity: bool) -> Result<Self> {
        let e = eer(probes)?;
        let tiers = Priority::ALL
            .into_iter()
            .map(|p| {
                Ok(TierPoint {
                    priority: p,
                    point: OperatingPoint::at(probes, threshold_for_priority(policy, p), printed_specificity)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let genuine = probes.iter().filter(|p| p.genuine).count();
        Ok(EvalReport {
            genuine_probes: genuine,
            forged_probes: probes.len() - genuine,
            eer: e.eer,
            eer_threshold: e.threshold,
            at_eer: OperatingPoint::at(probes, e.threshold, printed_specificity)?,
            tiers,
            curve: error_curve(probes)?,
        })
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "probes: {} genuine, {} forged\nEER {:.4} at threshold {:.4}\n",
            self.genuine_probes, self.forged_probes, self.eer, self.eer_threshold
        );
        let printed = self.at_eer.specificity_as_printed.is_some();
        s.push_str(&format!(
            "{:<20} {:>9} {:>11} {:>11} {:>7} {:>7}{}\n",
            "operating point",
            "threshold",
            "sensitivity",
            "specificity",
            "FAR",
            "FRR",
            if printed { "  TF/(TF+TG)" } else { "" }
        ));
        let mut row = |name: &str, p: &OperatingPoint| {
            s.push_str(&format!(
                "{:<20} {:>9.4} {:>11.4} {:>11.4} {:>7.4} {:>7.4}{}\n",
                name,
                p.threshold,
                p.sensitivity,
                p.specificity,
                p.far,
                p.frr,
                p.specificity_as_printed
                    .map(|v| format!("  {v:>10.4}"))
                    .unwrap_or_default()
            ));
        };
        row("eer", &self.at_eer);
        for t in &self.tiers {
            row(t.priority.name(), &t.point);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchEntry {
    pub timing: Timing,
    /// `S(P) = T(1) / T(P)` on median wall times.
    pub speedup: f64,
    pub eer: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    /// SHA-256 of the serialized ensembles; equal across entries when the
    /// result does not depend on the worker count.
    pub model_digest: String,
}

/// Schema of `bench_report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub workload: String,
    pub repetitions: usize,
    pub host_cpus: usize,
    pub entries: Vec<BenchEntry>,
}

impl BenchReport {
    pub fn table(&self) -> String {
        let mut s = format!(
            "workload: {}\nrepetitions: {}  host cpus: {}\n{:>7} {:>12} {:>9} {:>7} {:>11} {:>11}\n",
            self.workload,
            self.repetitions,
            self.host_cpus,
            "P",
            "median T(P)",
            "S(P)",
            "EER",
            "sensitivity",
            "specificity"
        );
        for e in &self.entries {
            s.push_str(&format!(
                "{:>7} {:>11.4}s {:>9.3} {:>7.4} {:>11.4} {:>11.4}\n",
                e.timing.workers, e.timing.wall_secs, e.speedup, e.eer, e.sensitivity, e.specificity
            ));
        }
        s
    }
}

pub fn models_digest(ensembles: &[EnsembleNet]) -> String {
    hex::encode(Sha256::digest(
        serde_json::to_vec(ensembles).expect("ensembles serialize"),
    ))
}

/// Time the full training pipeline (features, covariance, PCA, ensembles)
/// `reps` times per worker count, then evaluate the held-out probes once
/// per configuration.
pub fn bench_training(cfg: &RunConfig, worker_counts: &[usize], reps: usize) -> Result<BenchReport> {
    if !worker_counts.contains(&1) {
        return Err(Error::MissingBaseline);
    }
    let data = Dataset::generate(cfg)?;
    let workload = cfg.workload();
    // Untimed warm-up so the first timed configuration does not pay for
    // cold caches and allocator growth.
    train_pipeline(
        &data.enroll,
        &RunConfig {
            workers: 1,
            ..cfg.clone()
        },
    )?;
    let runs = time_runs(&workload, worker_counts, reps, |w| {
        let run_cfg = RunConfig {
            workers: w,
            ..cfg.clone()
        };
        train_pipeline(&data.enroll, &run_cfg)
    })?;
    let baseline = runs
        .iter()
        .find(|(t, _)| t.workers == 1)
        .map(|(t, _)| t.clone())
        .expect("baseline present");
    let entries = runs
        .into_iter()
        .map(|(timing, trained)| {
            let scored = score_probes(&trained.pca, &trained.ensembles, &data.probes)?;
            let e = eer(&scored)?;
            let op = OperatingPoint::at(&scored, e.threshold, false)?;
            Ok(BenchEntry {
                speedup: speedup(&baseline, &timing)?,
                timing,
                eer: e.eer,
                sensitivity: op.sensitivity,
                specificity: op.specificity,
                model_digest: models_digest(&trained.ensembles),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BenchReport {
        workload,
        repetitions: reps,
        host_cpus: executor::available_workers(),
        entries,
    })
}

/// Write `value` as pretty JSON to `path`.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
