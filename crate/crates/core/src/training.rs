//! Per-user ensemble training: a user's projected rows are split into
//! shards, one local network is trained per shard, and the locals are kept
//! as an ordered ensemble whose fused output is the verification score.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::executor;
use crate::features::{extract_features, FeatureVector};
use crate::mapreduce::partition_rows;
use crate::nnet::{netcreate, sigtrain, Layout, Network, RpropConfig, StopConfig};
use crate::pca::PcaModel;
use crate::sigdata::SignatureSample;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    /// Arithmetic mean of local scores.
    #[default]
    Mean,
    /// Fraction of locals scoring at least 0.5.
    MajorityVote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub workers: usize,
    pub locals: usize,
    pub hidden: usize,
    pub rprop: RpropConfig,
    pub stop: StopConfig,
    pub seed: u64,
    pub fusion: Fusion,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            workers: executor::available_workers(),
            locals: 4,
            hidden: 16,
            rprop: RpropConfig::default(),
            stop: StopConfig::default(),
            seed: 42,
            fusion: Fusion::Mean,
        }
    }
}

impl TrainConfig {
    /// Initialization seed of local `l`: `seed XOR l`.
    pub fn local_seeds(&self) -> Vec<u64> {
        (0..self.locals as u64).map(|l| self.seed ^ l).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.locals == 0 {
            return Err(Error::Config("locals must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(Error::ZeroLayer);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleNet {
    pub user_id: String,
    /// Local networks in shard order.
    pub locals: Vec<Network>,
    pub local_errors: Vec<f64>,
    /// `true` where the shard held one class and the local trained on every row.
    pub fallback: Vec<bool>,
    pub pca_ref: String,
    pub fusion: Fusion,
}

/// Genuine rows map to 1.0, forgeries to 0.0.
pub fn build_target_vector(rows: &[FeatureVector]) -> Result<Vec<f64>> {
    let genuine = rows.iter().filter(|r| r.genuine).count();
    if genuine == 0 || genuine == rows.len() {
        return Err(Error::OneClass);
    }
    Ok(rows.iter().map(FeatureVector::label).collect())
}

fn has_both_classes(targets: &[f64]) -> bool {
    targets.iter().any(|&t| t > 0.5) && targets.iter().any(|&t| t < 0.5)
}

/// Projected inputs, targets and shard assignment for one user.
struct UserJob {
    user_id: String,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    shards: Vec<Vec<usize>>,
}

impl UserJob {
    fn new(user_id: &str, rows: &[FeatureVector], pca: &PcaModel, locals: usize) -> Result<Self> {
        let targets = build_target_vector(rows)?;
        let inputs = rows
            .iter()
            .map(|r| pca.project(&r.values))
            .collect::<Result<Vec<_>>>()?;
        let indices: Vec<usize> = (0..rows.len()).collect();
        let shards = partition_rows(&indices, locals)?.into_iter().map(|p| p.items).collect();
        Ok(UserJob {
            user_id: user_id.to_string(),
            inputs,
            targets,
            shards,
        })
    }

    fn train_local(&self, l: usize, seed: u64, cfg: &TrainConfig, k: usize) -> Result<(Network, f64, bool)> {
        let shard = &self.shards[l];
        let shard_targets: Vec<f64> = shard.iter().map(|&i| self.targets[i]).collect();
        let (inputs, targets, fallback) = if has_both_classes(&shard_targets) {
            let inputs = shard.iter().map(|&i| self.inputs[i].clone()).collect();
            (inputs, shard_targets, false)
        } else {
            (self.inputs.clone(), self.targets.clone(), true)
        };
        let net = netcreate(Layout::new(k, cfg.hidden), seed)?;
        let (net, err) = sigtrain(net, &inputs, &targets, cfg.stop, cfg.rprop)?;
        Ok((net, err, fallback))
    }
}

/// Train one user's ensemble with the default per-local seeds.
pub fn train_user(rows: &[FeatureVector], pca: &PcaModel, cfg: &TrainConfig) -> Result<EnsembleNet> {
    train_user_seeded(rows, pca, cfg, &cfg.local_seeds())
}

/// As [`train_user`] with explicit initialization seeds, one per local.
pub fn train_user_seeded(
    rows: &[FeatureVector],
    pca: &PcaModel,
    cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<EnsembleNet> {
    if seeds.len() != cfg.locals {
        return Err(Error::Config(format!(
            "{} seeds for {} locals",
            seeds.len(),
            cfg.locals
        )));
    }
    let user_id = rows.first().map(|r| r.user_id.clone()).unwrap_or_default();
    let mut out = train_jobs(&[(user_id, rows)], pca, cfg, |_, l| seeds[l])?;
    Ok(out.remove(0))
}

/// Train every user; all `(user, local)` tasks share one pool of
/// `cfg.workers` threads. Output follows input order.
pub fn train_users(
    users: &[(String, Vec<FeatureVector>)],
    pca: &PcaModel,
    cfg: &TrainConfig,
) -> Result<Vec<EnsembleNet>> {
    let seeds = cfg.local_seeds();
    let borrowed: Vec<(String, &[FeatureVector])> =
        users.iter().map(|(u, rows)| (u.clone(), rows.as_slice())).collect();
    train_jobs(&borrowed, pca, cfg, |_, l| seeds[l])
}

fn train_jobs(
    users: &[(String, &[FeatureVector])],
    pca: &PcaModel,
    cfg: &TrainConfig,
    seed_of: impl Fn(usize, usize) -> u64 + Sync + Send,
) -> Result<Vec<EnsembleNet>> {
    cfg.validate()?;
    let jobs = users
        .iter()
        .map(|(u, rows)| {
            UserJob::new(u, rows, pca, cfg.locals).map_err(|e| Error::User {
                user: u.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let tasks: Vec<(usize, usize)> = (0..jobs.len())
        .flat_map(|u| (0..cfg.locals).map(move |l| (u, l)))
        .collect();
    let results = executor::run_indexed(cfg.workers, tasks.len(), |t| {
        let (u, l) = tasks[t];
        jobs[u].train_local(l, seed_of(u, l), cfg, pca.k)
    })?;

    let mut results = results.into_iter();
    let mut out = Vec::with_capacity(jobs.len());
    for job in &jobs {
        let mut ens = EnsembleNet {
            user_id: job.user_id.clone(),
            locals: Vec::with_capacity(cfg.locals),
            local_errors: Vec::with_capacity(cfg.locals),
            fallback: Vec::with_capacity(cfg.locals),
            pca_ref: pca.id.clone(),
            fusion: cfg.fusion,
        };
        for _ in 0..cfg.locals {
            let (net, err, fb) = results.next().expect("one result per task").map_err(|e| Error::User {
                user: job.user_id.clone(),
                source: Box::new(e),
            })?;
            ens.locals.push(net);
            ens.local_errors.push(err);
            ens.fallback.push(fb);
        }
        out.push(ens);
    }
    Ok(out)
}

impl EnsembleNet {
    /// Fused score of an already projected input.
    pub fn score_projected(&self, z: &[f64]) -> Result<f64> {
        let scores = self.locals.iter().map(|n| n.forward(z)).collect::<Result<Vec<_>>>()?;
        let n = scores.len() as f64;
        Ok(match self.fusion {
            Fusion::Mean => scores.iter().sum::<f64>() / n,
            Fusion::MajorityVote => scores.iter().filter(|&&s| s >= 0.5).count() as f64 / n,
        })
    }

    pub fn score_features(&self, pca: &PcaModel, features: &[f64]) -> Result<f64> {
        if pca.id != self.pca_ref {
            return Err(Error::PcaMismatch {
                expected: self.pca_ref.clone(),
                found: pca.id.clone(),
            });
        }
        self.score_projected(&pca.project(features)?)
    }
}

/// Verification score of a raw sample against a user's ensemble.
pub fn ensemble_score(ens: &EnsembleNet, pca: &PcaModel, sample: &SignatureSample) -> Result<f64> {
    if pca.id != ens.pca_ref {
        return Err(Error::PcaMismatch {
            expected: ens.pca_ref.clone(),
            found: pca.id.clone(),
        });
    }
    let f = extract_features(sample)?;
    ens.score_features(pca, &f.values)
}
