//! Enrollment, priority-gated verification and the file-backed store.
//!
//! Store layout under the root directory:
//!
//! ```text
//! <user_id>.rec   one user record
//! pca.model       the population PCA model shared by every record
//! index           "<user_id> <version>" per line, sorted by user id
//! ```
//!
//! Record and model files hold one line of canonical JSON followed by a
//! `sha256:<hex>` line computed over exactly those JSON bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{assemble_matrix, extract_features, FeatureMatrix};
use crate::pca::{PcaConfig, PcaModel};
use crate::sigdata::{check_quality, SampleKind, SignatureSample};
use crate::training::{train_user, train_users, EnsembleNet, TrainConfig};

/// Access tiers, ranked 1 (lowest) to 4 (highest).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Priority {
    RegularStaff = 1,
    PrivilegedStaff = 2,
    PrivilegedPatient = 3,
    VipPatient = 4,
}

impl Priority {
    pub const ALL: [Priority; 4] = [
        Priority::RegularStaff,
        Priority::PrivilegedStaff,
        Priority::PrivilegedPatient,
        Priority::VipPatient,
    ];

    pub fn rank(self) -> u8 {
        self as u8
    }

    pub fn from_rank(rank: u8) -> Option<Priority> {
        Priority::ALL.get((rank as usize).wrapping_sub(1)).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Priority::RegularStaff => "regular_staff",
            Priority::PrivilegedStaff => "privileged_staff",
            Priority::PrivilegedPatient => "privileged_patient",
            Priority::VipPatient => "vip_patient",
        }
    }
}

impl fmt::Display for Priority {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Priority {
    type Err = Error;

    /// Accepts a rank `1..=4` or a tier name.
    fn from_str(s: &str) -> Result<Priority> {
        if let Ok(rank) = s.parse::<u8>() {
            return Priority::from_rank(rank)
                .ok_or_else(|| Error::Config(format!("priority rank {rank} out of range 1..=4")));
        }
        Priority::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown priority {s:?}")))
    }
}

/// Acceptance threshold per tier; must be strictly increasing with tier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub low: f64,
    pub avg: f64,
    pub high: f64,
    pub vhigh: f64,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        ThresholdPolicy {
            low: 0.50,
            avg: 0.60,
            high: 0.75,
            vhigh: 0.90,
        }
    }
}

impl ThresholdPolicy {
    pub fn new(low: f64, avg: f64, high: f64, vhigh: f64) -> Result<Self> {
        let p = ThresholdPolicy { low, avg, high, vhigh };
        p.validate()?;
        Ok(p)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.low, self.avg, self.high, self.vhigh]
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.as_array();
        if let Some(bad) = t.iter().find(|v| !(**v > 0.0 && **v < 1.0)) {
            return Err(Error::InvalidPolicy(format!("threshold {bad} outside (0, 1)")));
        }
        if t.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidPolicy(format!(
                "thresholds must increase with priority: {t:?}"
            )));
        }
        Ok(())
    }
}

impl FromStr for ThresholdPolicy {
    type Err = Error;

    /// `"low,avg,high,vhigh"`.
    fn from_str(s: &str) -> Result<Self> {
        let vals = s
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::InvalidPolicy(format!("{s:?}: {e}")))?;
        match vals[..] {
            [a, b, c, d] => ThresholdPolicy::new(a, b, c, d),
            _ => Err(Error::InvalidPolicy(format!(
                "expected 4 thresholds, got {}",
                vals.len()
            ))),
        }
    }
}

pub fn threshold_for_priority(policy: &ThresholdPolicy, p: Priority) -> f64 {
    match p {
        Priority::RegularStaff => policy.low,
        Priority::PrivilegedStaff => policy.avg,
        Priority::PrivilegedPatient => policy.high,
        Priority::VipPatient => policy.vhigh,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnrollMetadata {
    pub genuine_samples: usize,
    pub forged_samples: usize,
    /// Negatives borrowed from other writers because none were supplied.
    pub borrowed_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    pub priority: Priority,
    /// Starts at 1; bumped on every re-enrollment.
    pub version: u64,
    pub metadata: EnrollMetadata,
    pub pca_ref: String,
    pub ensemble: EnsembleNet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ReasonCode {
    Accepted,
    BelowThreshold,
    QualityFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub user_id: String,
    /// Absent when the probe failed the quality gate.
    pub score: Option<f64>,
    pub threshold: f64,
    pub priority: Priority,
    pub accepted: bool,
    pub reason: ReasonCode,
}

/// Accept iff `score >= threshold`.
pub fn decide(user_id: &str, priority: Priority, score: f64, threshold: f64) -> Decision {
    let accepted = score >= threshold;
    Decision {
        user_id: user_id.to_string(),
        score: Some(score),
        threshold,
        priority,
        accepted,
        reason: if accepted {
            ReasonCode::Accepted
        } else {
            ReasonCode::BelowThreshold
        },
    }
}

const RECORD_EXT: &str = "rec";
const PCA_FILE: &str = "pca.model";
const INDEX_FILE: &str = "index";

/// Directory-backed template store. Reads are lock-free; writes from one
/// `Store` handle are serialized and land via write-then-rename.
#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    write_lock: Mutex<()>,
}

fn frame(body: &[u8]) -> Vec<u8> {
    let mut out = body.to_vec();
    out.extend_from_slice(b"\nsha256:");
    out.extend_from_slice(hex::encode(Sha256::digest(body)).as_bytes());
    out.push(b'\n');
    out
}

fn unframe(path: &Path, bytes: &[u8]) -> Result<Vec<u8>> {
    let corrupt = |reason: &str| Error::CorruptRecord {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let text = std::str::from_utf8(bytes).map_err(|_| corrupt("not utf-8"))?;
    let mut lines = text.split('\n');
    let body = lines.next().unwrap_or_default();
    let sum = lines
        .next()
        .and_then(|l| l.strip_prefix("sha256:"))
        .ok_or_else(|| corrupt("missing checksum"))?;
    if lines.next() != Some("") || lines.next().is_some() {
        return Err(corrupt("trailing data"));
    }
    if hex::encode(Sha256::digest(body.as_bytes())) != sum {
        return Err(corrupt("checksum mismatch"));
    }
    Ok(body.as_bytes().to_vec())
}

impl Store {
    /// Open or create a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Store> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(Store {
            root,
            write_lock: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn record_path(&self, user_id: &str) -> PathBuf {
        self.root.join(format!("{user_id}.{RECORD_EXT}"))
    }

    pub fn pca_path(&self) -> PathBuf {
        self.root.join(PCA_FILE)
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    fn read_framed<T: DeserializeOwned>(&self, path: &Path) -> Result<T> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let body = unframe(path, &bytes)?;
        serde_json::from_slice(&body).map_err(|e| Error::CorruptRecord {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// Canonical bytes of a record file.
    pub fn encode_record(record: &UserRecord) -> Vec<u8> {
        frame(&serde_json::to_vec(record).expect("record serializes"))
    }

    /// Persist `record`, assigning the next version for its user. Returns
    /// the record as stored.
    pub fn save(&self, record: &UserRecord) -> Result<UserRecord> {
        validate_user_id(&record.user_id)?;
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut index = self.read_index()?;
        let version = index.get(&record.user_id).copied().unwrap_or(0) + 1;
        let mut stored = record.clone();
        stored.version = version;
        self.write_atomic(&self.record_path(&stored.user_id), &Store::encode_record(&stored))?;
        index.insert(stored.user_id.clone(), version);
        self.write_index(&index)?;
        Ok(stored)
    }

    pub fn load(&self, user_id: &str) -> Result<UserRecord> {
        let path = self.record_path(user_id);
        if validate_user_id(user_id).is_err() || !path.exists() {
            return Err(Error::UnknownUser(user_id.to_string()));
        }
        self.read_framed(&path)
    }

    pub fn save_pca(&self, model: &PcaModel) -> Result<()> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let body = serde_json::to_vec(model).expect("model serializes");
        self.write_atomic(&self.pca_path(), &frame(&body))
    }

    pub fn load_pca(&self) -> Result<PcaModel> {
        let path = self.pca_path();
        if !path.exists() {
            return Err(Error::MissingPca);
        }
        self.read_framed(&path)
    }

    /// Enrolled users and their current versions.
    pub fn read_index(&self) -> Result<BTreeMap<String, u64>> {
        let path = self.root.join(INDEX_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(BTreeMap::new()),
            Err(e) => return Err(Error::io(&path, e)),
        };
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                let mut parts = l.split_whitespace();
                match (parts.next(), parts.next().and_then(|v| v.parse().ok())) {
                    (Some(u), Some(v)) => Ok((u.to_string(), v)),
                    _ => Err(Error::CorruptRecord {
                        path: path.clone(),
                        reason: format!("bad index line {l:?}"),
                    }),
                }
            })
            .collect()
    }

    fn write_index(&self, index: &BTreeMap<String, u64>) -> Result<()> {
        let text: String = index.iter().map(|(u, v)| format!("{u} {v}\n")).collect();
        self.write_atomic(&self.root.join(INDEX_FILE), text.as_bytes())
    }
}

fn validate_user_id(user_id: &str) -> Result<()> {
    let ok = !user_id.is_empty()
        && user_id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
        && !user_id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("user id {user_id:?} is not a valid store key")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrollConfig {
    pub min_genuine: usize,
    pub train: TrainConfig,
}

impl Default for EnrollConfig {
    fn default() -> Self {
        EnrollConfig {
            min_genuine: 25,
            train: TrainConfig::default(),
        }
    }
}

fn failing_indices(samples: &[SignatureSample]) -> Vec<usize> {
    samples
        .iter()
        .enumerate()
        .filter(|(_, s)| s.validate().is_err() || !check_quality(s).pass)
        .map(|(i, _)| i)
        .collect()
}

/// Quality-check, extract and train one user, then persist the record.
/// When `samples` holds no forgeries, `negatives` (other writers' samples)
/// are relabelled as random forgeries for this user. Nothing is written if
/// any sample fails.
pub fn enroll(
    user_id: &str,
    priority: Priority,
    samples: &[SignatureSample],
    negatives: &[SignatureSample],
    store: &Store,
    pca: &PcaModel,
    cfg: &EnrollConfig,
) -> Result<UserRecord> {
    validate_user_id(user_id)?;
    let bad = failing_indices(samples);
    if !bad.is_empty() {
        return Err(Error::EnrollmentQuality { indices: bad });
    }
    let genuine = samples.iter().filter(|s| s.kind.is_genuine()).count();
    if genuine < cfg.min_genuine {
        return Err(Error::InsufficientEnrollment {
            required: cfg.min_genuine,
            found: genuine,
        });
    }
    let mut rows = samples.to_vec();
    let mut borrowed = 0;
    if genuine == samples.len() {
        let bad = failing_indices(negatives);
        if !bad.is_empty() {
            return Err(Error::EnrollmentQuality { indices: bad });
        }
        rows.extend(negatives.iter().map(|n| SignatureSample {
            user_id: user_id.to_string(),
            kind: SampleKind::RandomForgery,
            ..n.clone()
        }));
        borrowed = negatives.len();
    }
    for r in &mut rows {
        r.user_id = user_id.to_string();
    }
    let matrix = assemble_matrix(&rows)?;
    let ensemble = train_user(&matrix.rows, pca, &cfg.train)?;
    let record = UserRecord {
        user_id: user_id.to_string(),
        priority,
        version: 0,
        metadata: EnrollMetadata {
            genuine_samples: genuine,
            forged_samples: rows.len() - genuine,
            borrowed_negatives: borrowed,
        },
        pca_ref: pca.id.clone(),
        ensemble,
    };
    store.save(&record)
}

/// Summary of a population enrollment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrolledUser {
    pub user_id: String,
    pub version: u64,
    pub local_errors: Vec<f64>,
}

/// Fit one PCA model over every sample, then train and persist every user.
/// Users are taken in first-seen order; `priorities` defaults to
/// [`Priority::RegularStaff`] for users it does not list.
pub fn enroll_population(
    samples: &[SignatureSample],
    priorities: &BTreeMap<String, Priority>,
    store: &Store,
    pca_cfg: &PcaConfig,
    cfg: &EnrollConfig,
) -> Result<(PcaModel, Vec<EnrolledUser>)> {
    let bad = failing_indices(samples);
    if !bad.is_empty() {
        return Err(Error::EnrollmentQuality { indices: bad });
    }
    let matrix = assemble_matrix(samples)?;
    let pca = PcaModel::fit(&matrix.values(), pca_cfg)?;
    let groups = group_by_user(&matrix);
    for (user, rows) in &groups {
        let genuine = rows.iter().filter(|r| r.genuine).count();
        if genuine < cfg.min_genuine {
            return Err(Error::User {
                user: user.clone(),
                source: Box::new(Error::InsufficientEnrollment {
                    required: cfg.min_genuine,
                    found: genuine,
                }),
            });
        }
    }
    let ensembles = train_users(&groups, &pca, &cfg.train)?;
    store.save_pca(&pca)?;
    let mut out = Vec::with_capacity(ensembles.len());
    for ((user, rows), ensemble) in groups.iter().zip(ensembles) {
        let genuine = rows.iter().filter(|r| r.genuine).count();
        let record = UserRecord {
            user_id: user.clone(),
            priority: priorities.get(user).copied().unwrap_or(Priority::RegularStaff),
            version: 0,
            metadata: EnrollMetadata {
                genuine_samples: genuine,
                forged_samples: rows.len() - genuine,
                borrowed_negatives: 0,
            },
            pca_ref: pca.id.clone(),
            ensemble,
        };
        let stored = store.save(&record)?;
        out.push(EnrolledUser {
            user_id: stored.user_id,
            version: stored.version,
            local_errors: stored.ensemble.local_errors,
        });
    }
    Ok((pca, out))
}

pub fn group_by_user(matrix: &FeatureMatrix) -> Vec<(String, Vec<crate::features::FeatureVector>)> {
    matrix
        .user_ids()
        .into_iter()
        .map(|u| {
            let rows = matrix.user_rows(&u);
            (u, rows)
        })
        .collect()
}

/// Verification against a store with the PCA model loaded once.
pub struct Verifier<'a> {
    store: &'a Store,
    pca: PcaModel,
}

impl<'a> Verifier<'a> {
    pub fn open(store: &'a Store) -> Result<Self> {
        Ok(Verifier {
            store,
            pca: store.load_pca()?,
        })
    }

    pub fn pca(&self) -> &PcaModel {
        &self.pca
    }

    /// Score `sample` against a loaded record; `None` when it fails quality.
    pub fn score(&self, record: &UserRecord, sample: &SignatureSample) -> Result<Option<f64>> {
        if sample.validate().is_err() || !check_quality(sample).pass {
            return Ok(None);
        }
        let f = extract_features(sample)?;
        record.ensemble.score_features(&self.pca, &f.values).map(Some)
    }

    pub fn verify(&self, user_id: &str, sample: &SignatureSample, threshold: f64) -> Result<Decision> {
        let record = self.store.load(user_id)?;
        Ok(match self.score(&record, sample)? {
            Some(score) => decide(user_id, record.priority, score, threshold),
            None => Decision {
                user_id: user_id.to_string(),
                score: None,
                threshold,
                priority: record.priority,
                accepted: false,
                reason: ReasonCode::QualityFailure,
            },
        })
    }

    /// Resolve the user's tier, pick its threshold and verify.
    pub fn security_check(
        &self,
        user_id: &str,
        sample: &SignatureSample,
        policy: &ThresholdPolicy,
    ) -> Result<Decision> {
        let record = self.store.load(user_id)?;
        self.verify(user_id, sample, threshold_for_priority(policy, record.priority))
    }
}

pub fn verify(user_id: &str, sample: &SignatureSample, threshold: f64, store: &Store) -> Result<Decision> {
    Verifier::open(store)?.verify(user_id, sample, threshold)
}

pub fn security_check(
    user_id: &str,
    sample: &SignatureSample,
    store: &Store,
    policy: &ThresholdPolicy,
) -> Result<Decision> {
    Verifier::open(store)?.security_check(user_id, sample, policy)
}
