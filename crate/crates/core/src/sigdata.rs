//! Signature samples, the synthetic writer model, the capture quality gate
//! and the JSON-lines sample file format.

use std::f64::consts::PI;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const CHANNEL_COUNT: usize = 12;

/// Capture channels in recording order.
pub const CHANNEL_NAMES: [&str; CHANNEL_COUNT] = [
    "X_a", "Y_a", "Z_a", // acceleration, m/s^2
    "X_mu", "Y_mu", "Z_mu", // magnetic field, mT
    "azimuth", "pitch", "roll", // orientation, degrees
    "X_v", "Y_v", "Z_v", // angular velocity, rad/s
];

pub const ACCEL_CHANNELS: [usize; 3] = [0, 1, 2];
pub const GYRO_CHANNELS: [usize; 3] = [9, 10, 11];

/// Synthesis rate in Hz.
pub const SAMPLE_RATE: f64 = 100.0;

pub const MIN_POINTS: usize = 32;
pub const MIN_DURATION: f64 = 0.3;
pub const MIN_ACTIVE_CHANNELS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleKind {
    Genuine,
    SkilledForgery,
    RandomForgery,
}

impl SampleKind {
    pub fn is_genuine(self) -> bool {
        matches!(self, SampleKind::Genuine)
    }

    fn tag(self) -> &'static str {
        match self {
            SampleKind::Genuine => "genuine",
            SampleKind::SkilledForgery => "skilled_forgery",
            SampleKind::RandomForgery => "random_forgery",
        }
    }
}

/// One captured signature. `channels` is channel-major: `channels[c][i]` is
/// channel `c` at `timestamps[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureSample {
    pub user_id: String,
    pub kind: SampleKind,
    #[serde(rename = "t")]
    pub timestamps: Vec<f64>,
    #[serde(rename = "ch")]
    pub channels: Vec<Vec<f64>>,
}

impl SignatureSample {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.timestamps.first(), self.timestamps.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Structural invariants: 12 channels of length T >= 1 and strictly
    /// increasing timestamps. Value-level checks live in [`check_quality`].
    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != CHANNEL_COUNT {
            return Err(Error::InvalidSample(format!(
                "{} channels, expected {CHANNEL_COUNT}",
                self.channels.len()
            )));
        }
        if self.timestamps.is_empty() {
            return Err(Error::InvalidSample("no timestamps".into()));
        }
        if let Some(c) = self.channels.iter().position(|ch| ch.len() != self.timestamps.len()) {
            return Err(Error::InvalidSample(format!(
                "channel {c} has {} points, expected {}",
                self.channels[c].len(),
                self.timestamps.len()
            )));
        }
        if self.timestamps.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidSample("timestamps are not strictly increasing".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON encoding; used to detect a probe that
    /// also appears in an enrollment set.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("sample serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Smooth curve family for one channel: `offset + sum a_i sin(2 pi f_i t + phi_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelCurve {
    pub offset: f64,
    pub amplitudes: [f64; 3],
    pub frequencies: [f64; 3],
    pub phases: [f64; 3],
}

impl ChannelCurve {
    pub fn eval(&self, t: f64) -> f64 {
        let mut v = self.offset;
        for i in 0..3 {
            v += self.amplitudes[i] * (2.0 * PI * self.frequencies[i] * t + self.phases[i]).sin();
        }
        v
    }

    fn scale(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.abs()).sum::<f64>()
    }
}

/// A synthetic enrollee: deterministic in `(master_seed, user_id)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserPrototype {
    pub user_id: String,
    pub master_seed: u64,
    pub curves: Vec<ChannelCurve>,
    pub base_duration: f64,
}

impl UserPrototype {
    pub fn eval(&self, channel: usize, t: f64) -> f64 {
        self.curves[channel].eval(t)
    }
}

// (offset range, amplitude range) per channel, in channel units.
const CHANNEL_RANGES: [((f64, f64), (f64, f64)); CHANNEL_COUNT] = [
    ((-1.0, 1.0), (0.5, 2.5)),
    ((-1.0, 1.0), (0.5, 2.5)),
    ((8.5, 10.0), (0.3, 1.5)),
    ((-40.0, 40.0), (1.0, 6.0)),
    ((-40.0, 40.0), (1.0, 6.0)),
    ((-40.0, 40.0), (1.0, 6.0)),
    ((0.0, 360.0), (2.0, 15.0)),
    ((-60.0, 10.0), (2.0, 10.0)),
    ((-30.0, 30.0), (2.0, 10.0)),
    ((-0.1, 0.1), (0.3, 2.0)),
    ((-0.1, 0.1), (0.3, 2.0)),
    ((-0.1, 0.1), (0.3, 2.0)),
];

fn seeded_rng(parts: &[&[u8]]) -> ChaCha8Rng {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    ChaCha8Rng::from_seed(h.finalize().into())
}

pub fn make_prototype(master_seed: u64, user_id: &str) -> UserPrototype {
    let mut rng = seeded_rng(&[b"prototype", &master_seed.to_le_bytes(), user_id.as_bytes()]);
    let curves = CHANNEL_RANGES
        .iter()
        .map(|&((off_lo, off_hi), (amp_lo, amp_hi))| {
            let offset = rng.random_range(off_lo..off_hi);
            let total = rng.random_range(amp_lo..amp_hi);
            let mut amplitudes = [0.0; 3];
            let mut frequencies = [0.0; 3];
            let mut phases = [0.0; 3];
            for i in 0..3 {
                amplitudes[i] = total * rng.random_range(0.2..1.0) / 3.0_f64.sqrt();
                frequencies[i] = rng.random_range(0.4..4.0);
                phases[i] = rng.random_range(0.0..2.0 * PI);
            }
            ChannelCurve {
                offset,
                amplitudes,
                frequencies,
                phases,
            }
        })
        .collect();
    let base_duration = rng.random_range(1.5..2.5);
    UserPrototype {
        user_id: user_id.to_string(),
        master_seed,
        curves,
        base_duration,
    }
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Perturb amplitudes and phases at relative scale `level`.
fn distort(curves: &[ChannelCurve], level: f64, rng: &mut ChaCha8Rng) -> Vec<ChannelCurve> {
    curves
        .iter()
        .map(|c| {
            let mut out = c.clone();
            for i in 0..3 {
                out.amplitudes[i] *= 1.0 + level * normal(rng);
                out.phases[i] += level * PI * normal(rng);
            }
            out
        })
        .collect()
}

/// Synthesize one sample of `proto` at 100 Hz.
///
/// Genuine samples are the prototype curves plus jitter at `noise_level`:
/// a random time stretch and additive sensor noise. Skilled forgeries first
/// distort amplitudes and phases at three times the noise level. Random
/// forgeries are a genuine-style sample of a different writer, labelled for
/// `proto`.
pub fn synth_sample(
    proto: &UserPrototype,
    kind: SampleKind,
    noise_level: f64,
    sample_seed: u64,
) -> Result<SignatureSample> {
    if !(noise_level >= 0.0) {
        return Err(Error::NegativeNoise(noise_level));
    }
    let mut rng = seeded_rng(&[
        b"sample",
        &proto.master_seed.to_le_bytes(),
        proto.user_id.as_bytes(),
        kind.tag().as_bytes(),
        &sample_seed.to_le_bytes(),
    ]);

    let impostor;
    let source = match kind {
        SampleKind::RandomForgery => {
            impostor = make_prototype(proto.master_seed, &format!("{}/impostor/{sample_seed}", proto.user_id));
            &impostor
        }
        _ => proto,
    };

    let mut curves = source.curves.clone();
    if kind == SampleKind::SkilledForgery {
        curves = distort(&curves, 3.0 * noise_level, &mut rng);
    }
    let stretch = (1.0 + noise_level * normal(&mut rng)).max(0.2);

    let points = ((source.base_duration * stretch * SAMPLE_RATE).round() as usize).max(1);
    let timestamps: Vec<f64> = (0..points).map(|i| i as f64 / SAMPLE_RATE).collect();
    let channels = curves
        .iter()
        .map(|c| {
            let sensor = 0.5 * noise_level * c.scale();
            timestamps
                .iter()
                .map(|&t| c.eval(t / stretch) + sensor * normal(&mut rng))
                .collect()
        })
        .collect();

    Ok(SignatureSample {
        user_id: proto.user_id.clone(),
        kind,
        timestamps,
        channels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QualityReason {
    TooFewPoints,
    TooShort,
    NonFinite,
    FlatChannels,
}

impl fmt::Display for QualityReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            QualityReason::TooFewPoints => "TOO_FEW_POINTS",
            QualityReason::TooShort => "TOO_SHORT",
            QualityReason::NonFinite => "NON_FINITE",
            QualityReason::FlatChannels => "FLAT_CHANNELS",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityReport {
    pub pass: bool,
    pub reasons: Vec<QualityReason>,
}

impl QualityReport {
    fn from_reasons(reasons: Vec<QualityReason>) -> Self {
        QualityReport {
            pass: reasons.is_empty(),
            reasons,
        }
    }
}

/// Capture sanity gate run before feature extraction.
pub fn check_quality(sample: &SignatureSample) -> QualityReport {
    let mut reasons = Vec::new();
    if sample.len() < MIN_POINTS {
        reasons.push(QualityReason::TooFewPoints);
    }
    if !(sample.duration() >= MIN_DURATION) {
        reasons.push(QualityReason::TooShort);
    }
    let finite =
        sample.timestamps.iter().all(|v| v.is_finite()) && sample.channels.iter().flatten().all(|v| v.is_finite());
    if !finite {
        reasons.push(QualityReason::NonFinite);
    }
    let active = sample
        .channels
        .iter()
        .filter(|ch| match ch.first() {
            Some(&first) => ch.iter().any(|&v| v != first),
            None => false,
        })
        .count();
    if active < MIN_ACTIVE_CHANNELS {
        reasons.push(QualityReason::FlatChannels);
    }
    QualityReport::from_reasons(reasons)
}

#[derive(Deserialize)]
struct RawRecord {
    user_id: String,
    kind: SampleKind,
    t: Vec<f64>,
    ch: Vec<Vec<f64>>,
}

/// Parse a JSON-lines sample file. Blank lines are skipped.
pub fn load_samples(path: impl AsRef<Path>) -> Result<Vec<SignatureSample>> {
    let path = path.as_ref();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(Error::MissingFile(path.to_path_buf())),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRow {
            line: lineno,
            message: e.to_string(),
        })?;
        if raw.ch.len() != CHANNEL_COUNT {
            return Err(Error::ChannelCount {
                line: lineno,
                found: raw.ch.len(),
            });
        }
        let sample = SignatureSample {
            user_id: raw.user_id,
            kind: raw.kind,
            timestamps: raw.t,
            channels: raw.ch,
        };
        sample.validate().map_err(|e| Error::MalformedRow {
            line: lineno,
            message: e.to_string(),
        })?;
        out.push(sample);
    }
    Ok(out)
}

pub fn write_samples(path: impl AsRef<Path>, samples: &[SignatureSample]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in samples {
        serde_json::to_writer(&mut w, s).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-user composition of a synthetic dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSplit {
    pub genuine: usize,
    pub skilled: usize,
    pub random: usize,
}

impl SampleSplit {
    pub fn total(&self) -> usize {
        self.genuine + self.skilled + self.random
    }
}

impl Default for SampleSplit {
    /// 40 samples per writer: 25 genuine, 15 forged.
    fn default() -> Self {
        SampleSplit {
            genuine: 25,
            skilled: 10,
            random: 5,
        }
    }
}

pub fn user_id(index: usize) -> String {
    format!("u{:03}", index + 1)
}

/// Samples for one writer in genuine, skilled, random order. Sample seeds
/// start at `seed_base`, so disjoint bases give disjoint sample sets.
pub fn synth_user_samples(
    proto: &UserPrototype,
    split: SampleSplit,
    noise_level: f64,
    seed_base: u64,
) -> Result<Vec<SignatureSample>> {
    let kinds = std::iter::repeat_n(SampleKind::Genuine, split.genuine)
        .chain(std::iter::repeat_n(SampleKind::SkilledForgery, split.skilled))
        .chain(std::iter::repeat_n(SampleKind::RandomForgery, split.random));
    kinds
        .enumerate()
        .map(|(k, kind)| synth_sample(proto, kind, noise_level, seed_base + k as u64))
        .collect()
}

/// Whole population, users in id order.
pub fn synth_dataset(
    master_seed: u64,
    users: usize,
    split: SampleSplit,
    noise_level: f64,
    seed_base: u64,
) -> Result<Vec<SignatureSample>> {
    let mut out = Vec::with_capacity(users * split.total());
    for j in 0..users {
        let proto = make_prototype(master_seed, &user_id(j));
        out.extend(synth_user_samples(&proto, split, noise_level, seed_base)?);
    }
    Ok(out)
}
