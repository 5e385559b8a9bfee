//! Fixed-length statistical summary of a signature sample.
//!
//! Layout (64 values): for each of the 12 channels in capture order,
//! `[mean, std, min, max, rms]`, followed by total duration in seconds,
//! point count, mean acceleration magnitude and mean angular-speed magnitude.
//! Standard deviations are population (divide by T).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sigdata::{check_quality, SignatureSample, ACCEL_CHANNELS, CHANNEL_COUNT, GYRO_CHANNELS};

pub const STATS_PER_CHANNEL: usize = 5;
pub const FEATURE_DIM: usize = CHANNEL_COUNT * STATS_PER_CHANNEL + 4;

pub const SLOT_MEAN: usize = 0;
pub const SLOT_STD: usize = 1;
pub const SLOT_MIN: usize = 2;
pub const SLOT_MAX: usize = 3;
pub const SLOT_RMS: usize = 4;
pub const SLOT_DURATION: usize = 60;
pub const SLOT_POINTS: usize = 61;
pub const SLOT_ACCEL_MAG: usize = 62;
pub const SLOT_GYRO_MAG: usize = 63;

/// Index of statistic `stat` of channel `channel`.
pub const fn slot(channel: usize, stat: usize) -> usize {
    channel * STATS_PER_CHANNEL + stat
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub genuine: bool,
    pub user_id: String,
}

impl FeatureVector {
    /// 1.0 for genuine, 0.0 for either forgery kind.
    pub fn label(&self) -> f64 {
        if self.genuine {
            1.0
        } else {
            0.0
        }
    }
}

pub fn extract_features(sample: &SignatureSample) -> Result<FeatureVector> {
    let report = check_quality(sample);
    if !report.pass {
        return Err(Error::Quality {
            index: 0,
            reasons: report.reasons,
        });
    }
    sample.validate()?;

    let n = sample.len() as f64;
    let mut values = Vec::with_capacity(FEATURE_DIM);
    for ch in &sample.channels {
        let mean = ch.iter().sum::<f64>() / n;
        let var = ch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let min = ch.iter().copied().fold(f64::INFINITY, f64::min);
        let max = ch.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let rms = (ch.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        values.extend_from_slice(&[mean, var.sqrt(), min, max, rms]);
    }
    values.push(sample.duration());
    values.push(n);
    values.push(mean_magnitude(sample, ACCEL_CHANNELS));
    values.push(mean_magnitude(sample, GYRO_CHANNELS));

    Ok(FeatureVector {
        values,
        genuine: sample.kind.is_genuine(),
        user_id: sample.user_id.clone(),
    })
}

fn mean_magnitude(sample: &SignatureSample, axes: [usize; 3]) -> f64 {
    let [x, y, z] = axes.map(|c| &sample.channels[c]);
    let total: f64 = (0..sample.len())
        .map(|i| (x[i] * x[i] + y[i] * y[i] + z[i] * z[i]).sqrt())
        .sum();
    total / sample.len() as f64
}

/// Rows in input order; one row per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureVector>,
}

impl FeatureMatrix {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        FEATURE_DIM
    }

    pub fn values(&self) -> Vec<&[f64]> {
        self.rows.iter().map(|r| r.values.as_slice()).collect()
    }

    /// Rows of one user, preserving order.
    pub fn user_rows(&self, user_id: &str) -> Vec<FeatureVector> {
        self.rows.iter().filter(|r| r.user_id == user_id).cloned().collect()
    }

    /// Distinct user ids in first-seen order.
    pub fn user_ids(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        self.rows
            .iter()
            .filter(|r| seen.insert(r.user_id.as_str()))
            .map(|r| r.user_id.clone())
            .collect()
    }

    /// CSV dump: a header row, then `D` values, label and user id per row.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = String::new();
        let header: Vec<String> = (0..FEATURE_DIM).map(|i| format!("f{i}")).collect();
        out.push_str(&header.join(","));
        out.push_str(",label,user_id\n");
        for r in &self.rows {
            for v in &r.values {
                out.push_str(&format!("{v},"));
            }
            out.push_str(&format!("{},{}\n", r.label(), r.user_id));
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

pub fn assemble_matrix(samples: &[SignatureSample]) -> Result<FeatureMatrix> {
    let rows = samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            extract_features(s).map_err(|e| match e {
                Error::Quality { reasons, .. } => Error::Quality { index: i, reasons },
                other => Error::Task {
                    index: i,
                    source: Box::new(other),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureMatrix { rows })
}
