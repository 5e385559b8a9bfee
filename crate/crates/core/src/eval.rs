//! Verification metrics (sensitivity, specificity, FAR, FRR, EER) and the
//! training speedup benchmark.
//!
//! Every threshold comparison uses the acceptance rule `score >= threshold`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredProbe {
    pub score: f64,
    pub genuine: bool,
}

impl ScoredProbe {
    pub fn new(score: f64, genuine: bool) -> Self {
        ScoredProbe { score, genuine }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    /// Genuine probes accepted.
    pub true_genuine: u64,
    /// Forged probes accepted.
    pub false_genuine: u64,
    /// Forged probes rejected.
    pub true_forged: u64,
    /// Genuine probes rejected.
    pub false_forged: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.true_genuine + self.false_genuine + self.true_forged + self.false_forged
    }
}

pub fn confusion_at(probes: &[ScoredProbe], threshold: f64) -> Result<Confusion> {
    if probes.is_empty() {
        return Err(Error::EmptyProbes);
    }
    let mut c = Confusion::default();
    for p in probes {
        match (p.genuine, p.score >= threshold) {
            (true, true) => c.true_genuine += 1,
            (true, false) => c.false_forged += 1,
            (false, true) => c.false_genuine += 1,
            (false, false) => c.true_forged += 1,
        }
    }
    Ok(c)
}

fn ratio(num: u64, den: u64, err: Error) -> Result<f64> {
    if den == 0 {
        Err(err)
    } else {
        Ok(num as f64 / den as f64)
    }
}

/// `TG / (TG + FF)`, computed as `1 - FRR` so the identity is exact in
/// floating point.
pub fn sensitivity(c: &Confusion) -> Result<f64> {
    Ok(1.0 - frr(c)?)
}

/// `TF / (TF + FG)`, the true-forged rate, computed as `1 - FAR`.
pub fn specificity(c: &Confusion) -> Result<f64> {
    Ok(1.0 - far(c)?)
}

/// `TF / (TF + TG)`, the ratio as it is sometimes printed. Kept only for
/// side-by-side reporting; it is not a rate over forged probes.
pub fn specificity_as_printed(c: &Confusion) -> Result<f64> {
    ratio(c.true_forged, c.true_forged + c.true_genuine, Error::NoForgedProbes)
}

/// `FG / (FG + TF)`.
pub fn far(c: &Confusion) -> Result<f64> {
    ratio(c.false_genuine, c.false_genuine + c.true_forged, Error::NoForgedProbes)
}

/// `FF / (FF + TG)`.
pub fn frr(c: &Confusion) -> Result<f64> {
    ratio(c.false_forged, c.false_forged + c.true_genuine, Error::NoGenuineProbes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

fn check_probes(probes: &[ScoredProbe]) -> Result<(usize, usize)> {
    if probes.is_empty() {
        return Err(Error::EmptyProbes);
    }
    if let Some(p) = probes
        .iter()
        .find(|p| !(p.score.is_finite() && (0.0..=1.0).contains(&p.score)))
    {
        return Err(Error::InvalidScore(p.score));
    }
    let genuine = probes.iter().filter(|p| p.genuine).count();
    if genuine == 0 {
        return Err(Error::NoGenuineProbes);
    }
    if genuine == probes.len() {
        return Err(Error::NoForgedProbes);
    }
    Ok((genuine, probes.len() - genuine))
}

/// `(threshold, FAR, FRR)` at 0, at every distinct score, and at 1 (or just
/// above the largest score if a score equals 1), in increasing threshold
/// order.
pub fn error_curve(probes: &[ScoredProbe]) -> Result<Vec<CurvePoint>> {
    let (n_gen, n_forged) = check_probes(probes)?;
    let mut sorted: Vec<ScoredProbe> = probes.to_vec();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));

    let max = sorted.last().map_or(0.0, |p| p.score);
    let mut thresholds = vec![0.0];
    thresholds.extend(sorted.iter().map(|p| p.score));
    thresholds.push(if max >= 1.0 { max.next_up() } else { 1.0 });
    thresholds.dedup();

    // Walk thresholds upward; probes strictly below the current threshold
    // are rejected.
    let mut out = Vec::with_capacity(thresholds.len());
    let mut below = 0;
    let (mut gen_below, mut forged_below) = (0usize, 0usize);
    for t in thresholds {
        while below < sorted.len() && sorted[below].score < t {
            if sorted[below].genuine {
                gen_below += 1;
            } else {
                forged_below += 1;
            }
            below += 1;
        }
        out.push(CurvePoint {
            threshold: t,
            far: (n_forged - forged_below) as f64 / n_forged as f64,
            frr: gen_below as f64 / n_gen as f64,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EerPoint {
    pub eer: f64,
    pub threshold: f64,
}

/// Equal error rate from the threshold sweep. Returns the first sweep
/// threshold where FAR equals FRR if there is one; otherwise linearly
/// interpolates between the two sweep thresholds that bracket the sign
/// change of `FAR - FRR`.
pub fn eer(probes: &[ScoredProbe]) -> Result<EerPoint> {
    let curve = error_curve(probes)?;
    let diff = |p: &CurvePoint| p.far - p.frr;
    let i = curve
        .iter()
        .position(|p| diff(p) <= 0.0)
        .expect("curve ends with FAR = 0 and FRR = 1");
    let cur = curve[i];
    if diff(&cur) == 0.0 || i == 0 {
        return Ok(EerPoint {
            eer: cur.far,
            threshold: cur.threshold,
        });
    }
    let prev = curve[i - 1];
    let (d0, d1) = (diff(&prev), diff(&cur));
    let alpha = d0 / (d0 - d1);
    Ok(EerPoint {
        eer: prev.far + alpha * (cur.far - prev.far),
        threshold: prev.threshold + alpha * (cur.threshold - prev.threshold),
    })
}

/// Wall-clock measurements of one workload at one worker count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub workers: usize,
    pub workload: String,
    /// Median of `raw_secs`.
    pub wall_secs: f64,
    pub raw_secs: Vec<f64>,
}

impl Timing {
    pub fn from_runs(workers: usize, workload: impl Into<String>, raw_secs: Vec<f64>) -> Self {
        Timing {
            workers,
            workload: workload.into(),
            wall_secs: median(&raw_secs),
            raw_secs,
        }
    }
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// `S(P) = T(1) / T(P)`.
pub fn speedup(t1: &Timing, tp: &Timing) -> Result<f64> {
    if t1.workload != tp.workload {
        return Err(Error::WorkloadMismatch(t1.workload.clone(), tp.workload.clone()));
    }
    if t1.workers != 1 {
        return Err(Error::MissingBaseline);
    }
    Ok(t1.wall_secs / tp.wall_secs)
}

/// Time `run` `reps` times for each worker count. `run(workers)` performs
/// one complete workload and returns an output used to check that every
/// configuration computed the same thing.
pub fn time_runs<T, F>(workload: &str, worker_counts: &[usize], reps: usize, mut run: F) -> Result<Vec<(Timing, T)>>
where
    F: FnMut(usize) -> Result<T>,
{
    if !worker_counts.contains(&1) {
        return Err(Error::MissingBaseline);
    }
    if reps == 0 {
        return Err(Error::Config("repetitions must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(worker_counts.len());
    for &w in worker_counts {
        let mut raw = Vec::with_capacity(reps);
        let mut last = None;
        for _ in 0..reps {
            let start = Instant::now();
            let value = run(w)?;
            raw.push(start.elapsed().as_secs_f64());
            last = Some(value);
        }
        out.push((Timing::from_runs(w, workload, raw), last.expect("reps >= 1")));
    }
    Ok(out)
}
