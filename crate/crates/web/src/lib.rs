//! Browser bindings for the signature engine. Every export returns a JSON
//! string; `www/index.html` parses and plots it.

use serde_json::json;
use wasm_bindgen::prelude::*;

use sigauth::auth::{decide, threshold_for_priority, Priority, ThresholdPolicy};
use sigauth::eval::{eer, error_curve};
use sigauth::pipeline::{score_probes, train_pipeline, RunConfig, PROBE_SEED_BASE};
use sigauth::sigdata::{
    check_quality, make_prototype, synth_dataset, synth_sample, user_id, SampleKind, CHANNEL_NAMES,
};

fn js_err(e: sigauth::Error) -> JsError {
    JsError::new(&format!("[{}] {e}", e.code()))
}

fn parse_kind(kind: &str) -> Result<SampleKind, JsError> {
    match kind {
        "genuine" => Ok(SampleKind::Genuine),
        "skilled_forgery" => Ok(SampleKind::SkilledForgery),
        "random_forgery" => Ok(SampleKind::RandomForgery),
        other => Err(JsError::new(&format!("unknown sample kind {other:?}"))),
    }
}

/// One synthetic sample of user `user` (zero-based) with its quality report.
#[wasm_bindgen]
pub fn synth_signature(seed: u32, user: u32, kind: &str, noise: f64, sample: u32) -> Result<String, JsError> {
    let proto = make_prototype(seed as u64, &user_id(user as usize));
    let s = synth_sample(&proto, parse_kind(kind)?, noise, sample as u64).map_err(js_err)?;
    let quality = check_quality(&s);
    Ok(json!({
        "sample": s,
        "channel_names": CHANNEL_NAMES,
        "quality": quality,
    })
    .to_string())
}

/// Generate a small population, train it on one thread and score held-out
/// probes. Returns the FAR/FRR sweep, the EER and every probe score.
#[wasm_bindgen]
pub fn evaluate_population(seed: u32, users: u32, noise: f64, hidden: u32, locals: u32) -> Result<String, JsError> {
    let cfg = RunConfig {
        seed: seed as u64,
        users: users as usize,
        noise,
        hidden: hidden as usize,
        locals: locals as usize,
        workers: 1,
        ..RunConfig::default()
    };
    cfg.validate().map_err(js_err)?;
    let enroll = synth_dataset(cfg.seed, cfg.users, cfg.enroll_split, cfg.noise, 0).map_err(js_err)?;
    let probes = synth_dataset(cfg.seed, cfg.users, cfg.probe_split, cfg.noise, PROBE_SEED_BASE).map_err(js_err)?;
    let trained = train_pipeline(&enroll, &cfg).map_err(js_err)?;
    let scored = score_probes(&trained.pca, &trained.ensembles, &probes).map_err(js_err)?;
    let curve = error_curve(&scored).map_err(js_err)?;
    let e = eer(&scored).map_err(js_err)?;
    let scores: Vec<_> = probes
        .iter()
        .zip(&scored)
        .map(|(p, s)| json!({"user_id": p.user_id, "kind": p.kind, "score": s.score}))
        .collect();
    Ok(json!({
        "components": trained.pca.k,
        "singular_values": trained.pca.singular_values,
        "eer": e,
        "curve": curve,
        "scores": scores,
    })
    .to_string())
}

/// Decision at each priority tier for one score under the given policy.
#[wasm_bindgen]
pub fn tier_decisions(score: f64, low: f64, avg: f64, high: f64, vhigh: f64) -> Result<String, JsError> {
    if !(score.is_finite() && (0.0..=1.0).contains(&score)) {
        return Err(JsError::new(&format!("score must lie in [0, 1], got {score}")));
    }
    let policy = ThresholdPolicy::new(low, avg, high, vhigh).map_err(js_err)?;
    let decisions: Vec<_> = Priority::ALL
        .iter()
        .map(|&p| decide("demo", p, score, threshold_for_priority(&policy, p)))
        .collect();
    Ok(serde_json::to_string(&decisions).expect("decisions serialize"))
}

/// Default tier thresholds, low to vhigh.
#[wasm_bindgen]
pub fn default_policy() -> Vec<f64> {
    ThresholdPolicy::default().as_array().to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn tier_decisions_tighten_with_priority() {
        let p = default_policy();
        let v: Value = serde_json::from_str(&tier_decisions(0.7, p[0], p[1], p[2], p[3]).unwrap()).unwrap();
        let accepted: Vec<bool> = v
            .as_array()
            .unwrap()
            .iter()
            .map(|d| d["accepted"].as_bool().unwrap())
            .collect();
        assert_eq!(accepted, vec![true, true, false, false]);
    }

    #[test]
    fn synth_signature_passes_quality() {
        let v: Value = serde_json::from_str(&synth_signature(7, 0, "genuine", 0.15, 3).unwrap()).unwrap();
        assert_eq!(v["sample"]["ch"].as_array().unwrap().len(), CHANNEL_NAMES.len());
        assert_eq!(v["quality"]["pass"], Value::Bool(true));
    }

    #[test]
    fn small_population_separates() {
        let v: Value = serde_json::from_str(&evaluate_population(3, 6, 0.15, 8, 2).unwrap()).unwrap();
        assert!(v["eer"]["eer"].as_f64().unwrap() < 0.3);
        assert_eq!(v["scores"].as_array().unwrap().len(), 6 * 20);
    }
}
