//! Acceptance harness: one PASS / FAIL / N/A line per criterion.
//!
//! Runs without the libtest harness so the lines always print. Exits
//! nonzero if any criterion fails. Run with
//! `cargo test -p sigauth --test acceptance`; append `-- 2 5` to run only
//! those criteria.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sigauth::auth::{
    decide, enroll_population, security_check, threshold_for_priority, verify, Priority, Store, ThresholdPolicy,
    Verifier,
};
use sigauth::eval::{confusion_at, eer, far, frr, median, sensitivity, specificity, speedup, Confusion, ScoredProbe};
use sigauth::executor::available_workers;
use sigauth::features::assemble_matrix;
use sigauth::linalg::Matrix;
use sigauth::mapreduce::covariance;
use sigauth::nnet::{
    backprop_gradient, netcreate, rprop_step, sigtrain, Gradient, Layout, Network, RpropConfig, RpropState, StopConfig,
};
use sigauth::pca::{fit_pca, fit_pca_k, PcaModel};
use sigauth::pipeline::{
    bench_training, models_digest, score_probes, train_pipeline, Dataset, OperatingPoint, RunConfig,
};
use sigauth::sigdata::{make_prototype, synth_sample, SampleKind};

enum Outcome {
    Pass(String),
    /// Bound does not apply on this host; the invariant parts still held.
    NotApplicable(String),
}

type Check = Result<Outcome, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn default_benchmark() -> RunConfig {
    RunConfig {
        workers: available_workers(),
        ..RunConfig::default()
    }
}

fn to_dmatrix(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)])
}

fn mapreduce_correctness() -> Check {
    let data = Dataset::generate(&default_benchmark()).map_err(|e| e.to_string())?;
    let matrix = assemble_matrix(&data.enroll).map_err(|e| e.to_string())?;
    let rows = matrix.values();
    ensure(rows.len() == 2000 && matrix.dim() == 64, || {
        format!("matrix is {}x{}", rows.len(), matrix.dim())
    })?;

    // Two-pass oracle: explicit mean, then centered cross products.
    let n = rows.len();
    let x = DMatrix::from_fn(n, 64, |i, j| rows[i][j]);
    let mean = x.row_mean();
    let centered = DMatrix::from_fn(n, 64, |i, j| x[(i, j)] - mean[j]);
    let oracle = centered.transpose() * &centered / (n as f64 - 1.0);

    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for w in [1, 2, 4, 8] {
        let (cov, _) = covariance(&rows, w, w).map_err(|e| e.to_string())?;
        worst = worst.max((to_dmatrix(&cov) - &oracle).norm() / oracle.norm());
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= 1e-9, || format!("relative Frobenius error {worst:.2e} > 1e-9"))?;
    ensure(secs < 2.0, || format!("took {secs:.2}s"))?;
    Ok(Outcome::Pass(format!(
        "2000x64, W in {{1,2,4,8}}: max rel err {worst:.2e}, {secs:.3}s"
    )))
}

fn pca_validity() -> Check {
    let data = Dataset::generate(&default_benchmark()).map_err(|e| e.to_string())?;
    let matrix = assemble_matrix(&data.enroll).map_err(|e| e.to_string())?;
    let cfg = RunConfig::default().pca_config();
    let model = PcaModel::fit(&matrix.values(), &cfg).map_err(|e| e.to_string())?;
    let diag_err = model
        .corr
        .diagonal()
        .iter()
        .map(|v| (v - 1.0).abs())
        .fold(0.0, f64::max);
    ensure(diag_err <= 1e-9, || format!("diagonal error {diag_err:.2e}"))?;

    let u = to_dmatrix(&model.basis);
    let ortho = (u.transpose() * &u - DMatrix::identity(model.k, model.k)).amax();
    ensure(ortho <= 1e-8, || format!("basis orthonormality error {ortho:.2e}"))?;

    let d = model.corr.rows();
    let full = fit_pca_k(&model.corr, d).map_err(|e| e.to_string())?;
    let uf_ortho = {
        let uf = to_dmatrix(&full.basis);
        (uf.transpose() * &uf - DMatrix::identity(d, d)).amax()
    };
    ensure(uf_ortho <= 1e-8, || {
        format!("full basis orthonormality error {uf_ortho:.2e}")
    })?;
    let uf = to_dmatrix(&full.basis);
    let s = DMatrix::from_diagonal(&DVector::from_vec(full.singular_values.clone()));
    let recon = (&uf * s * uf.transpose() - to_dmatrix(&model.corr)).norm();
    ensure(recon <= 1e-8, || format!("reconstruction error {recon:.2e}"))?;

    let ones = Matrix::from_rows(&[vec![1.0; 3], vec![1.0; 3], vec![1.0; 3]]);
    let rank1 = fit_pca(&ones, 0.95, 32).map_err(|e| e.to_string())?;
    ensure(rank1.k == 1, || format!("rank-1 gave k={}", rank1.k))?;
    Ok(Outcome::Pass(format!(
        "diag err {diag_err:.1e}, orthonormality {ortho:.1e}, reconstruction {recon:.1e} (D={d}), rank-1 k=1, k={} at 0.95",
        model.k
    )))
}

fn gradient_fidelity() -> Check {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(31337);
    let mut worst: f64 = 0.0;
    for pair in 0..100u64 {
        let k = rng.random_range(1..8);
        let hidden = rng.random_range(1..8);
        let n = rng.random_range(1..10);
        let net = netcreate(Layout::new(k, hidden), pair).map_err(|e| e.to_string())?;
        let inputs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..k).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let targets: Vec<f64> = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
        let (grad, _) = backprop_gradient(&net, &inputs, &targets).map_err(|e| e.to_string())?;
        for i in 0..net.params.len() {
            let mut plus = net.clone();
            plus.params[i] += h;
            let mut minus = net.clone();
            minus.params[i] -= h;
            let numeric = (plus.batch_error(&inputs, &targets).unwrap()
                - minus.batch_error(&inputs, &targets).unwrap())
                / (2.0 * h);
            let rel = (grad.0[i] - numeric).abs() / grad.0[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    ensure(worst <= 1e-4, || format!("max relative error {worst:.2e}"))?;
    Ok(Outcome::Pass(format!("100 pairs, max relative error {worst:.2e}")))
}

fn rprop_conformance() -> Check {
    let cfg = RpropConfig::default();
    let mut net = Network::zeros(Layout::new(1, 1));
    net.params[0] = 1.0;
    let mut st = RpropState::new(net.params.len(), cfg);
    let g = |v: f64| Gradient(vec![v, 0.0, 0.0, 0.0]);

    rprop_step(&mut net, &mut st, &g(2.0)).unwrap();
    ensure((net.params[0] - 0.9).abs() < 1e-15 && st.steps[0] == 0.1, || {
        "first step".into()
    })?;
    rprop_step(&mut net, &mut st, &g(2.0)).unwrap();
    ensure((st.steps[0] - 0.12).abs() < 1e-15, || {
        format!("growth gave {}", st.steps[0])
    })?;
    let w = net.params[0];
    rprop_step(&mut net, &mut st, &g(-2.0)).unwrap();
    ensure((st.steps[0] - 0.06).abs() < 1e-15, || {
        format!("shrink gave {}", st.steps[0])
    })?;
    ensure(net.params[0] == w, || "weight moved on sign flip".into())?;
    ensure(st.prev_grad[0] == 0.0, || "stored gradient not zeroed".into())?;

    let mut cap = RpropState::new(4, cfg);
    for _ in 0..200 {
        rprop_step(&mut net, &mut cap, &g(1.0)).unwrap();
    }
    ensure(cap.steps[0] == 50.0, || format!("cap gave {}", cap.steps[0]))?;
    let mut floor = RpropState::new(4, cfg);
    for i in 0..200 {
        floor.prev_grad[0] = if i % 2 == 0 { -1.0 } else { 1.0 };
        rprop_step(&mut net, &mut floor, &g(if i % 2 == 0 { 1.0 } else { -1.0 })).unwrap();
    }
    ensure(floor.steps[0] == 1e-6, || format!("floor gave {}", floor.steps[0]))?;

    let inputs = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]];
    let targets = vec![0.0, 1.0, 1.0, 0.0];
    let stop = StopConfig {
        max_epochs: 500,
        err_goal: 0.0,
    };
    let (_, e) =
        sigtrain(netcreate(Layout::new(2, 4), 1).unwrap(), &inputs, &targets, stop, cfg).map_err(|e| e.to_string())?;
    ensure(e < 0.05, || format!("XOR error {e}"))?;
    Ok(Outcome::Pass(format!(
        "branches 0.1/0.12/0.06, cap 50, floor 1e-6; XOR E={e:.2e} in 500 epochs"
    )))
}

fn end_to_end_quality() -> Check {
    let cfg = default_benchmark();
    let start = Instant::now();
    let data = Dataset::generate(&cfg).map_err(|e| e.to_string())?;
    let trained = train_pipeline(&data.enroll, &cfg).map_err(|e| e.to_string())?;
    let scored = score_probes(&trained.pca, &trained.ensembles, &data.probes).map_err(|e| e.to_string())?;
    let e = eer(&scored).map_err(|e| e.to_string())?;
    let op = OperatingPoint::at(&scored, e.threshold, false).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let summary = format!(
        "50 users, seed 42, noise {}: EER {:.4}, sensitivity {:.4}, specificity {:.4} at t={:.4}, {secs:.1}s",
        cfg.noise, e.eer, op.sensitivity, op.specificity, e.threshold
    );
    ensure(e.eer <= 0.15, || format!("EER too high; {summary}"))?;
    ensure(op.sensitivity >= 0.90, || format!("sensitivity too low; {summary}"))?;
    ensure(op.specificity >= 0.90, || format!("specificity too low; {summary}"))?;
    ensure(secs < 300.0, || format!("too slow; {summary}"))?;
    Ok(Outcome::Pass(summary))
}

const GRID: usize = 10_000;

fn eer_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(10..=500);
        // Distinct lattice scores (m + 0.5) / GRID.
        let mut probes: Vec<ScoredProbe> = sample(&mut rng, GRID, n)
            .into_iter()
            .map(|m| ScoredProbe::new((m as f64 + 0.5) / GRID as f64, false))
            .collect();
        for p in probes.iter_mut() {
            p.genuine = rng.random_bool((0.2 + 0.6 * p.score).clamp(0.05, 0.95));
        }
        probes[0].genuine = false;
        probes[n - 1].genuine = true;
        let ng = probes.iter().filter(|p| p.genuine).count() as f64;
        let nf = n as f64 - ng;
        let oracle = (0..=GRID)
            .map(|m| {
                let t = m as f64 / GRID as f64;
                let fa = probes.iter().filter(|p| !p.genuine && p.score >= t).count() as f64 / nf;
                let fr = probes.iter().filter(|p| p.genuine && p.score < t).count() as f64 / ng;
                fa.max(fr)
            })
            .fold(f64::INFINITY, f64::min);
        let got = eer(&probes).map_err(|e| e.to_string())?.eer;
        worst = worst.max((got - oracle).abs());
    }
    ensure(worst <= 1e-3, || format!("max deviation {worst:.2e}"))?;
    Ok(Outcome::Pass(format!(
        "200 sets of 10-500 probes, max |sweep - grid| = {worst:.2e}"
    )))
}

fn metric_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut n = 0;
    while n < 1000 {
        let c = Confusion {
            true_genuine: rng.random_range(0..500),
            false_genuine: rng.random_range(0..500),
            true_forged: rng.random_range(0..500),
            false_forged: rng.random_range(0..500),
        };
        if c.true_genuine + c.false_forged == 0 || c.true_forged + c.false_genuine == 0 {
            continue;
        }
        ensure(sensitivity(&c).unwrap() == 1.0 - frr(&c).unwrap(), || {
            format!("sensitivity identity on {c:?}")
        })?;
        ensure(specificity(&c).unwrap() == 1.0 - far(&c).unwrap(), || {
            format!("specificity identity on {c:?}")
        })?;
        n += 1;
    }
    for _ in 0..200 {
        let size = rng.random_range(1..300);
        let probes: Vec<ScoredProbe> = (0..size)
            .map(|_| ScoredProbe::new(rng.random_range(0.0..1.0), rng.random_bool(0.5)))
            .collect();
        let c = confusion_at(&probes, rng.random_range(0.0..1.0)).unwrap();
        ensure(c.total() == size as u64, || {
            "confusion does not sum to probe count".into()
        })?;
    }
    Ok(Outcome::Pass(
        "1000 confusions exact; 200 probe sets sum to count".into(),
    ))
}

fn priority_gate() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut draws = 0;
    while draws < 1000 {
        let mut t: Vec<f64> = (0..4).map(|_| rng.random_range(0.01..0.99)).collect();
        t.sort_by(f64::total_cmp);
        let Ok(policy) = ThresholdPolicy::new(t[0], t[1], t[2], t[3]) else {
            continue;
        };
        let score = rng.random_range(0.0..1.0);
        for p in Priority::ALL {
            if decide("u", p, score, threshold_for_priority(&policy, p)).accepted {
                for q in Priority::ALL.into_iter().filter(|q| q.rank() < p.rank()) {
                    ensure(
                        decide("u", q, score, threshold_for_priority(&policy, q)).accepted,
                        || format!("accepted at {p} but not at {q} (score {score})"),
                    )?;
                }
            }
        }
        draws += 1;
    }

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = Store::open(dir.path()).map_err(|e| e.to_string())?;
    let cfg = RunConfig {
        users: 4,
        ..default_benchmark()
    };
    let data = Dataset::generate(&cfg).map_err(|e| e.to_string())?;
    enroll_population(
        &data.enroll,
        &data.priorities,
        &store,
        &cfg.pca_config(),
        &cfg.enroll_config(),
    )
    .map_err(|e| e.to_string())?;
    let mut compared = 0;
    for probe in &data.probes {
        let policy = ThresholdPolicy::new(
            rng.random_range(0.05..0.3),
            rng.random_range(0.3..0.5),
            rng.random_range(0.5..0.8),
            rng.random_range(0.8..0.99),
        )
        .unwrap();
        let record = store.load(&probe.user_id).map_err(|e| e.to_string())?;
        let a = security_check(&probe.user_id, probe, &store, &policy).map_err(|e| e.to_string())?;
        let b = verify(
            &probe.user_id,
            probe,
            threshold_for_priority(&policy, record.priority),
            &store,
        )
        .map_err(|e| e.to_string())?;
        ensure(a == b, || format!("security_check {a:?} != verify {b:?}"))?;
        compared += 1;
    }
    Ok(Outcome::Pass(format!(
        "1000 monotone draws; {compared} security_check == verify"
    )))
}

fn speedup_check() -> Check {
    let cores = available_workers();
    let cfg = RunConfig {
        users: 200,
        locals: 8,
        err_goal: 0.0,
        ..default_benchmark()
    };
    let report = bench_training(&cfg, &[1, 2, 4, 8], 15).map_err(|e| e.to_string())?;
    print!("{}", report.table());
    let base = &report.entries[0];
    ensure(speedup(&base.timing, &base.timing).unwrap() == 1.0, || {
        "S(1) != 1".into()
    })?;
    ensure(base.speedup == 1.0, || format!("reported S(1) = {}", base.speedup))?;
    let digests_equal = report.entries.iter().all(|e| e.model_digest == base.model_digest);
    ensure(digests_equal, || "models differ across worker counts".into())?;
    let p = cores.min(8);
    let at_p = report
        .entries
        .iter()
        .rfind(|e| e.timing.workers <= p)
        .map(|e| e.speedup)
        .unwrap_or(1.0);
    let detail = format!("S(1)=1 exact; S({p})={at_p:.3}; host cpus {cores}");
    if cores < 4 {
        return Ok(Outcome::NotApplicable(format!("{detail}; bound needs >= 4 cores")));
    }
    ensure(at_p >= 2.5, || format!("{detail} < 2.5"))?;
    Ok(Outcome::Pass(detail))
}

fn determinism() -> Check {
    let cfg = RunConfig {
        users: 6,
        ..default_benchmark()
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = Dataset::generate(&cfg).map_err(|e| e.to_string())?;
    let b = Dataset::generate(&cfg).map_err(|e| e.to_string())?;
    a.write(&dir.path().join("a"), &cfg).map_err(|e| e.to_string())?;
    b.write(&dir.path().join("b"), &cfg).map_err(|e| e.to_string())?;
    for f in ["enroll.jsonl", "probes.jsonl", "manifest.json"] {
        let x = std::fs::read(dir.path().join("a").join(f)).unwrap();
        let y = std::fs::read(dir.path().join("b").join(f)).unwrap();
        ensure(x == y, || format!("{f} differs between runs"))?;
    }

    let one = train_pipeline(
        &a.enroll,
        &RunConfig {
            workers: 1,
            ..cfg.clone()
        },
    )
    .map_err(|e| e.to_string())?;
    let four = train_pipeline(
        &b.enroll,
        &RunConfig {
            workers: 4,
            ..cfg.clone()
        },
    )
    .map_err(|e| e.to_string())?;
    ensure(models_digest(&one.ensembles) == models_digest(&four.ensembles), || {
        "models differ".into()
    })?;
    ensure(one.pca == four.pca, || "pca differs".into())?;
    let s1 = score_probes(&one.pca, &one.ensembles, &a.probes).map_err(|e| e.to_string())?;
    let s4 = score_probes(&four.pca, &four.ensembles, &b.probes).map_err(|e| e.to_string())?;
    ensure(
        s1.iter().zip(&s4).all(|(x, y)| x.score.to_bits() == y.score.to_bits()),
        || "scores differ".into(),
    )?;

    let store_a = Store::open(dir.path().join("store_a")).unwrap();
    let store_b = Store::open(dir.path().join("store_b")).unwrap();
    for store in [&store_a, &store_b] {
        enroll_population(&a.enroll, &a.priorities, store, &cfg.pca_config(), &cfg.enroll_config())
            .map_err(|e| e.to_string())?;
    }
    for entry in std::fs::read_dir(store_a.root()).unwrap() {
        let name = entry.unwrap().file_name();
        let x = std::fs::read(store_a.root().join(&name)).unwrap();
        let y = std::fs::read(store_b.root().join(&name)).unwrap();
        ensure(x == y, || format!("store file {name:?} differs"))?;
    }
    let verifier = Verifier::open(&store_a).map_err(|e| e.to_string())?;
    let mut checked = 0;
    for (probe, fresh) in a.probes.iter().zip(&s1) {
        let record = store_a.load(&probe.user_id).map_err(|e| e.to_string())?;
        let stored = verifier
            .score(&record, probe)
            .map_err(|e| e.to_string())?
            .expect("passes quality");
        ensure(stored.to_bits() == fresh.score.to_bits(), || {
            "store round trip changed a score".into()
        })?;
        checked += 1;
    }
    let proto = make_prototype(cfg.seed, "u001");
    let x = synth_sample(&proto, SampleKind::SkilledForgery, cfg.noise, 5).unwrap();
    ensure(
        x == synth_sample(&proto, SampleKind::SkilledForgery, cfg.noise, 5).unwrap(),
        || "sample".into(),
    )?;
    Ok(Outcome::Pass(format!(
        "datasets, models (W=1 vs W=4), store files identical; {checked} scores bit-exact after round trip"
    )))
}

fn complexity_scaling() -> Check {
    let base = RunConfig {
        workers: 1,
        err_goal: 0.0,
        ..default_benchmark()
    };
    let sizes = [25usize, 50, 100];
    let mut points = Vec::new();
    for &users in &sizes {
        let cfg = RunConfig { users, ..base.clone() };
        let data = Dataset::generate(&cfg).map_err(|e| e.to_string())?;
        train_pipeline(&data.enroll, &cfg).map_err(|e| e.to_string())?;
        let mut times = Vec::new();
        for _ in 0..5 {
            let start = Instant::now();
            train_pipeline(&data.enroll, &cfg).map_err(|e| e.to_string())?;
            times.push(start.elapsed().as_secs_f64());
        }
        let work = (users * cfg.enroll_split.total()) as f64;
        points.push((work.ln(), median(&times).ln(), median(&times)));
    }
    // Least-squares slope through the three log-log points.
    let mx = points.iter().map(|p| p.0).sum::<f64>() / 3.0;
    let my = points.iter().map(|p| p.1).sum::<f64>() / 3.0;
    let slope = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
        / points.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
    let times: Vec<String> = points.iter().map(|p| format!("{:.3}s", p.2)).collect();
    let detail = format!("L x M = 1000/2000/4000 -> {}; slope {slope:.3}", times.join(", "));
    ensure((0.8..=1.3).contains(&slope), || detail.clone())?;
    Ok(Outcome::Pass(detail))
}

type Criterion = (&'static str, fn() -> Check);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("map-reduce covariance", mapreduce_correctness),
        ("pca validity", pca_validity),
        ("gradient fidelity", gradient_fidelity),
        ("rprop conformance", rprop_conformance),
        ("end-to-end quality", end_to_end_quality),
        ("eer oracle", eer_oracle),
        ("metric identities", metric_identities),
        ("priority gate", priority_gate),
        ("speedup", speedup_check),
        ("determinism", determinism),
        ("complexity scaling", complexity_scaling),
    ];
    // Optional criterion numbers select a subset: `-- 2 5`.
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !only.is_empty() && !only.contains(&(i + 1)) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panic: {msg}"))
        });
        let (status, detail) = match outcome {
            Ok(Outcome::Pass(d)) => ("PASS", d),
            Ok(Outcome::NotApplicable(d)) => ("N/A ", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {:>2} {status} {name}: {detail}", i + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
