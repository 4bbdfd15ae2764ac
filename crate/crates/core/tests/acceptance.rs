//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `cargo test --test acceptance -- --nocapture` to see them).
//!
//! The Monte Carlo criteria (6-9) write their CSVs into a shared temp
//! directory; the determinism criterion (11) re-executes the same configs
//! under 1-thread and 4-thread pools and compares bytes.

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use sparsepca::deviation::{l0_quad_stat, lemma_bound, linf_stat, StatKind};
use sparsepca::estimators::{l0_exact, l0_exact_with_budget, l0_truncated_power, plain_pca, EstimatorConfig, Init, Method};
use sparsepca::harness::{
    fit_rate, run_experiment, EstimatorBlock, ExperimentConfig, Moment, ModelBlock, RunOptions,
    TargetSpec, XAxis,
};
use sparsepca::linalg::{curvature_gap, projection_loss, sin_theta, sym_eig, SymMatrix, UnitVector};
use sparsepca::model::{
    make_spiked, sample_covariance, sample_data_with_root, GAUSSIAN_K_SQ, SamplerKind,
    SamplerSpec, Sigma0, SparsityClass,
};
use sparsepca::theory::{assemble_lower_bound, kl_spiked, packing_set};

fn report(criterion: &str, pass: bool, details: &str) {
    println!("criterion {criterion}: {} - {details}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {criterion} failed: {details}");
}

fn random_unit(p: usize, rng: &mut ChaCha8Rng) -> UnitVector {
    loop {
        let v = Array1::from_iter((0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        if let Ok(u) = UnitVector::normalized(v) {
            return u;
        }
    }
}

/// 1. Loss-geometry identities on 1e5 random pairs.
#[test]
fn criterion_01_identity_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    for i in 0..100_000 {
        let p = 2 + (i % 9);
        let u = random_unit(p, &mut rng);
        let v = random_unit(p, &mut rng);
        let loss = projection_loss(&u, &v).unwrap();
        // sign invariance is exact
        assert_eq!(projection_loss(&u.negated(), &v).unwrap(), loss);
        assert_eq!(projection_loss(&u, &v.negated()).unwrap(), loss);
        // l2 equivalence
        let d_sq: f64 = (u.coords() - v.coords()).iter().map(|x| x * x).sum();
        worst = worst.max(loss * loss - 2.0 * d_sq);
        if d_sq <= 2.0 {
            worst = worst.max(d_sq - loss * loss);
        }
        // canonical-angle identity
        let s = sin_theta(&u, &v).unwrap();
        worst = worst.max((loss * loss - 2.0 * s * s).abs() - 1e-12);
    }
    report("1 (identity suite)", worst <= 1e-10, &format!("worst slack {worst:.3e} over 1e5 pairs"));
}

/// 2. Closed-form spiked KL against the generic Gaussian KL.
#[test]
fn criterion_02_kl_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let p = 2 + (i % 9);
        let x1 = random_unit(p, &mut rng);
        let x2 = random_unit(p, &mut rng);
        let l2 = 0.25 + rng.random::<f64>();
        let l1 = l2 + 0.25 + rng.random::<f64>();
        let n = 1 + (i % 20);
        let closed = kl_spiked(&x1, &x2, l1, l2, n).unwrap();

        // generic Gaussian KL with explicit covariances
        let spike = |x: &UnitVector| {
            let mut a = Array2::eye(p) * l2;
            for r in 0..p {
                for c in 0..p {
                    a[(r, c)] += (l1 - l2) * x.coords()[r] * x.coords()[c];
                }
            }
            SymMatrix::new(a).unwrap()
        };
        let s1 = spike(&x1);
        let s2 = spike(&x2);
        let eig2 = sym_eig(&s2).unwrap();
        let inv = {
            let scaled = &eig2.eigenvectors * &eig2.eigenvalues.mapv(|l| 1.0 / l);
            scaled.dot(&eig2.eigenvectors.t())
        };
        let m = inv.dot(s1.as_array());
        let trace: f64 = (0..p).map(|j| m[(j, j)]).sum();
        let eig1 = sym_eig(&s1).unwrap();
        let logdet: f64 = eig1.eigenvalues.iter().map(|l| l.ln()).sum::<f64>()
            - eig2.eigenvalues.iter().map(|l| l.ln()).sum::<f64>();
        let oracle = n as f64 / 2.0 * (trace - p as f64 - logdet);

        let rel = (closed - oracle).abs() / oracle.abs().max(1e-12);
        if oracle.abs() > 1e-9 {
            worst = worst.max(rel);
        } else {
            worst = worst.max((closed - oracle).abs());
        }
    }
    report("2 (KL oracle)", worst <= 1e-8, &format!("worst relative error {worst:.3e} on 1e3 pairs"));
}

/// 3. Curvature slack nonnegative over 1e4 random instances.
#[test]
fn criterion_03_curvature() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = f64::INFINITY;
    for i in 0..10_000 {
        let p = 2 + (i % 9);
        // PSD matrix with known eigenbasis
        let raw = Array2::from_shape_fn((p, p), |_| rng.sample::<f64, _>(StandardNormal));
        let eig = sym_eig(&SymMatrix::new(raw).unwrap()).unwrap();
        let mut vals: Vec<f64> = (0..p).map(|_| rng.random::<f64>()).collect();
        vals.sort_by(|a, b| b.partial_cmp(a).unwrap());
        vals[0] += 0.1 + rng.random::<f64>();
        let lam = Array2::from_diag(&Array1::from(vals.clone()));
        let sigma = SymMatrix::new(eig.eigenvectors.dot(&lam).dot(&eig.eigenvectors.t())).unwrap();
        let theta1 = UnitVector::normalized(eig.eigenvectors.column(0).to_owned()).unwrap();
        let theta = random_unit(p, &mut rng);
        let g = curvature_gap(&sigma, &theta1, vals[0], vals[1], &theta).unwrap();
        worst = worst.min(g);
    }
    report("3 (curvature)", worst >= -1e-10, &format!("minimum gap {worst:.3e} over 1e4 instances"));
}

/// 4. Packing certification over a 50-point grid.
#[test]
fn criterion_04_packing_certification() {
    let mut failures = 0usize;
    let mut points = 0usize;
    let mut seed = 0u64;
    for p in [5usize, 8, 12, 16, 24, 32, 48, 64] {
        for q in [0.0, 0.5, 1.0] {
            for rq in [2.0, 3.0, 5.0] {
                if points >= 50 {
                    break;
                }
                for eps in [0.25, 1.0] {
                    if points >= 50 {
                        break;
                    }
                    seed += 1;
                    points += 1;
                    // packing_set certifies separation, feasibility and
                    // cardinality internally and errors on any violation
                    match packing_set(p, q, rq, eps, seed) {
                        Ok(pack) => {
                            let s2 = std::f64::consts::SQRT_2;
                            if !(pack.min_sep > eps / s2 && pack.max_sep <= s2 * eps + 1e-12) {
                                failures += 1;
                            }
                            if pack.max_lq_norm > rq + 1e-9 {
                                failures += 1;
                            }
                        }
                        Err(e) => {
                            println!("  packing failed at (p={p}, q={q}, R={rq}, eps={eps}): {e}");
                            failures += 1;
                        }
                    }
                }
            }
        }
    }
    report("4 (packing certification)", failures == 0 && points == 50, &format!("{points} grid points, {failures} failures"));
}

/// 5. Exact l0 search against a brute-force oracle; truncated power close
/// behind.
#[test]
fn criterion_05_l0_optimality() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut exact_mismatch = 0usize;
    let mut tp_hits = 0usize;
    let trials = 200usize;
    for t in 0..trials {
        let a = Array2::from_shape_fn((8, 8), |_| rng.sample::<f64, _>(StandardNormal));
        let s = SymMatrix::new(a.t().dot(&a)).unwrap();
        let exact = l0_exact(&s, 3).unwrap();

        // independent enumeration oracle: full eigensolver per support
        let mut oracle = f64::NEG_INFINITY;
        for i in 0..8 {
            for j in (i + 1)..8 {
                for k in (j + 1)..8 {
                    let idx = [i, j, k];
                    let sub = Array2::from_shape_fn((3, 3), |(r, c)| s[(idx[r], idx[c])]);
                    let lam = sym_eig(&SymMatrix::new(sub).unwrap()).unwrap().eigenvalues[0];
                    oracle = oracle.max(lam);
                }
            }
        }
        if (exact.objective - oracle).abs() > 1e-12 * (1.0 + oracle.abs()) {
            exact_mismatch += 1;
        }

        let cfg = EstimatorConfig::l0_truncated_power(3).with_restarts(16).with_seed(t as u64);
        let tp = l0_truncated_power(&s, 3, &cfg).unwrap();
        assert!(tp.objective <= exact.objective + 1e-9);
        if exact.objective - tp.objective <= 1e-6 {
            tp_hits += 1;
        }
    }
    let pass = exact_mismatch == 0 && tp_hits * 100 >= trials * 95;
    report(
        "5 (l0 optimality)",
        pass,
        &format!("exact matched oracle on {}/{trials}; truncated power within 1e-6 on {tp_hits}/{trials}", trials - exact_mismatch),
    );
}

fn shared_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join("spca_acceptance");
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Criterion 6 experiment: hard-sparsity rate grid at p = 32.
fn config_c6(dir: &std::path::Path, tag: &str) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelBlock {
            p: 32,
            lambda1: 2.0,
            lambda2: 1.0,
            // 3-sparse target inside the R0 = 4 ball: support recovery
            // settles before the smallest grid point so the n^{-1} scaling
            // is visible across the whole grid
            theta1_pattern: TargetSpec::FirstKEqual { k: Some(3) },
            sampler: SamplerKind::Gaussian,
        },
        sparsity: SparsityClass::new(0.0, 4.0, 1.0, 0.1).unwrap(),
        estimator: EstimatorBlock {
            method: Method::L0Exact,
            rho_q: Some(4.0),
            max_iter: 500,
            tol: 1e-8,
            restarts: 1,
            init: Init::DiagThresh,
            enumeration_budget: 1_000_000,
        },
        grid: vec![(200, 32), (400, 32), (800, 32), (1600, 32), (3200, 32), (6400, 32)],
        replicates: 200,
        base_seed: 61_001,
        output_path: dir.join(format!("c6_{tag}.csv")).to_string_lossy().into_owned(),
    }
}

/// 6. q = 0 rate: squared loss of the exact l0 estimator scales like n^{-1}.
#[test]
fn criterion_06_rate_q0() {
    let dir = shared_dir();
    let cfg = config_c6(&dir, "main");
    let records = run_experiment(&cfg, &RunOptions { stable_time: true, no_output: false }).unwrap();
    let fit = fit_rate(&records, XAxis::N, Moment::MeanLossSq, -1.0, 0.15).unwrap();
    let pass = fit.pass && fit.r2 >= 0.98;
    report(
        "6 (rate, q=0)",
        pass,
        &format!("slope {:.3} (target -1.0 +- 0.15), r2 {:.4}", fit.slope, fit.r2),
    );
}

/// Criterion 7 experiment: soft-sparsity rate grid. The spread of the target
/// tracks the least-favorable configuration at each n, and the dimension is
/// large enough (p = 256) that the support-selection problem stays hard over
/// the whole n range; a small fixed p caps the spread and the measured
/// exponent drifts toward the parametric -1.
fn config_c7(dir: &std::path::Path, tag: &str, restarts: usize) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelBlock {
            p: 256,
            lambda1: 2.0,
            lambda2: 1.0,
            theta1_pattern: TargetSpec::CriticalSpread { multiplier: 1.0 },
            sampler: SamplerKind::Gaussian,
        },
        sparsity: SparsityClass::new(1.0, 2.0, 0.5, 0.1).unwrap(),
        estimator: EstimatorBlock {
            method: Method::LqProjected,
            rho_q: Some(2.0),
            max_iter: 500,
            tol: 1e-8,
            restarts,
            init: Init::DiagThresh,
            enumeration_budget: 1_000_000,
        },
        grid: vec![(200, 256), (400, 256), (800, 256), (1600, 256), (3200, 256), (6400, 256)],
        replicates: 200,
        base_seed: 71_001,
        output_path: dir.join(format!("c7_{tag}.csv")).to_string_lossy().into_owned(),
    }
}

/// 7. q = 1 rate: squared loss of the l1-constrained estimator scales like
/// n^{-1/2}; one restart-count escalation before failing.
#[test]
fn criterion_07_rate_q1() {
    let dir = shared_dir();
    let cfg = config_c7(&dir, "main", 8);
    let records = run_experiment(&cfg, &RunOptions { stable_time: true, no_output: false }).unwrap();
    let fit = fit_rate(&records, XAxis::N, Moment::MeanLossSq, -0.5, 0.15).unwrap();
    if fit.pass {
        report("7 (rate, q=1)", true, &format!("slope {:.3} (target -0.5 +- 0.15)", fit.slope));
        return;
    }
    // escalate the restart count once
    println!("  slope {:.3} out of band with 8 restarts; escalating to 16", fit.slope);
    let cfg = config_c7(&dir, "escalated", 16);
    let records = run_experiment(&cfg, &RunOptions { stable_time: true, no_output: false }).unwrap();
    let fit = fit_rate(&records, XAxis::N, Moment::MeanLossSq, -0.5, 0.15).unwrap();
    report("7 (rate, q=1)", fit.pass, &format!("slope {:.3} after escalation (target -0.5 +- 0.15)", fit.slope));
}

/// Criterion 8 experiments: plain PCA and exact l0 at p = n.
fn config_c8_pca(dir: &std::path::Path, tag: &str) -> ExperimentConfig {
    ExperimentConfig {
        model: ModelBlock {
            p: 64,
            lambda1: 2.0,
            lambda2: 1.0,
            theta1_pattern: TargetSpec::FirstKEqual { k: Some(4) },
            sampler: SamplerKind::Gaussian,
        },
        sparsity: SparsityClass::new(0.0, 4.0, 1.0, 0.1).unwrap(),
        estimator: EstimatorBlock {
            method: Method::PlainPca,
            rho_q: None,
            max_iter: 0,
            tol: 1e-8,
            restarts: 1,
            init: Init::DiagThresh,
            enumeration_budget: 1_000_000,
        },
        grid: vec![(64, 64), (128, 128), (256, 256)],
        replicates: 30,
        base_seed: 81_001,
        output_path: dir.join(format!("c8_pca_{tag}.csv")).to_string_lossy().into_owned(),
    }
}

fn config_c8_l0(dir: &std::path::Path, tag: &str) -> ExperimentConfig {
    let mut cfg = config_c8_pca(dir, tag);
    cfg.estimator.method = Method::L0Exact;
    cfg.estimator.rho_q = Some(4.0);
    // C(256,4) supports; the desk-scale default budget is overridden here
    cfg.estimator.enumeration_budget = 200_000_000;
    cfg.replicates = 6;
    cfg.output_path = dir.join(format!("c8_l0_{tag}.csv")).to_string_lossy().into_owned();
    cfg
}

/// 8. PCA inconsistency witness at p = n, while the sparse estimator keeps
/// improving.
#[test]
fn criterion_08_pca_inconsistency() {
    let dir = shared_dir();
    let pca_records = run_experiment(&config_c8_pca(&dir, "main"), &RunOptions { stable_time: true, no_output: false }).unwrap();
    let l0_records = run_experiment(&config_c8_l0(&dir, "main"), &RunOptions { stable_time: true, no_output: false }).unwrap();

    let mean_at = |records: &[sparsepca::harness::ExperimentRecord], p: usize| -> f64 {
        let v: Vec<f64> = records.iter().filter(|r| r.p == p && r.status == "ok").map(|r| r.loss).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let pca = [mean_at(&pca_records, 64), mean_at(&pca_records, 128), mean_at(&pca_records, 256)];
    let l0 = [mean_at(&l0_records, 64), mean_at(&l0_records, 128), mean_at(&l0_records, 256)];
    let nondecreasing = pca[1] >= pca[0] - 0.05 && pca[2] >= pca[1] - 0.05;
    let decrease = (l0[0] - l0[2]) / l0[0];
    let pass = nondecreasing && decrease >= 0.30;
    report(
        "8 (PCA inconsistency)",
        pass,
        &format!(
            "plain_pca means {:.3}/{:.3}/{:.3} (non-decreasing within 0.05: {nondecreasing}); l0_exact means {:.3}/{:.3}/{:.3} (decrease {:.0}%)",
            pca[0], pca[1], pca[2], l0[0], l0[1], l0[2], decrease * 100.0
        ),
    );
}

/// 9. Deviation-statistic scaling stays inside a fixed ratio band.
#[test]
fn criterion_09_deviation_scaling() {
    let k = GAUSSIAN_K_SQ.sqrt();
    let mut rng_seed = 90_001u64;

    // linf over p x n grid
    let mut linf_ratios: Vec<f64> = Vec::new();
    for p in [16usize, 64, 256] {
        let target = sparsepca::model::sparse_unit_vector(p, 0.0, 4.0, sparsepca::model::Pattern::FirstKEqual { k: None }).unwrap();
        let model = make_spiked(p, 2.0, 1.0, target.vector, Sigma0::Canonical).unwrap();
        let sigma = model.covariance();
        let root = model.covariance_root().unwrap();
        for n in [100usize, 1000, 10_000] {
            let bound = lemma_bound(StatKind::Linf, p, n, 0.0, 2.0, k).unwrap();
            assert!(bound.in_regime);
            let reps = 10;
            let mut mean = 0.0;
            for _ in 0..reps {
                rng_seed += 1;
                let x = sample_data_with_root(&root, n, &SamplerSpec::gaussian(rng_seed)).unwrap();
                let s = sample_covariance(&x).unwrap();
                mean += linf_stat(&s, &sigma).unwrap();
            }
            linf_ratios.push(mean / reps as f64 / bound.value);
        }
    }
    let (lo, hi) = linf_ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
    let linf_ok = lo >= 0.05 && hi <= 3.0 && hi / lo <= 6.0;

    // l0 quadratic statistic with d = 2 R0 (R0 = 2)
    let mut l0_ratios: Vec<f64> = Vec::new();
    for p in [16usize, 32, 64] {
        let target = sparsepca::model::sparse_unit_vector(p, 0.0, 2.0, sparsepca::model::Pattern::FirstKEqual { k: None }).unwrap();
        let model = make_spiked(p, 2.0, 1.0, target.vector, Sigma0::Canonical).unwrap();
        let sigma = model.covariance();
        let root = model.covariance_root().unwrap();
        for n in [100usize, 1000, 10_000] {
            let bound = lemma_bound(StatKind::L0Quad, p, n, 4.0, 2.0, k).unwrap();
            assert!(bound.in_regime);
            let reps = 6;
            let mut mean = 0.0;
            for _ in 0..reps {
                rng_seed += 1;
                let x = sample_data_with_root(&root, n, &SamplerSpec::gaussian(rng_seed)).unwrap();
                let s = sample_covariance(&x).unwrap();
                let diff = SymMatrix::new(s.as_array() - sigma.as_array()).unwrap();
                mean += l0_quad_stat(&diff, 4).unwrap();
            }
            l0_ratios.push(mean / reps as f64 / bound.value);
        }
    }
    let (lo0, hi0) = l0_ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), &r| (l.min(r), h.max(r)));
    let l0_ok = lo0 >= 0.05 && hi0 <= 3.0 && hi0 / lo0 <= 6.0;

    report(
        "9 (deviation scaling)",
        linf_ok && l0_ok,
        &format!(
            "linf ratios in [{lo:.3}, {hi:.3}] (spread {:.2}); l0 ratios in [{lo0:.3}, {hi0:.3}] (spread {:.2})",
            hi / lo,
            hi0 / lo0
        ),
    );
}

/// 10. Fano pipeline: strictly positive at a certified in-regime point,
/// flagged zero when beta_N swamps log N, and never above eps/(2 sqrt(2)).
#[test]
fn criterion_10_fano_pipeline() {
    let cert = assemble_lower_bound(0.0, 33, 800, 5.0, 2.0, 1.0, 0.1, 4).unwrap();
    let positive = cert.bound > 0.0 && !cert.vacuous;
    let dominated = cert.bound <= cert.epsilon / (2.0 * std::f64::consts::SQRT_2) + 1e-15;

    let vac = assemble_lower_bound(0.0, 8, 4_000_000, 3.0, 2.0, 1.0, 0.95, 4).unwrap();
    let vac_ok = vac.vacuous && vac.bound == 0.0 && !vac.packing.vectors.is_empty();

    report(
        "10 (Fano pipeline)",
        positive && dominated && vac_ok,
        &format!(
            "in-regime bound {:.5} (eps {:.5}, card {}); vacuous case returns 0 with {} certificates",
            cert.bound,
            cert.epsilon,
            cert.packing.vectors.len(),
            vac.packing.vectors.len()
        ),
    );
}

/// 11. Byte-identical CSVs for runs 6-9 under 1-thread and 4-thread pools.
#[test]
fn criterion_11_determinism() {
    let dir = shared_dir();
    let mut all_ok = true;
    let mut notes = Vec::new();

    let configs: Vec<(&str, Box<dyn Fn(&std::path::Path, &str) -> ExperimentConfig>)> = vec![
        ("c6", Box::new(|d: &std::path::Path, t: &str| config_c6(d, t))),
        ("c7", Box::new(|d: &std::path::Path, t: &str| config_c7(d, t, 8))),
        ("c8_pca", Box::new(|d: &std::path::Path, t: &str| config_c8_pca(d, t))),
        ("c8_l0", Box::new(|d: &std::path::Path, t: &str| config_c8_l0(d, t))),
    ];
    for (name, mk) in configs {
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let multi = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let cfg1 = mk(&dir, &format!("{name}_det1"));
        let cfg4 = mk(&dir, &format!("{name}_det4"));
        single.install(|| run_experiment(&cfg1, &RunOptions { stable_time: true, no_output: false })).unwrap();
        multi.install(|| run_experiment(&cfg4, &RunOptions { stable_time: true, no_output: false })).unwrap();
        let b1 = std::fs::read(&cfg1.output_path).unwrap();
        let b4 = std::fs::read(&cfg4.output_path).unwrap();
        let same = b1 == b4;
        all_ok &= same;
        notes.push(format!("{name}: {}", if same { "identical" } else { "DIFFER" }));
    }

    // the deviation sweep of criterion 9, through the CLI CSV path
    let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let multi = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let f1 = dir.join("c9_det1.csv");
    let f4 = dir.join("c9_det4.csv");
    let verify_args = |out: &std::path::Path| -> Vec<String> {
        [
            "spca", "verify", "l0", "--p-grid", "16,32", "--n-grid", "100,1000", "--reps", "3",
            "--param", "2", "--seed", "909", "--out",
        ]
        .iter()
        .map(|s| s.to_string())
        .chain(std::iter::once(out.to_string_lossy().into_owned()))
        .collect()
    };
    let c1 = single.install(|| sparsepca::cli::cli_dispatch(&verify_args(&f1)));
    let c4 = multi.install(|| sparsepca::cli::cli_dispatch(&verify_args(&f4)));
    let same = c1 == 0 && c4 == 0 && std::fs::read(&f1).unwrap() == std::fs::read(&f4).unwrap();
    all_ok &= same;
    notes.push(format!("c9: {}", if same { "identical" } else { "DIFFER" }));

    report("11 (determinism)", all_ok, &notes.join(", "));
}
