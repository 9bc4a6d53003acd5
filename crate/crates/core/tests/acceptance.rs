//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any fails.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ddspce_core::apc::{build_univariate_basis, BasisError, RawMoments, UnivariateBasis};
use ddspce_core::assess::{compute_trm_atc, deltas, mcs_evaluate, summarize};
use ddspce_core::grid::{load_network, mismatch, solve_power_flow, Network, PfOptions};
use ddspce_core::ingest::{apply_pca, load_samples, ColumnAffine, SampleMatrix};
use ddspce_core::pce::{
    eval_multivariate, fit_round, fit_sparse_pce, generate_index_set, model_moments, FitConfig, FitError, MultiIndex,
    PceModel, PoolSource,
};
use ddspce_core::pipeline::{build_study, cmd_evaluate, cmd_fit, cmd_mcs, Overrides, RunConfig};
use ddspce_core::synth::Marginal;
use ddspce_core::ttc::{
    build_direction, ttc_overall, ContingencyCase, LimitOverrides, Participant, Transaction, TransferDirection,
    TransferStudy, TtcOptions,
};
use ddspce_core::Parallelism;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Beta, Distribution, Exp, Gamma, LogNormal, Normal, Uniform};

const DATA: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/data");

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)*) => {
        if !$cond {
            return Err(format!($($fmt)*));
        }
    };
}

fn study_config(out: &Path) -> RunConfig {
    let ov = Overrides { output_dir: Some(out.to_path_buf()), ..Overrides::default() };
    RunConfig::load(format!("{DATA}/study/run.json"), &ov).expect("bundled study config loads")
}

fn direction(net: &Network, sources: &[(u32, f64)], sinks: &[(u32, f64)]) -> TransferDirection {
    let p = |v: &[(u32, f64)]| v.iter().map(|&(bus, share)| Participant { bus, share }).collect();
    build_direction(&Transaction { sources: p(sources), sinks: p(sinks), sink_power_factor: 1.0 }, net).unwrap()
}

// 1. Empirical Gram matrices of data-driven bases are the identity.
fn orthonormality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut columns = 0;
    for set in 0..50 {
        let m = rng.random_range(300..2000);
        let draws: Vec<Vec<f64>> = vec![
            Normal::new(rng.random_range(-5.0..5.0), rng.random_range(0.1..3.0)).unwrap().sample_iter(&mut rng).take(m).collect(),
            Uniform::new(-2.0, rng.random_range(0.0..10.0)).unwrap().sample_iter(&mut rng).take(m).collect(),
            Exp::new(rng.random_range(0.2..3.0)).unwrap().sample_iter(&mut rng).take(m).collect(),
            LogNormal::new(0.0, rng.random_range(0.1..0.5)).unwrap().sample_iter(&mut rng).take(m).collect(),
            Beta::new(rng.random_range(0.5..5.0), rng.random_range(0.5..5.0)).unwrap().sample_iter(&mut rng).take(m).collect(),
            Gamma::new(rng.random_range(1.0..6.0), 2.0).unwrap().sample_iter(&mut rng).take(m).collect(),
            {
                let b = Bernoulli::new(rng.random_range(0.05..0.95)).unwrap();
                (0..m).map(|_| f64::from(u8::from(b.sample(&mut rng)))).collect()
            },
            (0..m).map(|_| [0.0, 1.0, 3.5][rng.random_range(0..3)]).collect(),
        ];
        for column in draws {
            let support = ddspce_core::apc::support_count(&column);
            let degree = 4.min(support - 1);
            let basis = build_univariate_basis(&column, degree).map_err(|e| format!("set {set}: {e}"))?;
            let g = basis.empirical_gram(&column);
            let dev = (g - DMatrix::identity(degree + 1, degree + 1)).abs().max();
            worst = worst.max(dev);
            columns += 1;
        }
    }
    check(worst < 1e-6, format!("{columns} columns over 50 sets, max|G - I| = {worst:.2e}"))
}

/// Coefficient vectors (ascending powers) of orthonormal polynomials from a
/// three-term recurrence `p_{n+1} = (x p_n - b_n p_{n-1}) / a_n`.
fn recurrence(degree: usize, a: impl Fn(usize) -> f64, b: impl Fn(usize) -> f64) -> Vec<Vec<f64>> {
    let mut out = vec![vec![1.0]];
    for n in 0..degree {
        let mut next = vec![0.0; n + 2];
        for (k, c) in out[n].iter().enumerate() {
            next[k + 1] += c;
        }
        if n > 0 {
            for (k, c) in out[n - 1].iter().enumerate() {
                next[k] -= b(n) * c;
            }
        }
        next.iter_mut().for_each(|c| *c /= a(n));
        out.push(next);
    }
    out
}

fn normalized_coeffs(basis: &UnivariateBasis) -> Vec<Vec<f64>> {
    basis.monic_coeffs.iter().zip(&basis.norms).map(|(p, n)| p.iter().map(|c| c / n).collect()).collect()
}

fn max_coeff_gap(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter().zip(b).flat_map(|(x, y)| x.iter().zip(y).map(|(u, v)| (u - v).abs())).fold(0.0, f64::max)
}

// 2. Exact moments reproduce Hermite and Legendre; Bernoulli gives 2x - 1.
fn analytic_recovery() -> Outcome {
    let h = 6;
    let normal: Vec<f64> = (0..=2 * h).map(|k| if k % 2 == 1 { 0.0 } else { (1..k).step_by(2).map(|j| j as f64).product() }).collect();
    let uniform: Vec<f64> = (0..=2 * h).map(|k| if k % 2 == 1 { 0.0 } else { 1.0 / (k as f64 + 1.0) }).collect();
    let hermite = UnivariateBasis::from_moments(&RawMoments::analytic(normal), h, ColumnAffine::IDENTITY).map_err(|e| e.to_string())?;
    let legendre = UnivariateBasis::from_moments(&RawMoments::analytic(uniform), h, ColumnAffine::IDENTITY).map_err(|e| e.to_string())?;
    // Orthonormal Hermite: x p_n = sqrt(n+1) p_{n+1} + sqrt(n) p_{n-1}.
    let he = recurrence(h, |n| ((n + 1) as f64).sqrt(), |n| (n as f64).sqrt());
    // Orthonormal Legendre under the uniform law: a_n = (n+1)/sqrt((2n+1)(2n+3)).
    let a_leg = |n: usize| (n + 1) as f64 / (((2 * n + 1) * (2 * n + 3)) as f64).sqrt();
    let le = recurrence(h, a_leg, |n| a_leg(n - 1));
    let gap_h = max_coeff_gap(&normalized_coeffs(&hermite), &he);
    let gap_l = max_coeff_gap(&normalized_coeffs(&legendre), &le);
    ensure!(gap_h < 1e-10 && gap_l < 1e-10, "Hermite gap {gap_h:.2e}, Legendre gap {gap_l:.2e}");

    let column: Vec<f64> = (0..1000).map(|i| (i % 2) as f64).collect();
    let b = build_univariate_basis(&column, 1).map_err(|e| e.to_string())?;
    let mut gap_b = 0.0f64;
    for x in [0.0, 1.0, 0.5, -2.0, 3.0] {
        gap_b = gap_b.max((b.eval(1, x).unwrap() - (2.0 * x - 1.0)).abs());
    }
    ensure!(gap_b < 1e-12, "Bernoulli psi_1 deviates from 2x - 1 by {gap_b:.2e}");
    let err = build_univariate_basis(&column, 2);
    ensure!(
        matches!(err, Err(BasisError::InsufficientSupport { support: 2, degree: 2 })),
        "degree 2 on two support points gave {err:?}"
    );
    check(true, format!("Hermite {gap_h:.1e}, Legendre {gap_l:.1e}, Bernoulli {gap_b:.1e} (H = {h}); H = 2 on two points rejected"))
}

fn uniform_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> SampleMatrix {
    let values = (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect();
    SampleMatrix::new((1..=cols).map(|i| format!("x{i}")).collect(), rows, values).unwrap()
}

/// Brute-force corrected leave-one-out error of an OLS fit on `psi`.
fn brute_force_cloo(psi: &DMatrix<f64>, y: &[f64]) -> f64 {
    let (m, p) = psi.shape();
    let mut press = 0.0;
    for i in 0..m {
        let keep: Vec<usize> = (0..m).filter(|&k| k != i).collect();
        let a = psi.select_rows(&keep);
        let b = DVector::from_iterator(m - 1, keep.iter().map(|&k| y[k]));
        let c = a.clone().svd(true, true).solve(&b, 1e-14).unwrap();
        let pred = (psi.row(i) * &c)[0];
        press += (y[i] - pred).powi(2);
    }
    let mean = y.iter().sum::<f64>() / m as f64;
    let var: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let gram = psi.transpose() * psi;
    let trace = gram.try_inverse().unwrap().trace();
    press / var * (m as f64 / (m - p) as f64) * (1.0 + trace)
}

fn design(model: &PceModel, rows: &SampleMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(rows.nrows(), model.active_indices.len(), |i, j| {
        eval_multivariate(&model.bases, &model.active_indices[j], rows.row(i)).unwrap()
    })
}

// 3. Sparse truth in ten inputs: exact term recovery and the LOO shortcut.
fn sparse_regression(models: &mut Vec<(String, PceModel, SampleMatrix)>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let n = 10;
    let train = uniform_matrix(200, n, &mut rng);
    let test = uniform_matrix(2000, n, &mut rng);
    let bases: Vec<UnivariateBasis> = (0..n).map(|j| build_univariate_basis(&train.column(j), 2).unwrap()).collect();
    let idx = |pairs: &[(usize, u32)]| {
        let mut a = vec![0u32; n];
        pairs.iter().for_each(|&(i, d)| a[i] = d);
        MultiIndex(a)
    };
    let truth = [
        (idx(&[]), 3.0),
        (idx(&[(0, 1)]), 2.0),
        (idx(&[(3, 1)]), -1.5),
        (idx(&[(2, 2)]), 0.8),
        (idx(&[(1, 1), (4, 1)]), 1.2),
        (idx(&[(7, 2)]), -0.6),
        (idx(&[(5, 1), (9, 1)]), 0.4),
    ];
    let f = |row: &[f64]| truth.iter().map(|(a, c)| c * eval_multivariate(&bases, a, row).unwrap()).sum::<f64>();
    let cfg = FitConfig { q_norm: 1.0, e_stop: 1e-10, initial_mp: Some(200), decorrelate: false, ..FitConfig::default() };
    let mut empty = PoolSource::new(train.clone(), 0);
    let out = fit_sparse_pce(&f, train.clone(), None, &mut empty, &cfg, Parallelism::Auto).map_err(|e| e.to_string())?;
    let scale = out.model.coefficients.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let found: BTreeSet<Vec<u32>> = out
        .model
        .active_indices
        .iter()
        .zip(&out.model.coefficients)
        .filter(|(_, c)| c.abs() > 1e-8 * scale)
        .map(|(a, _)| a.0.clone())
        .collect();
    let expected: BTreeSet<Vec<u32>> = truth.iter().map(|(a, _)| a.0.clone()).collect();
    ensure!(found == expected, "recovered {} terms {:?}, expected {:?}", found.len(), found, expected);

    let y_test: Vec<f64> = (0..test.nrows()).map(|i| f(test.row(i))).collect();
    let pred: Vec<f64> = (0..test.nrows()).map(|i| out.model.evaluate_row(test.row(i)).unwrap()).collect();
    let num: f64 = y_test.iter().zip(&pred).map(|(a, b)| (a - b).powi(2)).sum();
    let den: f64 = y_test.iter().map(|a| a * a).sum();
    let rel_rmse = (num / den).sqrt();
    ensure!(rel_rmse < 1e-7, "held-out relative RMSE {rel_rmse:.2e}");

    let sub = train.slice_rows(0, 30).unwrap();
    let noise = Normal::new(0.0, 0.3).unwrap();
    let y_sub: Vec<f64> = (0..30).map(|i| f(sub.row(i)) + noise.sample(&mut rng)).collect();
    let small = fit_round(&sub, &y_sub, &cfg, Parallelism::Sequential).map_err(|e| e.to_string())?;
    let brute = brute_force_cloo(&design(&small, &sub), &y_sub);
    let gap = (brute - small.e_cloo).abs();
    ensure!(gap < 1e-9, "e_cloo {} vs brute force {brute} (gap {gap:.2e})", small.e_cloo);

    let detail = format!(
        "{} terms recovered of {} candidates, held-out rel. RMSE {rel_rmse:.1e}, e_cloo {:.6} vs brute force {brute:.6} (gap {gap:.1e})",
        found.len(),
        generate_index_set(n, 2, 1.0).len(),
        small.e_cloo
    );
    models.push(("sparse oracle".into(), out.model, out.samples));
    models.push(("30-sample subcase".into(), small, sub));
    check(true, detail)
}

// 4. Closed-form mean and variance against Monte Carlo on the surrogate.
fn moment_identities(models: &[(String, PceModel, SampleMatrix)]) -> Outcome {
    let draws = 1_000_000;
    let mut lines = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for (name, model, training) in models {
        // The bases are orthonormal under the product of the empirical
        // marginals of the latent training coordinates, so sample from that.
        let latent = apply_pca(&model.pca, training).map_err(|e| e.to_string())?;
        let cols: Vec<Vec<f64>> = (0..latent.ncols()).map(|j| latent.column(j)).collect();
        let m = latent.nrows();
        let mut z = vec![0.0; cols.len()];
        let mut values = Vec::with_capacity(draws);
        for _ in 0..draws {
            for (zj, c) in z.iter_mut().zip(&cols) {
                *zj = c[rng.random_range(0..m)];
            }
            values.push(model.evaluate_latent(&z));
        }
        let n = draws as f64;
        let mc_mean = values.iter().sum::<f64>() / n;
        let mc_var = values.iter().map(|v| (v - mc_mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m4 = values.iter().map(|v| (v - mc_mean).powi(4)).sum::<f64>() / n;
        let (mean, var) = model_moments(model);
        let se_mean = (mc_var / n).sqrt();
        let se_var = ((m4 - mc_var * mc_var).max(0.0) / n).sqrt();
        let z_mean = (mc_mean - mean).abs() / se_mean.max(f64::MIN_POSITIVE);
        let z_var = (mc_var - var).abs() / se_var.max(f64::MIN_POSITIVE);
        ensure!(z_mean < 4.0 && z_var < 4.0, "{name}: mean off by {z_mean:.2} SE, variance off by {z_var:.2} SE");
        lines.push(format!("{name} {z_mean:.2}/{z_var:.2} SE"));
    }
    check(true, format!("{} models, 1e6 draws each: {}", models.len(), lines.join(", ")))
}

// 5. Power flow against a published solution and a closed form.
fn power_flow_oracle() -> Outcome {
    let net = load_network(format!("{DATA}/case9.json")).map_err(|e| e.to_string())?;
    let sol = solve_power_flow(&net, &PfOptions::default()).map_err(|e| e.to_string())?;
    let reference: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(format!("{DATA}/case9_solution.json")).unwrap()).unwrap();
    let vm_ref: Vec<f64> = serde_json::from_value(reference["vm"].clone()).unwrap();
    let va_ref: Vec<f64> = serde_json::from_value(reference["va_deg"].clone()).unwrap();
    let dv = sol.vm.iter().zip(&vm_ref).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let da = sol.va.iter().zip(&va_ref).map(|(a, b)| (a.to_degrees() - b).abs()).fold(0.0, f64::max);
    let mis = mismatch(&net, &sol);
    ensure!(dv < 1e-4 && mis < 1e-8, "case9: max |dV| {dv:.2e} pu, mismatch {mis:.2e} pu");

    // Lossless line, unity-factor load P: V = cos(theta), sin(2 theta) = -2 P x.
    let (p_mw, x) = (150.0f64, 0.2f64);
    let two_bus: Network = serde_json::from_value(serde_json::json!({
        "name": "two-bus", "base_mva": 100.0,
        "buses": [{"id": 1, "kind": "slack"}, {"id": 2, "kind": "pq", "pd": p_mw}],
        "generators": [{"bus": 1}],
        "branches": [{"from": 1, "to": 2, "r": 0.0, "x": x}]
    }))
    .map_err(|e| e.to_string())?;
    two_bus.validate().map_err(|e| e.to_string())?;
    let s2 = solve_power_flow(&two_bus, &PfOptions::default()).map_err(|e| e.to_string())?;
    let theta = -0.5 * (2.0 * p_mw / 100.0 * x).asin();
    let gap = (s2.vm[1] - theta.cos()).abs().max((s2.va[1] - theta).abs());
    ensure!(gap < 1e-8, "two-bus deviation {gap:.2e}");
    check(true, format!("case9 max|dV| {dv:.1e} pu (angles {da:.1e} deg), mismatch {mis:.1e} pu; two-bus {gap:.1e}"))
}

// 6. Bisection certificate and the min-over-cases invariants.
fn ttc_certificate() -> Outcome {
    let opts = TtcOptions::default();
    let ov = LimitOverrides::default();
    let case9 = load_network(format!("{DATA}/case9.json")).map_err(|e| e.to_string())?;
    let renew = load_network(format!("{DATA}/case9_renewables.json")).map_err(|e| e.to_string())?;
    let rows = load_samples(format!("{DATA}/study/train.csv")).map_err(|e| e.to_string())?;
    let mut instances: Vec<(String, Network, TransferDirection)> = vec![
        ("case9 3->5".into(), case9.clone(), direction(&case9, &[(3, 1.0)], &[(5, 1.0)])),
        ("case9 2,3->5,9".into(), case9.clone(), direction(&case9, &[(2, 0.5), (3, 0.5)], &[(5, 0.5), (9, 0.5)])),
        ("case9 1->7".into(), case9.clone(), direction(&case9, &[(1, 1.0)], &[(7, 1.0)])),
    ];
    for i in 0..6 {
        let inst = ddspce_core::grid::apply_sample(&renew, &renew.inputs, rows.row(i)).unwrap();
        let dir = direction(&inst, &[(2, 0.5), (3, 0.5)], &[(5, 0.5), (9, 0.5)]);
        instances.push((format!("renewables row {i}"), inst, dir));
    }
    let mut certified = 0;
    for (name, net, dir) in &instances {
        let study = TransferStudy::new(net, dir, &ov, false, &opts).map_err(|e| e.to_string())?.ok_or(format!("{name} islanded"))?;
        let r = study.max_transfer(&opts).map_err(|e| e.to_string())?;
        if !r.base_feasible {
            continue;
        }
        ensure!(study.check(r.lambda, None).is_ok(), "{name}: returned lambda {} is infeasible", r.lambda);
        let above = study.check(r.lambda + opts.lambda_tol, None);
        ensure!(above.is_err(), "{name}: lambda + tol = {} still feasible", r.lambda + opts.lambda_tol);
        certified += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let branches = case9.branches.len();
    let dir = direction(&case9, &[(2, 0.5), (3, 0.5)], &[(5, 0.5), (9, 0.5)]);
    let trials = 12;
    for t in 0..trials {
        let mut list: Vec<ContingencyCase> = (0..rng.random_range(1..4))
            .map(|k| ContingencyCase { label: format!("c{k}"), outages: vec![rng.random_range(0..branches)] })
            .collect();
        let small = ttc_overall(&case9, &dir, &ov, &list, &opts, Parallelism::Auto).map_err(|e| e.to_string())?;
        let min = small.cases.iter().filter(|c| !c.skipped).map(|c| c.lambda).fold(f64::INFINITY, f64::min);
        ensure!(small.lambda_ttc == min, "trial {t}: lambda_ttc {} is not the case minimum {min}", small.lambda_ttc);
        ensure!(small.lambda_ttc <= small.cases[0].lambda, "trial {t}: exceeds the base case");
        let a = rng.random_range(0..branches);
        let b = rng.random_range(0..branches);
        list.push(ContingencyCase { label: "extra".into(), outages: vec![a, b] });
        let big = ttc_overall(&case9, &dir, &ov, &list, &opts, Parallelism::Auto).map_err(|e| e.to_string())?;
        ensure!(big.lambda_ttc <= small.lambda_ttc, "trial {t}: superset raised TTC {} -> {}", small.lambda_ttc, big.lambda_ttc);
    }
    check(certified >= 6, format!("{certified}/{} instances certified at tol {}, {trials} random contingency lists", instances.len(), opts.lambda_tol))
}

struct Experiment {
    mcs_summary: ddspce_core::assess::DistributionSummary,
}

// 7. Scaled end-to-end comparison on the bundled renewables case.
fn end_to_end(dir: &Path, models: &mut Vec<(String, PceModel, SampleMatrix)>, exp: &mut Option<Experiment>) -> Outcome {
    let cfg = study_config(dir);
    let fit = match cmd_fit(&cfg, Parallelism::Auto) {
        Ok(r) => format!("converged, e_cloo {:.3e}", r.log.e_cloo),
        Err(ddspce_core::Error::Fit(FitError::BudgetExhausted { e_cloo, .. })) => format!("budget exhausted, best e_cloo {e_cloo:.3e}"),
        Err(e) => return Err(e.to_string()),
    };
    let log: ddspce_core::pipeline::FitLog =
        serde_json::from_str(&std::fs::read_to_string(dir.join("fit_log.json")).unwrap()).unwrap();
    let mcs = cmd_mcs(&cfg, Parallelism::Auto, None).map_err(|e| e.to_string())?;
    let sur = cmd_evaluate(&cfg, &dir.join("model.json"), Parallelism::Auto).map_err(|e| e.to_string())?;
    let d = deltas(&mcs.summary, &sur.summary);
    let n = log.input_count;
    let calls = log.evaluator_calls;
    let model = ddspce_core::pipeline::load_model(&dir.join("model.json")).unwrap();
    let training = load_samples(dir.join("fit_training.csv")).unwrap();
    let inputs = training.select_columns(&(0..n).collect::<Vec<_>>()).unwrap();
    models.push(("case9 renewables".into(), model, inputs));
    *exp = Some(Experiment { mcs_summary: mcs.summary.clone() });
    check(
        d.mean_pct.abs() < 2.0 && d.std_pct.abs() < 8.0 && calls <= 5 * n * 4 && mcs.summary.count >= 10 * calls,
        format!(
            "N = {n}, {} MCS runs vs {calls} evaluator calls ({fit}); mean {:.3} vs {:.3} MW ({:+.2}%), std {:.3} vs {:.3} MW ({:+.2}%)",
            mcs.summary.count, mcs.summary.mean, sur.summary.mean, d.mean_pct, mcs.summary.std, sur.summary.std, d.std_pct
        ),
    )
}

// 8. More frequent outages lower the mean TTC and the 95% ATC.
fn outage_direction(dir: &Path) -> Outcome {
    let cfg = study_config(dir);
    let study = build_study(&cfg).map_err(|e| e.to_string())?;
    let mut spec = cfg.synth.clone().ok_or("study has no synth section")?;
    let status = spec.columns.iter().position(|c| c.name == "status_6_7").ok_or("no status column")?;
    let mut stats = Vec::new();
    for q in [0.0, 0.2] {
        spec.columns[status].marginal = Marginal::Bernoulli { p: 1.0 - q };
        let samples = spec.generate(5000, 2).map_err(|e| e.to_string())?;
        let values = mcs_evaluate(&study.evaluator, &samples, Parallelism::Auto, None).map_err(|e| e.to_string())?;
        let s = summarize(&values, 40).unwrap();
        let atc = compute_trm_atc(&s, 95.0, cfg.etc, cfg.cbm).unwrap().atc;
        stats.push((q, s.mean, atc));
    }
    let (lo, hi) = (stats[0], stats[1]);
    check(
        hi.1 < lo.1 && hi.2 < lo.2,
        format!(
            "q = 0: mean {:.3}, ATC95 {:.3}; q = 0.2: mean {:.3} ({:+.2}%), ATC95 {:.3} MW",
            lo.1,
            lo.2,
            hi.1,
            100.0 * (hi.1 - lo.1) / lo.1,
            hi.2
        ),
    )
}

// 9. Margin arithmetic.
fn margin_arithmetic(exp: Option<&Experiment>) -> Outcome {
    let grid: Vec<f64> = (0..=10_000).map(|i| i as f64 / 100.0).collect();
    let uniform = summarize(&grid, 20).unwrap();
    let r = compute_trm_atc(&uniform, 95.0, 0.0, 0.0).unwrap();
    let gap = (r.trm - 45.0).abs().max((r.atc - 5.0).abs());
    ensure!(gap < 1e-12, "uniform oracle off by {gap:.2e}");

    let mut summaries = vec![uniform];
    if let Some(e) = exp {
        summaries.push(e.mcs_summary.clone());
    }
    let mut checked = 0;
    for s in &summaries {
        let mut prev: Option<(f64, f64)> = None;
        for p in [80.0, 90.0, 95.0, 98.0, 99.0] {
            for (etc, cbm) in [(0.0, 0.0), (12.5, 3.25)] {
                let r = compute_trm_atc(s, p, etc, cbm).unwrap();
                ensure!(r.atc == r.expected_ttc - r.trm - r.etc - r.cbm, "identity broken at {p}%");
                checked += 1;
            }
            let r = compute_trm_atc(s, p, 0.0, 0.0).unwrap();
            if let Some((trm, atc)) = prev {
                ensure!(r.trm >= trm && r.atc <= atc, "TRM not monotone at {p}%");
            }
            prev = Some((r.trm, r.atc));
        }
    }
    check(true, format!("uniform TRM/ATC off by {gap:.1e}; {checked} identities exact; TRM monotone over 80..99% on {} distributions", summaries.len()))
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

// 10. Repeated runs with a fixed seed are byte-identical.
fn determinism(root: &Path) -> Outcome {
    let mut snapshots = Vec::new();
    for (k, par) in [Parallelism::Auto, Parallelism::Auto, Parallelism::Sequential].into_iter().enumerate() {
        let out = root.join(format!("run{k}"));
        let mut cfg = study_config(&out);
        cfg.mcs_samples = Some(PathBuf::from(format!("{DATA}/study/train.csv")));
        match cmd_fit(&cfg, par) {
            Ok(_) | Err(ddspce_core::Error::Fit(FitError::BudgetExhausted { .. })) => {}
            Err(e) => return Err(e.to_string()),
        }
        cmd_mcs(&cfg, par, None).map_err(|e| e.to_string())?;
        snapshots.push(dir_bytes(&out));
    }
    let names: Vec<&str> = snapshots[0].iter().map(|(n, _)| n.as_str()).collect();
    ensure!(snapshots[0] == snapshots[1], "two parallel runs differ");
    ensure!(snapshots[0] == snapshots[2], "parallel and sequential runs differ");
    check(true, format!("fit + mcs run 3 times (parallel, parallel, sequential): {} artifacts identical ({})", names.len(), names.join(", ")))
}

fn main() {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let mut models = Vec::new();
    let mut exp = None;
    let mut failures = 0;
    let mut run = |id: u32, name: &str, budget: Duration, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let result = f();
        let elapsed = start.elapsed();
        let (ok, detail) = match result {
            Ok(d) if elapsed <= budget => (true, d),
            Ok(d) => (false, format!("{d}; exceeded the {budget:?} budget")),
            Err(d) => (false, d),
        };
        if !ok {
            failures += 1;
        }
        println!("{} criterion {id:>2} ({name}, {:.2?}): {detail}", if ok { "PASS" } else { "FAIL" }, elapsed);
    };
    run(1, "basis orthonormality", Duration::from_secs(10), &mut orthonormality);
    run(2, "analytic recovery", Duration::from_secs(1), &mut analytic_recovery);
    run(3, "sparse regression oracle", Duration::from_secs(30), &mut || sparse_regression(&mut models));
    run(7, "end-to-end experiment", Duration::from_secs(600), &mut || end_to_end(&tmp.path().join("e2e"), &mut models, &mut exp));
    run(4, "moment identities", Duration::from_secs(30), &mut || moment_identities(&models));
    run(5, "power-flow oracle", Duration::from_secs(1), &mut power_flow_oracle);
    run(6, "TTC certificate", Duration::from_secs(60), &mut ttc_certificate);
    run(8, "outage effect direction", Duration::from_secs(600), &mut || outage_direction(&tmp.path().join("q")));
    run(9, "TRM/ATC arithmetic", Duration::from_secs(1), &mut || margin_arithmetic(exp.as_ref()));
    run(10, "determinism", Duration::from_secs(600), &mut || determinism(&tmp.path().join("det")));
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
