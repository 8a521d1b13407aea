//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use alp_core::alp::{
    alp_predict, alp_train, default_sigma0, exact_loocv_curve, lp_train_error_curve, AlpConfig, AlpModel, Variant,
};
use alp_core::diffusion::{diffusion_kernels, dm_fit, extend_eigenvectors, DmConfig};
use alp_core::eval::{extension_agreement, regression_metrics, ConfusionMatrix};
use alp_core::kernel::KernelMode;
use alp_core::persist::{load_embedding, load_model, save_embedding, save_model};
use alp_core::synthetic::{gen_composite_sine, gen_swiss_roll, odd_even_split, random_split, SyntheticSpec};
use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn argmin(c: &[f64]) -> usize {
    c.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0)
}

fn median(mut v: Vec<usize>) -> f64 {
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2] as f64
    } else {
        (v[n / 2 - 1] + v[n / 2]) as f64 / 2.0
    }
}

fn loocv_agreement() -> Outcome {
    const LEVELS: usize = 20;
    let start = Instant::now();
    let mut agreeing = 0;
    let mut rows = Vec::new();
    for seed in 0..10 {
        let (x, f) = gen_composite_sine(&SyntheticSpec::new(100, 0.05, seed)).unwrap();
        let cfg = AlpConfig {
            max_iter: LEVELS,
            run_all_levels: true,
            ..AlpConfig::default()
        };
        let (_, report) = alp_train(x.view(), f.view(), &cfg).unwrap();
        let alp = &report.error_curves[0];
        let oracle = &exact_loocv_curve(x.view(), f.view(), None, 2.0, alp.len()).unwrap()[0];
        let (ka, ko) = (argmin(alp), argmin(oracle));
        let gap = (alp[ko] - oracle[ko]).abs() / oracle[ko];
        if ka == ko && gap < 0.10 {
            agreeing += 1;
        }
        rows.push(format!("{ka}/{ko}:{:.0}%", 100.0 * gap));
    }
    let elapsed = start.elapsed();
    outcome(
        agreeing >= 9 && elapsed < Duration::from_secs(60),
        format!(
            "{agreeing}/10 instances agree (alp/oracle argmin:gap {}) in {:.1}s",
            rows.join(" "),
            elapsed.as_secs_f64()
        ),
    )
}

fn small_noise_experiment() -> Outcome {
    let start = Instant::now();
    let (x, f) = gen_composite_sine(&SyntheticSpec::new(4000, 0.05, 0)).unwrap();
    let split = odd_even_split(x.view(), f.view());
    let (model, _) = alp_train(split.train_x.view(), split.train_y.view(), &AlpConfig::default()).unwrap();
    let pred = alp_predict(&model, split.test_x.view()).unwrap();
    let rmse = regression_metrics(&split.test_y.column(0).to_vec(), &pred.column(0).to_vec())
        .unwrap()
        .rmse;
    let stop = model.optimal_iter()[0];
    let elapsed = start.elapsed();
    outcome(
        (5..=9).contains(&stop) && rmse <= 0.05 && elapsed < Duration::from_secs(120),
        format!(
            "stopping level {stop}, sigma0 {:.4}, test rmse {rmse:.5} in {:.1}s",
            model.sigma0(),
            elapsed.as_secs_f64()
        ),
    )
}

fn noise_reduces_depth() -> Outcome {
    let mut small = Vec::new();
    let mut large = Vec::new();
    for seed in 0..20 {
        let (x, f) = gen_composite_sine(&SyntheticSpec::new(4000, 0.05, seed)).unwrap();
        let split = odd_even_split(x.view(), f.view());
        let sigma0 = default_sigma0(split.train_x.view()).unwrap();
        let cfg = AlpConfig {
            sigma0: Some(sigma0),
            ..AlpConfig::default()
        };
        small.push(alp_train(split.train_x.view(), split.train_y.view(), &cfg).unwrap().0.optimal_iter()[0]);

        let (x, f) = gen_composite_sine(&SyntheticSpec::new(2000, 0.25, seed)).unwrap();
        let split = odd_even_split(x.view(), f.view());
        large.push(alp_train(split.train_x.view(), split.train_y.view(), &cfg).unwrap().0.optimal_iter()[0]);
    }
    let (ms, ml) = (median(small.clone()), median(large.clone()));
    outcome(
        ml <= ms,
        format!("median stopping level {ml} at noise 0.25 vs {ms} at noise 0.05 ({large:?} vs {small:?})"),
    )
}

fn residual_decay() -> Outcome {
    let n = 500;
    let x = Array2::from_shape_fn((n, 1), |(i, _)| 2.0 * std::f64::consts::PI * i as f64 / (n - 1) as f64);
    let f = x.mapv(f64::sin);
    let curve = &lp_train_error_curve(x.view(), f.view(), None, 2.0, 20).unwrap()[0];
    let mut run = 1;
    let mut longest = 1;
    for w in curve.windows(2) {
        run = if w[1] < w[0] { run + 1 } else { 1 };
        longest = longest.max(run);
    }
    let decreasing_steps = longest - 1;
    outcome(
        decreasing_steps >= 10 && curve[14] < 1e-6,
        format!("{decreasing_steps} consecutive strict decreases, error {:.2e} at level 15", curve[14]),
    )
}

struct Instance {
    x: Array2<f64>,
    cfg: DmConfig,
}

fn random_instances() -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..20)
        .map(|_| {
            let n = rng.random_range(3..=50);
            let d = rng.random_range(1..=4);
            let x = Array2::from_shape_fn((n, d), |_| rng.random_range(-3.0..3.0));
            let cfg = DmConfig {
                sigma_percentile: rng.random_range(20.0..80.0),
                alpha: rng.random_range(0.0..=1.0),
                t: rng.random_range(1..=3),
                ..DmConfig::default()
            };
            Instance { x, cfg }
        })
        .collect()
}

/// Transition matrix and stationary weights assembled with plain loops.
fn markov_by_hand(x: &Array2<f64>, sigma: f64, alpha: f64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = x.nrows();
    let w: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    let d2: f64 = x.row(i).iter().zip(x.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                    (-d2 / (2.0 * sigma * sigma)).exp()
                })
                .collect()
        })
        .collect();
    let g: Vec<f64> = w.iter().map(|r| r.iter().sum()).collect();
    let wa: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| w[i][j] / (g[i] * g[j]).powf(alpha)).collect())
        .collect();
    let ga: Vec<f64> = wa.iter().map(|r| r.iter().sum()).collect();
    let total: f64 = ga.iter().sum();
    let p = (0..n).map(|i| (0..n).map(|j| wa[i][j] / ga[i]).collect()).collect();
    (p, ga.iter().map(|v| v / total).collect())
}

fn mat_mul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * b[k][j]).sum()).collect())
        .collect()
}

fn spectral_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for inst in random_instances() {
        let emb = dm_fit(inst.x.view(), &inst.cfg).unwrap();
        let coords = emb.full_coordinates();
        let (p, pi) = markov_by_hand(&inst.x, emb.sigma(), inst.cfg.alpha);
        let mut pt = p.clone();
        for _ in 1..inst.cfg.t {
            pt = mat_mul(&pt, &p);
        }
        let n = inst.x.nrows();
        for i in 0..n {
            for j in 0..n {
                let direct: f64 = (0..n).map(|m| (pt[i][m] - pt[j][m]).powi(2) / pi[m]).sum::<f64>().sqrt();
                let diff = &coords.row(i) - &coords.row(j);
                let euclid = diff.dot(&diff).sqrt();
                worst = worst.max((direct - euclid).abs());
            }
        }
    }
    outcome(worst < 1e-8, format!("max |diffusion distance - coordinate distance| = {worst:.2e} over 20 instances"))
}

fn dm_invariants() -> Outcome {
    let (mut lam, mut psi, mut rows): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut instances = random_instances();
    let (roll, _) = gen_swiss_roll(200, 21.0, 0.1, 3).unwrap();
    instances.push(Instance {
        x: roll,
        cfg: DmConfig::default(),
    });
    for inst in &instances {
        let emb = dm_fit(inst.x.view(), &inst.cfg).unwrap();
        lam = lam.max((emb.eigenvalues()[0] - 1.0).abs());
        let psi0 = emb.eigenvectors().column(0);
        let (lo, hi) = psi0.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
        psi = psi.max(hi - lo);
        let k = diffusion_kernels(inst.x.view(), &inst.cfg).unwrap();
        for r in k.markov.outer_iter() {
            rows = rows.max((r.sum() - 1.0).abs());
        }
    }
    outcome(
        lam < 1e-8 && psi < 1e-8 && rows < 1e-10,
        format!(
            "{} instances: |lambda_0 - 1| <= {lam:.1e}, psi_0 spread <= {psi:.1e}, row-sum error <= {rows:.1e}",
            instances.len()
        ),
    )
}

fn cluster_agreement_pipeline() -> Outcome {
    let start = Instant::now();
    let (x, _) = gen_swiss_roll(600, 21.0, 0.1, 0).unwrap();
    let (train, test) = random_split(600, 0.7, 0);
    let res = extension_agreement(x.view(), &train, &test, &DmConfig::default(), &AlpConfig::default(), 3, 0, 10)
        .unwrap();
    let acc = res.confusion.accuracy();
    let elapsed = start.elapsed();
    outcome(
        acc >= 0.90 && elapsed < Duration::from_secs(60),
        format!(
            "agreement {acc:.4} on {} test points (d = {} full, {} train) in {:.1}s",
            test.len(),
            res.full_dim,
            res.train_dim,
            elapsed.as_secs_f64()
        ),
    )
}

fn published_confusion_accuracy() -> Outcome {
    let cm = ConfusionMatrix::from_counts(array![[294, 4, 0], [9, 342, 2], [0, 12, 432]]).unwrap();
    let acc = cm.accuracy();
    outcome((acc - 0.9753).abs() <= 1e-4, format!("accuracy {acc:.6} from {} counts", cm.total()))
}

fn cost_scaling() -> Outcome {
    const LEVELS: usize = 12;
    let cfg = AlpConfig {
        max_iter: LEVELS,
        run_all_levels: true,
        ..AlpConfig::default()
    };
    let time = |n: usize| {
        let (x, f) = gen_composite_sine(&SyntheticSpec::new(n, 0.05, 1)).unwrap();
        let (_, report) = alp_train(x.view(), f.view(), &cfg).unwrap();
        assert_eq!(report.error_curves[0].len(), LEVELS, "fixed depth at n = {n}");
        (0..5)
            .map(|_| {
                let start = Instant::now();
                alp_train(x.view(), f.view(), &cfg).unwrap();
                start.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let (t1, t2) = (time(1000), time(2000));
    let ratio = t2 / t1;
    outcome(
        (3.0..=5.5).contains(&ratio),
        format!("ratio {ratio:.2} ({t2:.3}s at N=2000 / {t1:.3}s at N=1000, {LEVELS} levels)"),
    )
}

fn persistence() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut fixtures: Vec<(String, AlpModel, Array2<f64>)> = Vec::new();

    let (x, f) = gen_composite_sine(&SyntheticSpec::new(4000, 0.05, 0)).unwrap();
    let split = odd_even_split(x.view(), f.view());
    let (m, _) = alp_train(split.train_x.view(), split.train_y.view(), &AlpConfig::default()).unwrap();
    fixtures.push(("sine".into(), m, split.test_x.clone()));

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let xs = Array2::from_shape_fn((80, 3), |_| rng.random_range(-1.0..1.0));
    let fs = Array2::from_shape_fn((80, 2), |(i, j)| f64::sin(f64::powi(xs.row(i).sum(), j as i32 + 1)));
    let xq = Array2::from_shape_fn((17, 3), |_| rng.random_range(-1.2..1.2));
    for (name, variant, mode) in [
        ("multi-output", Variant::AutoAdaptive, KernelMode::ZeroDiagThenNormalize),
        ("literal", Variant::AutoAdaptive, KernelMode::NormalizeThenZeroDiag),
        ("standard", Variant::Standard, KernelMode::Full),
    ] {
        let cfg = AlpConfig {
            variant,
            kernel_mode: mode,
            ..AlpConfig::default()
        };
        let (m, _) = alp_train(xs.view(), fs.view(), &cfg).unwrap();
        fixtures.push((name.into(), m, xq.clone()));
    }

    let (roll, _) = gen_swiss_roll(200, 21.0, 0.1, 1).unwrap();
    let emb = dm_fit(roll.view(), &DmConfig::default()).unwrap();
    let comps: Vec<usize> = (1..=emb.dim()).collect();
    let (_, m) = extend_eigenvectors(&emb, roll.view(), &comps, &AlpConfig::default()).unwrap();
    fixtures.push(("eigenvectors".into(), m, roll.clone()));

    let mut mismatched = Vec::new();
    for (name, model, q) in &fixtures {
        let path = dir.path().join(format!("{name}.alpm"));
        save_model(model, &path).unwrap();
        let back = load_model(&path).unwrap();
        let a = alp_predict(model, q.view()).unwrap();
        let b = alp_predict(&back, q.view()).unwrap();
        if !a.iter().zip(b.iter()).all(|(u, v)| u.to_bits() == v.to_bits()) {
            mismatched.push(name.clone());
        }
    }
    let path = dir.path().join("roll.dmem");
    save_embedding(&emb, &path).unwrap();
    let emb_ok = load_embedding(&path).unwrap() == emb;
    outcome(
        mismatched.is_empty() && emb_ok,
        format!(
            "{} model fixtures bit-identical after reload (mismatched: {mismatched:?}), embedding round trip {}",
            fixtures.len() - mismatched.len(),
            if emb_ok { "exact" } else { "differs" }
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("pyramid error vs exact leave-one-out", loocv_agreement),
        ("composite sine, noise 0.05", small_noise_experiment),
        ("noisier data stops no later", noise_reduces_depth),
        ("residual decay on sin(x)", residual_decay),
        ("spectral distance identity", spectral_identity),
        ("diffusion map invariants", dm_invariants),
        ("extended-embedding cluster agreement", cluster_agreement_pipeline),
        ("confusion-count accuracy", published_confusion_accuracy),
        ("training cost scaling", cost_scaling),
        ("persistence round trip", persistence),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!("{} {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
