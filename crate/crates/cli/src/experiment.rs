use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use ndarray::{concatenate, Axis};

use alp_core::alp::{alp_predict, alp_train, AlpConfig};
use alp_core::diffusion::DmConfig;
use alp_core::eval::{extension_agreement, regression_metrics};
use alp_core::io::coordinate_headers;
use alp_core::kernel::KernelMode;
use alp_core::synthetic::{gen_composite_sine, gen_swiss_roll, odd_even_split, random_split, SyntheticSpec};

use crate::{column, curve_table, format_train_report, save_table, OracleComparison};

pub const NAMES: [&str; 4] = ["sine-small-noise", "sine-large-noise", "loocv-oracle", "dm-cluster-agreement"];

#[derive(Args)]
pub struct ExperimentArgs {
    /// One of sine-small-noise, sine-large-noise, loocv-oracle, dm-cluster-agreement.
    name: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for summary.txt and the CSV outputs.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

struct Outcome {
    summary: String,
    tables: Vec<(&'static str, Vec<String>, ndarray::Array2<f64>)>,
}

pub fn run(args: ExperimentArgs) -> Result<()> {
    let outcome = match args.name.as_str() {
        "sine-small-noise" => sine(4000, 0.05, args.seed)?,
        "sine-large-noise" => sine(2000, 0.25, args.seed)?,
        "loocv-oracle" => oracle(args.seed)?,
        "dm-cluster-agreement" => cluster_agreement(args.seed)?,
        other => bail!("unknown experiment `{other}`; available: {}", NAMES.join(", ")),
    };
    print!("{}", outcome.summary);
    if let Some(dir) = &args.out_dir {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        let path = dir.join("summary.txt");
        fs::write(&path, &outcome.summary).with_context(|| format!("cannot write {}", path.display()))?;
        for (file, headers, values) in &outcome.tables {
            save_table(&dir.join(file), headers, values.view())?;
        }
    }
    Ok(())
}

fn sine(n: usize, noise: f64, seed: u64) -> Result<Outcome> {
    let (x, f) = gen_composite_sine(&SyntheticSpec::new(n, noise, seed))?;
    let split = odd_even_split(x.view(), f.view());
    let (model, report) = alp_train(split.train_x.view(), split.train_y.view(), &AlpConfig::default())?;
    let pred = alp_predict(&model, split.test_x.view())?;
    let m = regression_metrics(&split.test_y.column(0).to_vec(), &pred.column(0).to_vec())?;
    let target = ["y".to_string()];

    let mut summary = String::new();
    writeln!(summary, "composite sine, {n} points, noise {noise}, seed {seed}").unwrap();
    writeln!(summary, "train {} rows, test {} rows", split.train_x.nrows(), split.test_x.nrows()).unwrap();
    summary.push_str(&format_train_report(&report, model.sigma0(), &target));
    writeln!(summary, "test rmse {:.6}", m.rmse).unwrap();
    writeln!(summary, "test mae {:.6}", m.mae).unwrap();

    let (curve_headers, curve) = curve_table(&report, &target);
    let predictions = concatenate(Axis(1), &[split.test_x.view(), split.test_y.view(), pred.view()])?;
    let pred_headers = vec!["x".into(), "y".into(), "pred".into()];
    Ok(Outcome {
        summary,
        tables: vec![("curve.csv", curve_headers, curve), ("predictions.csv", pred_headers, predictions)],
    })
}

fn oracle(seed: u64) -> Result<Outcome> {
    let (x, f) = gen_composite_sine(&SyntheticSpec::new(100, 0.05, seed))?;
    let cmp = OracleComparison::run(x.view(), f.view(), None, 2.0, 20, KernelMode::ZeroDiagThenNormalize)?;
    let target = ["y".to_string()];
    let mut summary = String::new();
    writeln!(summary, "composite sine, 100 points, noise 0.05, seed {seed}").unwrap();
    summary.push_str(&cmp.summary(&target));
    let (headers, values) = cmp.table(&target);
    Ok(Outcome {
        summary,
        tables: vec![("curves.csv", headers, values)],
    })
}

fn cluster_agreement(seed: u64) -> Result<Outcome> {
    let (x, t) = gen_swiss_roll(600, 21.0, 0.1, seed)?;
    let (train, test) = random_split(600, 0.7, seed);
    let res = extension_agreement(x.view(), &train, &test, &DmConfig::default(), &AlpConfig::default(), 3, seed, 10)?;

    let mut summary = String::new();
    writeln!(summary, "swiss roll, 600 points, height 21, noise 0.1, seed {seed}").unwrap();
    writeln!(summary, "train {} rows, test {} rows", train.len(), test.len()).unwrap();
    writeln!(summary, "retained dimension: full sample {}, train rows {}", res.full_dim, res.train_dim).unwrap();
    writeln!(summary, "rows: full-sample clusters, columns: extended clusters").unwrap();
    summary.push_str(&res.confusion.to_table());
    writeln!(summary, "agreement {:.6}", res.confusion.accuracy()).unwrap();

    let t_test: Vec<f64> = test.iter().map(|&i| t[i]).collect();
    let labels = |l: &[usize]| column(&l.iter().map(|&v| v as f64).collect::<Vec<_>>());
    let mut headers = vec!["t".to_string(), "reference_cluster".into(), "extended_cluster".into()];
    headers.extend(coordinate_headers(res.extended.ncols()));
    let values = concatenate(
        Axis(1),
        &[
            column(&t_test).view(),
            labels(&res.reference_labels).view(),
            labels(&res.predicted_labels).view(),
            res.extended.view(),
        ],
    )?;
    Ok(Outcome {
        summary,
        tables: vec![("extension.csv", headers, values)],
    })
}
