//! `alp` command-line tool: synthetic data, pyramid training and prediction,
//! the leave-one-out oracle, diffusion maps and their extension, k-means and
//! the packaged experiments. All input and output tables are CSV with a
//! header row.

mod experiment;

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::{concatenate, Array2, ArrayView2, Axis};

use alp_core::alp::{alp_predict, alp_train, exact_loocv_curve, AlpConfig, TrainReport, Variant};
use alp_core::diffusion::{dm_extend, dm_fit, DiffusionEmbedding, DmConfig};
use alp_core::eval::{cluster_agreement, kmeans_restarts, regression_metrics};
use alp_core::io::{coordinate_headers, read_table, write_table, Table};
use alp_core::kernel::KernelMode;
use alp_core::persist::{load_embedding, load_model, save_embedding, save_model};
use alp_core::synthetic::{gen_composite_sine, gen_swiss_roll, SyntheticSpec};

#[derive(Parser)]
#[command(name = "alp", version, about = "Auto-adaptive Laplacian pyramids and diffusion maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic data set.
    Synth(SynthArgs),
    /// Train a pyramid and save it.
    Train(TrainArgs),
    /// Evaluate a saved pyramid on new rows.
    Predict(PredictArgs),
    /// Compare the pyramid error curve with exact leave-one-out retraining.
    LoocvOracle(OracleArgs),
    /// Fit a diffusion map.
    Dm(DmArgs),
    /// Extend diffusion coordinates to new rows.
    DmExtend(DmExtendArgs),
    /// Cluster rows with k-means.
    Kmeans(KmeansArgs),
    /// Run a packaged experiment.
    Experiment(experiment::ExperimentArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    Sine,
    SwissRoll,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum, default_value = "sine")]
    kind: SynthKind,
    #[arg(long, default_value_t = 4000)]
    n: usize,
    /// Uniform noise half-width for `sine`, Gaussian jitter for `swiss-roll`.
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 21.0)]
    height: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args, Clone)]
pub(crate) struct PyramidArgs {
    /// Initial bandwidth; defaults to twice the median pairwise distance.
    #[arg(long)]
    sigma0: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    mu: f64,
    #[arg(long, default_value_t = 50)]
    max_iter: usize,
    #[arg(long, default_value = "auto-adaptive")]
    variant: Variant,
    #[arg(long, default_value = "zero-diag-then-normalize")]
    kernel_mode: KernelMode,
}

impl PyramidArgs {
    fn config(&self) -> Result<AlpConfig> {
        let cfg = AlpConfig {
            sigma0: self.sigma0,
            mu: self.mu,
            max_iter: self.max_iter,
            variant: self.variant,
            kernel_mode: self.kernel_mode,
            run_all_levels: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Clone)]
pub(crate) struct DiffusionArgs {
    /// Kernel bandwidth; defaults to a percentile of pairwise distances.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 50.0)]
    sigma_percentile: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    t: u32,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
}

impl DiffusionArgs {
    fn config(&self) -> Result<DmConfig> {
        let cfg = DmConfig {
            sigma: self.sigma,
            sigma_percentile: self.sigma_percentile,
            alpha: self.alpha,
            t: self.t,
            delta: self.delta,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Clone)]
struct FeatureArgs {
    /// Input columns; defaults to every column not named elsewhere.
    #[arg(long, value_delimiter = ',')]
    features: Vec<String>,
    /// Columns never used as inputs.
    #[arg(long, value_delimiter = ',')]
    exclude: Vec<String>,
}

impl FeatureArgs {
    fn select(&self, table: &Table, also_excluded: &[String]) -> Result<(Vec<String>, Array2<f64>)> {
        if !self.features.is_empty() {
            return Ok((self.features.clone(), table.select(&self.features)?));
        }
        let mut skip = self.exclude.clone();
        skip.extend_from_slice(also_excluded);
        for name in &skip {
            table.column_index(name)?;
        }
        let (names, values) = table.remaining(&skip);
        if names.is_empty() {
            bail!("no feature columns left after excluding {}", skip.join(", "));
        }
        Ok((names, values))
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, short)]
    input: PathBuf,
    /// Target columns.
    #[arg(long, value_delimiter = ',', required = true)]
    target: Vec<String>,
    #[command(flatten)]
    columns: FeatureArgs,
    #[command(flatten)]
    pyramid: PyramidArgs,
    /// Where to save the trained model.
    #[arg(long, short)]
    model: PathBuf,
    /// Optional CSV of the error curves.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long, short)]
    model: PathBuf,
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, short)]
    output: PathBuf,
    #[command(flatten)]
    columns: FeatureArgs,
    /// Columns holding true values; prints error metrics against them.
    #[arg(long, value_delimiter = ',')]
    target: Vec<String>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    target: Vec<String>,
    #[command(flatten)]
    columns: FeatureArgs,
    #[arg(long)]
    sigma0: Option<f64>,
    #[arg(long, default_value_t = 2.0)]
    mu: f64,
    #[arg(long, default_value_t = 20)]
    levels: usize,
    #[arg(long, default_value = "zero-diag-then-normalize")]
    kernel_mode: KernelMode,
    /// Optional CSV of both curves.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct DmArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    columns: FeatureArgs,
    #[command(flatten)]
    diffusion: DiffusionArgs,
    /// Diffusion coordinates of the input rows.
    #[arg(long, short)]
    output: PathBuf,
    /// Optional binary embedding file for later extension.
    #[arg(long)]
    embedding: Option<PathBuf>,
    /// Optional CSV with every eigenvalue.
    #[arg(long)]
    spectrum: Option<PathBuf>,
}

#[derive(Args)]
struct DmExtendArgs {
    /// Training rows; required unless `--embedding` is given.
    #[arg(long, required_unless_present = "embedding")]
    train: Option<PathBuf>,
    /// Saved embedding to extend instead of fitting `--train`.
    #[arg(long)]
    embedding: Option<PathBuf>,
    #[arg(long)]
    test: PathBuf,
    #[command(flatten)]
    columns: FeatureArgs,
    #[command(flatten)]
    diffusion: DiffusionArgs,
    #[command(flatten)]
    pyramid: PyramidArgs,
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct KmeansArgs {
    #[arg(long, short)]
    input: PathBuf,
    #[command(flatten)]
    columns: FeatureArgs,
    #[arg(long, short, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    max_iter: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    /// Column of reference labels to match the clusters against.
    #[arg(long)]
    reference: Option<String>,
    #[arg(long, short)]
    output: PathBuf,
}

fn open_table(path: &Path) -> Result<Table> {
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_table(BufReader::new(file)).with_context(|| format!("{}", path.display()))
}

pub(crate) fn save_table(path: &Path, headers: &[String], values: ArrayView2<f64>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    write_table(BufWriter::new(file), headers, values).with_context(|| format!("{}", path.display()))
}

fn hcat(parts: &[ArrayView2<f64>]) -> Result<Array2<f64>> {
    Ok(concatenate(Axis(1), parts)?)
}

pub(crate) fn column(values: &[f64]) -> Array2<f64> {
    Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("one column")
}

pub(crate) fn format_train_report(report: &TrainReport, sigma0: f64, targets: &[String]) -> String {
    let mut out = String::new();
    writeln!(out, "sigma0 {sigma0}").unwrap();
    write!(out, "level\tsigma").unwrap();
    for t in targets {
        write!(out, "\terror[{t}]").unwrap();
    }
    writeln!(out).unwrap();
    for (level, sigma) in report.bandwidths.iter().enumerate() {
        write!(out, "{level}\t{sigma:.6e}").unwrap();
        for curve in &report.error_curves {
            write!(out, "\t{:.6e}", curve[level]).unwrap();
        }
        writeln!(out).unwrap();
    }
    if report.underflow {
        writeln!(out, "kernel underflow ended training").unwrap();
    }
    for (t, k) in targets.iter().zip(&report.stopping_iter) {
        writeln!(out, "stopping level [{t}]: {k}").unwrap();
    }
    out
}

pub(crate) fn curve_table(report: &TrainReport, targets: &[String]) -> (Vec<String>, Array2<f64>) {
    let mut headers = vec!["level".to_string(), "sigma".to_string()];
    headers.extend(targets.iter().map(|t| format!("error_{t}")));
    let levels = report.bandwidths.len();
    let values = Array2::from_shape_fn((levels, headers.len()), |(l, c)| match c {
        0 => l as f64,
        1 => report.bandwidths[l],
        _ => report.error_curves[c - 2][l],
    });
    (headers, values)
}

pub(crate) fn format_spectrum(emb: &DiffusionEmbedding) -> String {
    let mut out = String::new();
    let shown = (emb.dim() + 2).min(emb.eigenvalues().len());
    writeln!(out, "sigma {}", emb.sigma()).unwrap();
    writeln!(out, "retained dimension {}", emb.dim()).unwrap();
    let lambdas: Vec<String> = emb.eigenvalues().iter().take(shown).map(|l| format!("{l:.6}")).collect();
    writeln!(out, "eigenvalues {}", lambdas.join(" ")).unwrap();
    out
}

fn synth(args: SynthArgs) -> Result<()> {
    match args.kind {
        SynthKind::Sine => {
            let (x, f) = gen_composite_sine(&SyntheticSpec::new(args.n, args.noise, args.seed))?;
            save_table(&args.output, &["x".into(), "y".into()], hcat(&[x.view(), f.view()])?.view())?;
        }
        SynthKind::SwissRoll => {
            let (x, t) = gen_swiss_roll(args.n, args.height, args.noise, args.seed)?;
            let headers: Vec<String> = ["x1", "x2", "x3", "t"].iter().map(|s| s.to_string()).collect();
            let t = column(t.as_slice().expect("contiguous"));
            save_table(&args.output, &headers, hcat(&[x.view(), t.view()])?.view())?;
        }
    }
    println!("wrote {} rows to {}", args.n, args.output.display());
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let table = open_table(&args.input)?;
    let targets = table.select(&args.target)?;
    let (names, x) = args.columns.select(&table, &args.target)?;
    let (model, report) = alp_train(x.view(), targets.view(), &args.pyramid.config()?)?;
    println!("samples {}, inputs {} ({}), outputs {}", x.nrows(), x.ncols(), names.join(","), targets.ncols());
    print!("{}", format_train_report(&report, model.sigma0(), &args.target));
    save_model(&model, &args.model).with_context(|| format!("{}", args.model.display()))?;
    if let Some(path) = &args.curve {
        let (headers, values) = curve_table(&report, &args.target);
        save_table(path, &headers, values.view())?;
    }
    println!("model written to {}", args.model.display());
    Ok(())
}

fn predict(args: PredictArgs) -> Result<()> {
    let model = load_model(&args.model).with_context(|| format!("{}", args.model.display()))?;
    let table = open_table(&args.input)?;
    let (_, x) = args.columns.select(&table, &args.target)?;
    if x.ncols() != model.n_inputs() {
        bail!(
            "model expects {} input columns, {} selected from {}",
            model.n_inputs(),
            x.ncols(),
            args.input.display()
        );
    }
    let pred = alp_predict(&model, x.view())?;
    let mut headers = table.headers.clone();
    headers.extend((1..=pred.ncols()).map(|k| format!("pred_{k}")));
    save_table(&args.output, &headers, hcat(&[table.values.view(), pred.view()])?.view())?;
    if !args.target.is_empty() {
        let truth = table.select(&args.target)?;
        if truth.ncols() != pred.ncols() {
            bail!("{} target columns given for a model with {} outputs", truth.ncols(), pred.ncols());
        }
        for (k, name) in args.target.iter().enumerate() {
            let m = regression_metrics(&truth.column(k).to_vec(), &pred.column(k).to_vec())?;
            println!("[{name}] rmse {} mae {} mean error {}", m.rmse, m.mae, m.mean_error);
        }
    }
    println!("wrote {} predictions to {}", pred.nrows(), args.output.display());
    Ok(())
}

fn argmin(c: &[f64]) -> usize {
    c.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap_or(0)
}

pub(crate) struct OracleComparison {
    pub sigmas: Vec<f64>,
    pub alp: Vec<Vec<f64>>,
    pub oracle: Vec<Vec<f64>>,
}

impl OracleComparison {
    pub fn run(x: ArrayView2<f64>, f: ArrayView2<f64>, sigma0: Option<f64>, mu: f64, levels: usize, mode: KernelMode) -> Result<Self> {
        let cfg = AlpConfig {
            sigma0,
            mu,
            max_iter: levels,
            kernel_mode: mode,
            run_all_levels: true,
            ..AlpConfig::default()
        };
        let (_, report) = alp_train(x, f, &cfg)?;
        let depth = report.bandwidths.len();
        let oracle = exact_loocv_curve(x, f, sigma0, mu, depth)?;
        Ok(OracleComparison {
            sigmas: report.bandwidths,
            alp: report.error_curves,
            oracle,
        })
    }

    pub fn summary(&self, targets: &[String]) -> String {
        let mut out = String::new();
        for (m, t) in targets.iter().enumerate() {
            writeln!(out, "[{t}]").unwrap();
            writeln!(out, "level\tsigma\tpyramid\tleave-one-out").unwrap();
            for (l, s) in self.sigmas.iter().enumerate() {
                writeln!(out, "{l}\t{s:.6e}\t{:.6e}\t{:.6e}", self.alp[m][l], self.oracle[m][l]).unwrap();
            }
            let (ka, ko) = (argmin(&self.alp[m]), argmin(&self.oracle[m]));
            let gap = (self.alp[m][ko] - self.oracle[m][ko]).abs() / self.oracle[m][ko];
            writeln!(out, "pyramid argmin {ka}, leave-one-out argmin {ko}").unwrap();
            writeln!(out, "argmin agreement: {}", if ka == ko { "yes" } else { "no" }).unwrap();
            writeln!(out, "relative gap at leave-one-out minimum: {:.2}%", 100.0 * gap).unwrap();
        }
        out
    }

    pub fn table(&self, targets: &[String]) -> (Vec<String>, Array2<f64>) {
        let mut headers = vec!["level".to_string(), "sigma".to_string()];
        for t in targets {
            headers.push(format!("pyramid_{t}"));
            headers.push(format!("loocv_{t}"));
        }
        let values = Array2::from_shape_fn((self.sigmas.len(), headers.len()), |(l, c)| match c {
            0 => l as f64,
            1 => self.sigmas[l],
            c if c % 2 == 0 => self.alp[(c - 2) / 2][l],
            c => self.oracle[(c - 3) / 2][l],
        });
        (headers, values)
    }
}

fn loocv_oracle(args: OracleArgs) -> Result<()> {
    let table = open_table(&args.input)?;
    let f = table.select(&args.target)?;
    let (_, x) = args.columns.select(&table, &args.target)?;
    let cmp = OracleComparison::run(x.view(), f.view(), args.sigma0, args.mu, args.levels, args.kernel_mode)?;
    print!("{}", cmp.summary(&args.target));
    if let Some(path) = &args.curve {
        let (headers, values) = cmp.table(&args.target);
        save_table(path, &headers, values.view())?;
    }
    Ok(())
}

fn dm(args: DmArgs) -> Result<()> {
    let table = open_table(&args.input)?;
    let (_, x) = args.columns.select(&table, &[])?;
    let emb = dm_fit(x.view(), &args.diffusion.config()?)?;
    print!("{}", format_spectrum(&emb));
    if emb.dim() == 0 {
        bail!("no eigenvalue passes the cutoff; lower --delta");
    }
    save_table(&args.output, &coordinate_headers(emb.dim()), emb.coordinates().view())?;
    if let Some(path) = &args.embedding {
        save_embedding(&emb, path).with_context(|| format!("{}", path.display()))?;
    }
    if let Some(path) = &args.spectrum {
        let values = Array2::from_shape_fn((emb.eigenvalues().len(), 2), |(k, c)| {
            if c == 0 {
                k as f64
            } else {
                emb.eigenvalues()[k]
            }
        });
        save_table(path, &["index".into(), "eigenvalue".into()], values.view())?;
    }
    Ok(())
}

fn dm_extend_cmd(args: DmExtendArgs) -> Result<()> {
    let emb = match (&args.embedding, &args.train) {
        (Some(path), _) => load_embedding(path).with_context(|| format!("{}", path.display()))?,
        (None, Some(path)) => {
            let table = open_table(path)?;
            let (_, x) = args.columns.select(&table, &[])?;
            dm_fit(x.view(), &args.diffusion.config()?)?
        }
        (None, None) => bail!("either --train or --embedding is required"),
    };
    print!("{}", format_spectrum(&emb));
    let test = open_table(&args.test)?;
    let (_, x_test) = args.columns.select(&test, &[])?;
    let coords = dm_extend(&emb, x_test.view(), &args.pyramid.config()?)?;
    save_table(&args.output, &coordinate_headers(emb.dim()), coords.view())?;
    println!("wrote {} extended rows to {}", coords.nrows(), args.output.display());
    Ok(())
}

fn kmeans_cmd(args: KmeansArgs) -> Result<()> {
    let table = open_table(&args.input)?;
    let skip: Vec<String> = args.reference.iter().cloned().collect();
    let (_, x) = args.columns.select(&table, &skip)?;
    let res = kmeans_restarts(x.view(), args.k, args.seed, args.max_iter, args.restarts)?;
    let mut sizes = vec![0usize; args.k];
    for &l in &res.labels {
        sizes[l] += 1;
    }
    println!("inertia {}", res.inertia);
    println!("iterations {}", res.iterations);
    println!("cluster sizes {sizes:?}");
    if let Some(name) = &args.reference {
        let idx = table.column_index(name)?;
        let reference = table
            .values
            .column(idx)
            .iter()
            .enumerate()
            .map(|(row, &v)| {
                if v >= 0.0 && v.fract() == 0.0 && (v as usize) < args.k {
                    Ok(v as usize)
                } else {
                    bail!("reference column `{name}` row {}: `{v}` is not a label in 0..{}", row + 1, args.k)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let cm = cluster_agreement(&reference, &res.labels, args.k)?;
        print!("{}", cm.to_table());
        println!("accuracy {:.4}", cm.accuracy());
    }
    let labels: Vec<f64> = res.labels.iter().map(|&l| l as f64).collect();
    let mut headers = table.headers.clone();
    headers.push("cluster".into());
    save_table(&args.output, &headers, hcat(&[table.values.view(), column(&labels).view()])?.view())?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train(a),
        Command::Predict(a) => predict(a),
        Command::LoocvOracle(a) => loocv_oracle(a),
        Command::Dm(a) => dm(a),
        Command::DmExtend(a) => dm_extend_cmd(a),
        Command::Kmeans(a) => kmeans_cmd(a),
        Command::Experiment(a) => experiment::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => match e.kind() {
            ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => {
                eprintln!("error: a subcommand is required, see `alp --help`");
                return ExitCode::from(2);
            }
            _ => {
                let text = e.to_string();
                let first = text.lines().next().unwrap_or("invalid arguments");
                eprintln!("error: {}", first.trim_start_matches("error: "));
                return ExitCode::from(2);
            }
        },
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", format!("{e:#}").replace('\n', " "));
            ExitCode::FAILURE
        }
    }
}
