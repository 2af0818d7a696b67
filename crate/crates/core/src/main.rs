use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use nystrom_erm::data::{load_libsvm, Binarization, Dataset};
use nystrom_erm::diagnostics::diagnose;
use nystrom_erm::experiment::{run_experiment, sweep_heatmap, ExperimentConfig};
use nystrom_erm::kernel::{KernelSpec, PrecomputedKernel};
use nystrom_erm::model::{predict, TrainedModel};
use nystrom_erm::nystrom::DEFAULT_EIGEN_TOL;
use nystrom_erm::pipeline::{train_model, PipelineConfig};
use nystrom_erm::sampling::{exact_leverage_scores, select_landmarks, SamplingMethod, SamplingPlan};
use nystrom_erm::solver::{classification_error, LossFamily, LossSpec, StepSchedule, TrainOptions};
use nystrom_erm::synth::{generate, SynthDecay, SynthSpec};
use nystrom_erm::{Error, Result};

#[derive(Parser)]
#[command(name = "nystrom-erm", version, about = "Kernel ERM over random Nystrom subspaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a LIBSVM file and save it as JSON.
    Train(TrainArgs),
    /// Score a LIBSVM file with a saved model.
    Eval(EvalArgs),
    /// Run a grid experiment from a TOML config.
    Sweep(SweepArgs),
    /// Run a lambda x m grid and write mean/std error heatmaps.
    Heatmap(SweepArgs),
    /// Effective dimensions, leverage scores and spectral decay.
    Diagnose(DiagnoseArgs),
    /// Generate a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelFamily {
    Gaussian,
    Linear,
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    kernel: KernelFamily,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
}

impl KernelArgs {
    fn spec(&self) -> Result<KernelSpec> {
        match self.kernel {
            KernelFamily::Gaussian => KernelSpec::gaussian(self.sigma),
            KernelFamily::Linear => Ok(KernelSpec::Linear),
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// LIBSVM file.
    #[arg(long)]
    data: PathBuf,
    /// Comma-separated raw labels mapped to +1; all others map to -1.
    #[arg(long)]
    binarize: Option<String>,
    /// Feature dimension (pads missing trailing features).
    #[arg(long)]
    dim: Option<usize>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        let rule = self.binarize.as_deref().map(Binarization::parse).transpose()?;
        load_libsvm(&self.data, self.dim, rule.as_ref())
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value = "hinge")]
    loss: LossFamily,
    /// Clip level of the logistic loss.
    #[arg(long)]
    clip: Option<f64>,
    #[arg(long)]
    lambda: f64,
    /// Number of landmark draws.
    #[arg(long)]
    m: usize,
    #[arg(long, default_value = "als")]
    sampling: SamplingMethod,
    /// Ridge level of the leverage scores (defaults to lambda).
    #[arg(long)]
    alpha: Option<f64>,
    /// Pilot landmarks for approximate leverage scores (defaults to m).
    #[arg(long)]
    pilot_size: Option<usize>,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    /// Solve the norm-constrained problem with this radius.
    #[arg(long)]
    constrained_radius: Option<f64>,
    /// Return the averaged iterate.
    #[arg(long)]
    average: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    batch: Option<usize>,
    /// Output model file.
    #[arg(long, short)]
    output: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Report unclipped scores.
    #[arg(long)]
    no_clip: bool,
    /// Write `index,score,prediction,label` rows here.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's output directory.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Overrides the config's worker count.
    #[arg(long)]
    workers: Option<usize>,
    /// Overrides the config's training file.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Overrides the config's test file.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
}

impl SweepArgs {
    fn config(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(t) = &self.train {
            cfg.data.train = Some(t.clone());
            cfg.data.synth = None;
        }
        if let Some(t) = &self.test {
            cfg.data.test = Some(t.clone());
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.repeats {
            cfg.repeats = r;
        }
        cfg.validate()?;
        let dir = self
            .output_dir
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("results").join(&cfg.name));
        Ok((cfg, dir))
    }
}

#[derive(Args)]
struct DiagnoseArgs {
    /// LIBSVM file (or use --gram).
    #[arg(long, conflicts_with = "gram")]
    data: Option<PathBuf>,
    #[arg(long)]
    binarize: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// Precomputed Gram matrix (binary or CSV).
    #[arg(long)]
    gram: Option<PathBuf>,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Comma-separated ridge levels.
    #[arg(long, value_delimiter = ',', required = true)]
    alphas: Vec<f64>,
    /// Also report the projection residual of m sampled landmarks.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long, default_value = "uniform")]
    sampling: SamplingMethod,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write exact leverage scores at the first alpha.
    #[arg(long)]
    scores: Option<PathBuf>,
    /// CSV report (stdout when omitted).
    #[arg(long, short)]
    output: Option<PathBuf>,
    /// JSON report including the spectrum fit.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthFormat {
    Libsvm,
    Csv,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// `polynomial:<p>` or `exponential:<beta>`.
    #[arg(long, default_value = "polynomial:0.5")]
    decay: String,
    #[arg(long, default_value_t = 10.0)]
    target_norm: f64,
    #[arg(long, default_value_t = 0.0)]
    label_noise: f64,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "libsvm")]
    format: SynthFormat,
    #[arg(long, short)]
    output: PathBuf,
}

fn train(args: &TrainArgs) -> Result<()> {
    let ds = args.data.load()?;
    let cfg = PipelineConfig {
        kernel: args.kernel.spec()?,
        loss: LossSpec::new(args.loss, args.clip)?,
        lambda: args.lambda,
        constrained_radius: args.constrained_radius,
        sampling: SamplingPlan {
            method: args.sampling,
            m: args.m,
            alpha: args.alpha.unwrap_or(args.lambda),
            pilot_size: args.pilot_size.unwrap_or(args.m),
            seed: args.seed,
        },
        eigen_tol: DEFAULT_EIGEN_TOL,
        batch: args.batch,
        train: TrainOptions {
            epochs: args.epochs,
            seed: args.seed,
            schedule: if args.constrained_radius.is_some() {
                StepSchedule::InvSqrt { scale: None }
            } else {
                StepSchedule::Pegasos
            },
            average: args.average,
            ..TrainOptions::default()
        },
    };
    let model = train_model(&ds, &cfg)?;
    model.save(&args.output)?;
    let scores = predict(&model, ds.points(), true)?;
    println!(
        "trained on {} points: {} landmarks, rank {}, objective {:.6}, training error {:.6}",
        ds.len(),
        model.map.num_landmarks(),
        model.map.rank(),
        model.fit.objective,
        classification_error(&scores, ds.labels())?
    );
    Ok(())
}

fn eval(args: &EvalArgs) -> Result<()> {
    let model = TrainedModel::load(&args.model)?;
    let ds = args.data.load()?.with_dim(model.map.input_dim().max(1))?;
    let scores = predict(&model, ds.points(), !args.no_clip)?;
    let err = classification_error(&scores, ds.labels())?;
    if let Some(path) = &args.predictions {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
        w.write_record(["index", "score", "prediction", "label"])?;
        for (i, (s, y)) in scores.iter().zip(ds.labels()).enumerate() {
            let pred = if *s >= 0.0 { 1 } else { -1 };
            w.write_record([i.to_string(), format!("{s:.9e}"), pred.to_string(), y.to_string()])?;
        }
        w.flush()?;
    }
    println!("c_err {err:.6} on {} points", ds.len());
    Ok(())
}

fn sweep(args: &SweepArgs) -> Result<bool> {
    let (cfg, dir) = args.config()?;
    let results = run_experiment(&cfg)?;
    results.write_to(&dir)?;
    results.write_csv(io::stdout().lock())?;
    let failed = results.failed_cells();
    if failed > 0 {
        eprintln!("{failed} of {} cells failed", results.cells.len());
    }
    Ok(failed == 0)
}

fn heatmap(args: &SweepArgs) -> Result<bool> {
    let (cfg, dir) = args.config()?;
    let hm = sweep_heatmap(&cfg)?;
    hm.write_to(&dir)?;
    hm.write_mean_csv(io::stdout().lock())?;
    if hm.failed_cells > 0 {
        eprintln!("{} cells failed", hm.failed_cells);
    }
    Ok(hm.failed_cells == 0)
}

fn diagnose_cmd(args: &DiagnoseArgs) -> Result<()> {
    let (ds, spec) = match (&args.data, &args.gram) {
        (Some(path), None) => {
            let rule = args.binarize.as_deref().map(Binarization::parse).transpose()?;
            (load_libsvm(path, args.dim, rule.as_ref())?, args.kernel.spec()?)
        }
        (None, Some(path)) => {
            let k = PrecomputedKernel::load(path)?;
            let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let labels = vec![1.0; k.len()];
            let ds = Dataset::new(name, k.index_points(), labels)?;
            (ds, KernelSpec::Precomputed(k))
        }
        _ => return Err(Error::InvalidInput("give --data or --gram".into())),
    };
    let lm = match args.m {
        Some(m) => Some(select_landmarks(
            &ds,
            &spec,
            &SamplingPlan {
                method: args.sampling,
                m,
                alpha: args.alphas[0],
                pilot_size: m,
                seed: args.seed,
            },
        )?),
        None => None,
    };
    let report = diagnose(&ds, &spec, &args.alphas, lm.as_ref())?;
    match &args.output {
        Some(path) => report.write_csv(BufWriter::new(File::create(path)?))?,
        None => report.write_csv(io::stdout().lock())?,
    }
    if let Some(path) = &args.json {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    if let Some(path) = &args.scores {
        let k = nystrom_erm::kernel::gram(&spec, ds.points(), ds.points())?;
        let scores = exact_leverage_scores(&k, args.alphas[0])?;
        scores.write_csv(BufWriter::new(File::create(path)?))?;
    }
    if let Some(fit) = &report.spectrum {
        eprintln!("decay fit: {:?} (rms {:.3e})", fit.decay, fit.fit_residual);
    }
    Ok(())
}

fn synth(args: &SynthArgs) -> Result<()> {
    let decay: SynthDecay = args.decay.parse()?;
    let data = generate(&SynthSpec {
        n: args.n,
        d: args.d,
        decay,
        target_norm: args.target_norm,
        label_noise: args.label_noise,
        margin: args.margin,
        seed: args.seed,
    })?;
    let mut w = BufWriter::new(File::create(&args.output)?);
    match args.format {
        SynthFormat::Libsvm => data.dataset.write_libsvm(&mut w)?,
        SynthFormat::Csv => data.dataset.write_csv(&mut w)?,
    }
    w.flush()?;
    Ok(())
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.command {
        Command::Train(a) => train(a).map(|_| true),
        Command::Eval(a) => eval(a).map(|_| true),
        Command::Sweep(a) => sweep(a),
        Command::Heatmap(a) => heatmap(a),
        Command::Diagnose(a) => diagnose_cmd(a).map(|_| true),
        Command::Synth(a) => synth(a).map(|_| true),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
