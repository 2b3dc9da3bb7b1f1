//! `cpmamba`: generate datasets, train, evaluate and benchmark.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use cpmamba::bench::{bench_backbones, save_bench_csv, BenchConfig};
use cpmamba::channel::{build_dataset, CsiDataset, DatasetSpec, Snr, Split};
use cpmamba::model::{Ablation, ModelConfig, ModelState};
use cpmamba::train::{
    evaluate, parse_grid, save_history_csv, train_with, Axis, EvalOptions, LinearExtrapolation,
    Mode, NoPrediction, Predictor, TrainConfig,
};
use manifest::{Outputs, RunManifest};

#[derive(Parser, Debug)]
#[command(
    name = "cpmamba",
    version,
    about = "CSI prediction with a selective state-space network"
)]
#[command(after_help = "Set CPMAMBA_THREADS to cap the number of worker threads.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate channel sequences and write CSID dataset files.
    GenData(GenDataArgs),
    /// Train a model on generated data.
    Train(TrainArgs),
    /// Evaluate a checkpoint and the baselines over a speed or SNR sweep.
    Eval(EvalArgs),
    /// Time the Mamba and attention backbones against sequence length.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Preset {
    Desk,
    Paper,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModeArg {
    Tdd,
    Fdd,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Tdd => Mode::Tdd,
            ModeArg::Fdd => Mode::Fdd,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AblationArg {
    None,
    #[value(name = "no_se")]
    NoSe,
    #[value(name = "no_patch")]
    NoPatch,
    Attention,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::None => Ablation::None,
            AblationArg::NoSe => Ablation::NoSe,
            AblationArg::NoPatch => Ablation::NoPatch,
            AblationArg::Attention => Ablation::AttentionBackbone,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum AxisArg {
    Speed,
    Snr,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
    All,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Built-in dataset settings used when no config file is given.
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    /// Complete dataset spec as JSON; replaces the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; every sample has its own stream derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Which split to write.
    #[arg(long, value_enum, default_value = "all")]
    split: SplitArg,
    /// Output directory for `<split>.csid` files.
    #[arg(long)]
    out: PathBuf,
}

/// Model and optimiser settings read from `--config`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainRunConfig {
    model: ModelConfig,
    train: TrainConfig,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Directory holding `train.csid` and `val.csid`.
    #[arg(long)]
    data: PathBuf,
    /// Built-in model and training settings used when no config file is given.
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    /// `{"model": …, "train": …}` JSON; replaces the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for initialisation, shuffling, noise and dropout [default: from config].
    #[arg(long)]
    seed: Option<u64>,
    /// Duplex mode [default: from config].
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Model variant [default: from config].
    #[arg(long, value_enum)]
    ablation: Option<AblationArg>,
    /// Total epochs, split between the two learning-rate stages in the
    /// configured ratio [default: from config].
    #[arg(long)]
    epochs: Option<usize>,
    /// Output directory for `model.ckpt` and `history.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    model: PathBuf,
    /// Test dataset file.
    #[arg(long)]
    data: PathBuf,
    /// Swept condition.
    #[arg(long, value_enum, default_value = "speed")]
    axis: AxisArg,
    /// Sweep values as `lo:hi:step` [default: every test speed, or 0:25:5 dB].
    #[arg(long)]
    grid: Option<String>,
    #[arg(long, value_enum, default_value = "tdd")]
    mode: ModeArg,
    /// Seed of the evaluation noise.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Input SNR in dB for speed sweeps.
    #[arg(long, default_value_t = 15.0)]
    snr_db: f64,
    /// Speed subset in km/h for SNR sweeps.
    #[arg(long, default_value_t = 60.0)]
    speed_kmh: f64,
    /// Output directory for `metrics_<method>.csv`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// JSON bench settings; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sequence lengths as `lo:hi:step` [default: 128,256,512,1024].
    #[arg(long)]
    grid: Option<String>,
    /// Comma-separated sequence lengths; overrides `--grid`.
    #[arg(long, value_delimiter = ',')]
    seq_lens: Option<Vec<usize>>,
    /// Width of both backbones [default: 64].
    #[arg(long)]
    d_model: Option<usize>,
    /// Timed repeats per point; the fastest counts [default: 3].
    #[arg(long)]
    repeats: Option<usize>,
    /// Seed of the weights and inputs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for `bench.csv`.
    #[arg(long)]
    out: PathBuf,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))
}

fn gen_data(args: GenDataArgs) -> Result<()> {
    let spec = match &args.config {
        Some(p) => read_json(p)?,
        None => match args.preset {
            Preset::Desk => DatasetSpec::desk(),
            Preset::Paper => DatasetSpec::paper(),
        },
    };
    spec.validate()?;
    let splits: &[Split] = match args.split {
        SplitArg::Train => &[Split::Train],
        SplitArg::Val => &[Split::Val],
        SplitArg::Test => &[Split::Test],
        SplitArg::All => &[Split::Train, Split::Val, Split::Test],
    };
    let mut manifest = RunManifest::new("gen-data", args.seed, &spec)?;
    let mut outputs = Outputs::new(&args.out)?;
    for &split in splits {
        let name = serde_json::to_value(split)?
            .as_str()
            .unwrap_or("data")
            .to_string();
        let start = Instant::now();
        let data = build_dataset(&spec, split, args.seed)?;
        data.save(&outputs.path(&format!("{name}.csid")))?;
        manifest
            .timings
            .insert(name.clone(), start.elapsed().as_secs_f64());
        eprintln!("{name}: {} samples", data.len());
    }
    outputs.commit(manifest)?;
    Ok(())
}

fn train_cmd(args: TrainArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => read_json(p)?,
        None => match args.preset {
            Preset::Desk => TrainRunConfig {
                model: ModelConfig::desk(),
                train: TrainConfig::desk(),
            },
            Preset::Paper => TrainRunConfig {
                model: ModelConfig::paper(),
                train: TrainConfig::paper(),
            },
        },
    };
    if let Some(s) = args.seed {
        cfg.train.seed = s;
    }
    if let Some(m) = args.mode {
        cfg.train.mode = m.into();
    }
    if let Some(a) = args.ablation {
        cfg.train.ablation = a.into();
        cfg.model.ablation = a.into();
    }
    if let Some(n) = args.epochs {
        cfg.train = cfg.train.with_epochs(n);
    }
    if cfg.model.ablation != cfg.train.ablation {
        bail!(
            "config disagrees on ablation: model `{}`, train `{}`",
            cfg.model.ablation,
            cfg.train.ablation
        );
    }
    cfg.model.validate()?;
    cfg.train.validate()?;

    let mut manifest = RunManifest::new("train", cfg.train.seed, &cfg)?;
    let train_path = args.data.join("train.csid");
    let val_path = args.data.join("val.csid");
    manifest.input(&train_path)?;
    manifest.input(&val_path)?;
    let train_data = CsiDataset::load(&train_path)?;
    let val_data = CsiDataset::load(&val_path)?;

    let mut outputs = Outputs::new(&args.out)?;
    let start = Instant::now();
    let state = ModelState::init(cfg.model.clone(), cfg.train.seed)?;
    eprintln!("{} parameters", state.parameter_count());
    let outcome = train_with(state, &train_data, &val_data, &cfg.train, |r| {
        eprintln!(
            "epoch {:>3}  lr {:.0e}  train {:.5}  val {:.5}  ({:.0} s)",
            r.epoch,
            r.lr,
            r.train_nmse,
            r.val_nmse,
            start.elapsed().as_secs_f64()
        );
    })?;
    manifest
        .timings
        .insert("train".into(), start.elapsed().as_secs_f64());
    eprintln!("best epoch {}", outcome.best_epoch);
    outcome.best.save(&outputs.path("model.ckpt"))?;
    save_history_csv(&outcome.history, &outputs.path("history.csv"))?;
    outputs.commit(manifest)?;
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let axis = match args.axis {
        AxisArg::Speed => Axis::Speed,
        AxisArg::Snr => Axis::Snr,
    };
    let grid = args.grid.as_deref().map(parse_grid).transpose()?;
    let state = ModelState::load(&args.model)?;
    let data = CsiDataset::load(&args.data)?;
    let dataset_id = manifest::file_digest(&args.data)?;
    let opts = EvalOptions {
        axis,
        grid,
        mode: args.mode.into(),
        history: state.config.history,
        speed_axis_snr: Snr::Db(args.snr_db),
        snr_axis_speed_kmh: args.speed_kmh,
        seed: args.seed,
        dataset_id,
    };
    #[derive(Serialize)]
    struct Resolved<'a> {
        axis: String,
        grid: &'a Option<Vec<f64>>,
        mode: Mode,
        history: usize,
        snr_db: f64,
        speed_kmh: f64,
    }
    let resolved = Resolved {
        axis: axis.to_string(),
        grid: &opts.grid,
        mode: opts.mode,
        history: opts.history,
        snr_db: args.snr_db,
        speed_kmh: args.speed_kmh,
    };
    let mut manifest = RunManifest::new("eval", args.seed, &resolved)?;
    manifest.input(&args.model)?;
    manifest.input(&args.data)?;

    let mut outputs = Outputs::new(&args.out)?;
    let methods: [&dyn Predictor; 3] = [&state, &NoPrediction, &LinearExtrapolation];
    for method in methods {
        let start = Instant::now();
        let report = evaluate(method, &data, &opts)?;
        let name = report.method.clone();
        report.save_csv(&outputs.path(&format!("metrics_{name}.csv")))?;
        manifest
            .timings
            .insert(name.clone(), start.elapsed().as_secs_f64());
        eprintln!("{name:>16}  mean nmse {:.5}", report.mean_nmse);
    }
    outputs.commit(manifest)?;
    Ok(())
}

fn bench_cmd(args: BenchArgs) -> Result<()> {
    let mut cfg: BenchConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => BenchConfig::default(),
    };
    if let Some(g) = &args.grid {
        cfg.seq_lens = parse_grid(g)?
            .into_iter()
            .map(|v| v.round() as usize)
            .collect();
    }
    if let Some(l) = args.seq_lens {
        cfg.seq_lens = l;
    }
    if let Some(d) = args.d_model {
        cfg.d_model = d;
    }
    if let Some(r) = args.repeats {
        cfg.repeats = r;
    }
    cfg.seed = args.seed;
    let mut manifest = RunManifest::new("bench", cfg.seed, &cfg)?;
    let mut outputs = Outputs::new(&args.out)?;
    let start = Instant::now();
    let rows = bench_backbones(&cfg)?;
    manifest
        .timings
        .insert("bench".into(), start.elapsed().as_secs_f64());
    for r in &rows {
        eprintln!(
            "{:>9} L={:<5} {:.3e} s/token  growth {:.2}",
            r.backbone, r.seq_len, r.per_token_s, r.growth
        );
    }
    save_bench_csv(&rows, &outputs.path("bench.csv"))?;
    outputs.commit(manifest)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Bench(a) => bench_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
