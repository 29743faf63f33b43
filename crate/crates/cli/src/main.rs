//! `lghand`: synthetic data, training, evaluation, ablation and prediction.
//!
//! Exit codes: 0 success, 2 usage or unwritable output, 3 unreadable or invalid
//! input data, 4 non-finite loss during training, 5 checkpoint mismatch.

mod plots;

use std::fmt;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lghand::ablation::{ablation_run, format_table, AblationGrid};
use lghand::data::{
    generate_synthetic, load_dataset, normalize_window, parse_frames, split_train_eval, write_dataset,
    build_windows, CameraModel, SkeletonSequence,
};
use lghand::metrics::{default_thresholds, evaluate, MetricsReport, OracleModel, PosePredictor};
use lghand::nn::{Checkpoint, LocalToGlobalNet};
use lghand::train::{Trainer, LOG_HEADER};
use lghand::{Error, HandTopology, RunConfig};
use ndarray::{s, Array3, Axis};

const SEED_ENV: &str = "LGHAND_SEED";

#[derive(Parser)]
#[command(name = "lghand", version, about = "2D-to-3D hand pose lifting with a spatial-temporal graph network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic sequences in skeleton text format plus camera.toml.
    SynthData {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model; writes checkpoint.json, train_log.tsv and config.resolved.toml.
    Train {
        /// Run config (TOML). Defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Camera file overriding `<data>/camera.toml`.
        #[arg(long)]
        camera: Option<PathBuf>,
        /// Checkpoint to continue from; epoch numbering continues.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint; writes report.json, pck.tsv and SVG plots.
    Eval {
        /// Required unless --oracle is given.
        #[arg(long, required_unless_present = "oracle")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        camera: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Split::Eval)]
        split: Split,
        /// Score ground truth against itself instead of a model.
        #[arg(long, conflicts_with = "checkpoint")]
        oracle: bool,
        /// Window length for --oracle runs.
        #[arg(long, default_value_t = 3)]
        window: usize,
    },
    /// Train and evaluate every entry of an ablation grid.
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Grid file (TOML), or one of the built-ins `loss-weights` and `windows`.
        #[arg(long)]
        grid: String,
        #[arg(long)]
        out: PathBuf,
        /// Dataset root; synthetic sequences are generated when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        camera: Option<PathBuf>,
        /// Synthetic sequence count when --data is omitted.
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 30)]
        frames: usize,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Lift a 2D pixel skeleton file; writes predictions.txt with one frame per window center.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Lines of a frame index followed by 21 (u, v) pixel pairs.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Redraw the SVG plots of a report.json.
    Plot {
        #[arg(long)]
        metrics: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Split {
    Eval,
    Train,
    All,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl fmt::Display) -> Self {
        Self {
            code,
            message: message.to_string(),
        }
    }

    fn output(e: impl fmt::Display) -> Self {
        Self::new(2, e)
    }

    fn data(e: impl fmt::Display) -> Self {
        Self::new(3, e)
    }
}

/// Library errors raised while reading or processing inputs.
impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonFiniteLoss { .. } => 4,
            Error::Checkpoint(_) => 5,
            _ => 3,
        };
        Self::new(code, e)
    }
}

type CliResult<T = ()> = Result<T, Failure>;

/// Creates `dir` and proves it writable before any work starts.
fn prepare_out(dir: &Path) -> CliResult {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::output(format!("cannot create output directory {}: {e}", dir.display())))?;
    let probe = dir.join(".lghand-write-probe");
    std::fs::write(&probe, b"")
        .and_then(|_| std::fs::remove_file(&probe))
        .map_err(|e| Failure::output(format!("output directory {} is not writable: {e}", dir.display())))
}

fn write_out(path: &Path, contents: impl AsRef<[u8]>) -> CliResult {
    std::fs::write(path, contents).map_err(|e| Failure::output(format!("{}: {e}", path.display())))
}

fn require_file(path: &Path, what: &str) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::data(format!("{what} {} does not exist", path.display())))
    }
}

/// `--seed` wins over the environment, which wins over `fallback`.
fn resolve_seed(flag: Option<u64>, fallback: u64) -> CliResult<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::output(format!("{SEED_ENV}={v} is not an unsigned integer"))),
        Err(_) => Ok(fallback),
    }
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn load_config(path: Option<&Path>) -> CliResult<RunConfig> {
    match path {
        Some(p) => {
            require_file(p, "config")?;
            Ok(RunConfig::load(p)?)
        }
        None => Ok(RunConfig::default()),
    }
}

fn load_checkpoint(path: &Path) -> CliResult<(Checkpoint, LocalToGlobalNet)> {
    require_file(path, "checkpoint")?;
    let ckpt = Checkpoint::load(path)?;
    let net = ckpt.restore()?;
    Ok((ckpt, net))
}

fn synth_data(count: usize, frames: usize, seed: Option<u64>, out: &Path) -> CliResult {
    let seed = resolve_seed(seed, 0)?;
    prepare_out(out)?;
    let data = generate_synthetic(count, frames, seed);
    let camera = data
        .first()
        .map(|(_, c)| c.clone())
        .unwrap_or_else(lghand::data::synth::synthetic_camera);
    let seqs: Vec<SkeletonSequence> = data.into_iter().map(|(s, _)| s).collect();
    let paths = write_dataset(out, &seqs, &camera).map_err(Failure::output)?;
    // A closed stdout (e.g. piped into `head`) must not fail the run once files exist.
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(stdout, "# {} sequences, {frames} frames each, seed {seed}", paths.len());
    for (p, s) in paths.iter().zip(&seqs) {
        if writeln!(stdout, "{}\t{}", p.display(), s.len()).is_err() {
            break;
        }
    }
    Ok(())
}

fn train(
    config: Option<&Path>,
    data: &Path,
    out: &Path,
    camera: Option<&Path>,
    resume: Option<&Path>,
    seed: Option<u64>,
) -> CliResult {
    let mut cfg = load_config(config)?;
    cfg.train.seed = resolve_seed(seed, cfg.train.seed)?;
    cfg.validate()?;
    let restored = resume.map(load_checkpoint).transpose()?;
    prepare_out(out)?;
    if let Some(r) = resume {
        let target = out.join("checkpoint.json");
        if target.is_file() && same_file(r, &target) {
            return Err(Failure::output(
                "--out would overwrite the checkpoint being resumed; choose another directory",
            ));
        }
    }

    let dataset = load_dataset(data, camera)?;
    let sequences = if cfg.data.holdout {
        split_train_eval(dataset.sequences)?.0
    } else {
        dataset.sequences
    };
    let samples = build_windows(&sequences, &dataset.camera, cfg.train.window, cfg.data.noise_std, cfg.train.seed)?;
    if samples.is_empty() {
        return Err(Failure::data(format!(
            "no training windows of length {} in {}",
            cfg.train.window,
            data.display()
        )));
    }
    log::info!("{} training windows from {} sequences", samples.len(), sequences.len());

    let mut trainer = match restored {
        Some((ckpt, net)) => {
            if net.config() != &cfg.net {
                return Err(Failure::new(5, "checkpoint architecture differs from the config's [net] table"));
            }
            let optimizer = ckpt
                .optimizer
                .clone()
                .ok_or_else(|| Failure::new(5, "checkpoint has no optimizer state to resume from"))?;
            Trainer::resume(net, optimizer, cfg.train.clone(), ckpt.epochs_completed)?
        }
        None => {
            let net = LocalToGlobalNet::new(cfg.net.clone(), HandTopology::canonical(), cfg.train.seed)?;
            Trainer::new(net, cfg.train.clone())?
        }
    };

    write_out(&out.join("config.resolved.toml"), cfg.to_toml()?)?;
    let log_path = out.join("train_log.tsv");
    let mut log_file = std::fs::File::create(&log_path)
        .map_err(|e| Failure::output(format!("{}: {e}", log_path.display())))?;
    writeln!(log_file, "{LOG_HEADER}").map_err(Failure::output)?;
    let ckpt_path = out.join("checkpoint.json");
    let mut write_error = None;
    let result = trainer.train(&samples, |entry, t| {
        println!("{}", entry.to_tsv_line());
        let written = writeln!(log_file, "{}", entry.to_tsv_line())
            .map_err(|e| Failure::output(format!("{}: {e}", log_path.display())))
            .and_then(|_| {
                Checkpoint::capture(&t.net, t.epochs_completed, Some(&t.optimizer))
                    .save(&ckpt_path)
                    .map_err(Failure::output)
            });
        if let Err(f) = written {
            let msg = f.message.clone();
            write_error = Some(f);
            return Err(Error::Config(msg));
        }
        Ok(())
    });
    if let Some(f) = write_error {
        return Err(f);
    }
    result?;
    if trainer.config.epochs == 0 {
        Checkpoint::capture(&trainer.net, trainer.epochs_completed, Some(&trainer.optimizer))
            .save(&ckpt_path)
            .map_err(Failure::output)?;
    }
    Ok(())
}

fn write_report(report: &MetricsReport, out: &Path) -> CliResult {
    report.save(out.join("report.json")).map_err(Failure::output)?;
    let mut pck = String::from("threshold_mm\tfraction\n");
    for p in &report.pck {
        pck.push_str(&format!("{}\t{}\n", p.threshold, p.fraction));
    }
    write_out(&out.join("pck.tsv"), pck)?;
    plots::write_all(report, out).map_err(|e| Failure::output(format!("plotting failed: {e}")))
}

#[allow(clippy::too_many_arguments)]
fn eval(
    checkpoint: Option<&Path>,
    data: &Path,
    out: &Path,
    camera: Option<&Path>,
    split: Split,
    oracle: bool,
    window: usize,
) -> CliResult {
    let model = checkpoint.map(load_checkpoint).transpose()?;
    prepare_out(out)?;
    let dataset = load_dataset(data, camera)?;
    let sequences = match split {
        Split::All => dataset.sequences,
        Split::Train => split_train_eval(dataset.sequences)?.0,
        Split::Eval => split_train_eval(dataset.sequences)?.1,
    };
    let window = model.as_ref().map_or(window, |(_, net)| net.config().window);
    let samples = build_windows(&sequences, &dataset.camera, window, 0.0, 0)?;
    let topo = HandTopology::canonical();
    let thresholds = default_thresholds();
    let predictor: &dyn PosePredictor = match (&model, oracle) {
        (Some((_, net)), _) => net,
        (None, _) => &OracleModel,
    };
    let report = evaluate(predictor, &samples, &topo, &thresholds)?;
    write_report(&report, out)?;
    println!("samples\t{}", report.samples);
    println!("mpjpe_mm\t{}", report.overall);
    Ok(())
}

fn load_grid(arg: &str) -> CliResult<AblationGrid> {
    match arg {
        "loss-weights" => Ok(AblationGrid::loss_weights()),
        "windows" => Ok(AblationGrid::window_lengths()),
        path => {
            let p = Path::new(path);
            require_file(p, "grid")?;
            Ok(AblationGrid::load(p)?)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn ablate(
    config: Option<&Path>,
    grid: &str,
    out: &Path,
    data: Option<&Path>,
    camera: Option<&Path>,
    count: usize,
    frames: usize,
    seed: Option<u64>,
) -> CliResult {
    let mut cfg = load_config(config)?;
    cfg.train.seed = resolve_seed(seed, cfg.train.seed)?;
    let grid = load_grid(grid)?;
    prepare_out(out)?;
    let (sequences, cam): (Vec<SkeletonSequence>, CameraModel) = match data {
        Some(root) => {
            let d = load_dataset(root, camera)?;
            (d.sequences, d.camera)
        }
        None => {
            let synth = generate_synthetic(count, frames, cfg.train.seed);
            let cam = lghand::data::synth::synthetic_camera();
            (synth.into_iter().map(|(s, _)| s).collect(), cam)
        }
    };
    let (train_seqs, eval_seqs) = if cfg.data.holdout {
        split_train_eval(sequences)?
    } else {
        (sequences, Vec::new())
    };
    let topo = HandTopology::canonical();
    println!("{}", lghand::ablation::TABLE_HEADER);
    let rows = ablation_run(&cfg, &grid, &train_seqs, &eval_seqs, &cam, &topo, |row| {
        let table = format_table(std::slice::from_ref(row));
        if let Some(line) = table.lines().nth(1) {
            println!("{line}");
        }
    })?;
    write_out(&out.join("ablation.tsv"), format_table(&rows))?;
    let json = serde_json::to_string_pretty(&rows).map_err(Failure::output)?;
    write_out(&out.join("ablation.json"), json)?;
    Ok(())
}

fn predict(checkpoint: &Path, input: &Path, out: &Path) -> CliResult {
    let (_, net) = load_checkpoint(checkpoint)?;
    require_file(input, "input")?;
    let file = std::fs::File::open(input).map_err(|e| Failure::data(format!("{}: {e}", input.display())))?;
    let (indices, pixels) = parse_frames(BufReader::new(file), 2, &input.display().to_string())?;
    prepare_out(out)?;
    let t = net.config().window;
    let frames = indices.len();
    if frames < t {
        return Err(Failure::data(format!(
            "{} has {frames} frames, fewer than the model window {t}",
            input.display()
        )));
    }
    let half = t / 2;
    let centers: Vec<usize> = (half..frames - half).collect();
    let windows: Vec<Array3<f64>> = centers
        .iter()
        .map(|&c| normalize_window(pixels.slice(s![c - half..=c + half, .., ..])).0)
        .collect();
    let views: Vec<_> = windows.iter().map(|w| w.view()).collect();
    let preds = net.predict_many(&views)?;
    let joints = ndarray::stack(Axis(0), &preds.iter().map(|p| p.view()).collect::<Vec<_>>())
        .map_err(Failure::data)?;
    let center_indices: Vec<u64> = centers.iter().map(|&c| indices[c]).collect();
    let text = lghand::data::skeleton::format_frames(&center_indices, joints.view());
    write_out(&out.join("predictions.txt"), text)?;
    println!("{} frames -> {} predictions", frames, centers.len());
    Ok(())
}

fn plot(metrics: &Path, out: &Path) -> CliResult {
    require_file(metrics, "metrics report")?;
    let report = MetricsReport::load(metrics)?;
    prepare_out(out)?;
    plots::write_all(&report, out).map_err(|e| Failure::output(format!("plotting failed: {e}")))
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::SynthData {
            count,
            frames,
            seed,
            out,
        } => synth_data(count, frames, seed, &out),
        Command::Train {
            config,
            data,
            out,
            camera,
            resume,
            seed,
        } => train(config.as_deref(), &data, &out, camera.as_deref(), resume.as_deref(), seed),
        Command::Eval {
            checkpoint,
            data,
            out,
            camera,
            split,
            oracle,
            window,
        } => eval(checkpoint.as_deref(), &data, &out, camera.as_deref(), split, oracle, window),
        Command::Ablate {
            config,
            grid,
            out,
            data,
            camera,
            count,
            frames,
            seed,
        } => ablate(config.as_deref(), &grid, &out, data.as_deref(), camera.as_deref(), count, frames, seed),
        Command::Predict { checkpoint, input, out } => predict(&checkpoint, &input, &out),
        Command::Plot { metrics, out } => plot(&metrics, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
