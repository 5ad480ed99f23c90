//! Command-line interface: `train`, `predict`, `eval`, `bo`, and
//! `gen-data` subcommands over the library.
//!
//! Exit codes: 0 success, 2 bad configuration or arguments, 3 non-finite
//! loss during training. The `ANP_OUT_DIR` environment variable sets the
//! default output directory (falling back to `.`).

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::TrainConfig;
use crate::error::{Error, Result};
use crate::eval::{context_reconstruction_nll, mean_stderr, target_nll, thompson_bo, Surrogate};
use crate::gp::{sample_curve, sample_episode, EpisodeSpec, GpHyperparams, HyperMode};
use crate::image::{make_grid, synthetic_shapes, write_idx};
use crate::model::Model;
use crate::rng::{substream_seed, Stream};
use crate::tensor::Tensor;
use crate::train::{Trainer, METRICS_HEADER};

pub const OUT_DIR_ENV: &str = "ANP_OUT_DIR";

#[derive(Parser)]
#[command(name = "anp", about = "Attentive neural processes: train, predict, evaluate", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a config file; writes metrics.csv and checkpoints
    Train {
        /// key = value config file
        #[arg(long)]
        config: PathBuf,
        /// override the config seed
        #[arg(long)]
        seed: Option<u64>,
        /// output directory (default: $ANP_OUT_DIR or .)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict at target inputs given a context set
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        /// context CSV with header x0[,x1],y0
        #[arg(long)]
        context: PathBuf,
        /// `grid:N` (N points over [-2,2], or an NxN image grid) or `file:PATH`
        #[arg(long)]
        targets: String,
        #[arg(long, default_value_t = 1)]
        z_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// output JSON file (default: predictions.json in the out dir)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report mean +/- stderr of both metrics on held-out episodes
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 64)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Thompson-sampling Bayesian optimization over sampled GP objectives
    Bo {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 100)]
        functions: usize,
        #[arg(long, default_value_t = 30)]
        iterations: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// output CSV file (default: bo.csv in the out dir)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate data: GP episode dumps (JSON) or synthetic images (IDX)
    GenData {
        /// `episodes` or `images`
        #[arg(long)]
        kind: String,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// draw GP hyperparameters per episode instead of the fixed setting
        #[arg(long, default_value_t = false)]
        random_hyper: bool,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Run the CLI on the given arguments; returns the process exit code.
pub fn run(args: impl IntoIterator<Item = String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version as "errors" with exit 0
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(err @ Error::NonFiniteLoss { .. }) => {
            eprintln!("error: {err}");
            3
        }
        Err(err) => {
            eprintln!("error: {err}");
            2
        }
    }
}

fn out_dir(explicit: Option<PathBuf>) -> PathBuf {
    explicit
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Train { config, seed, out } => cmd_train(&config, seed, out),
        Command::Predict {
            ckpt,
            context,
            targets,
            z_samples,
            seed,
            out,
        } => cmd_predict(&ckpt, &context, &targets, z_samples, seed, out),
        Command::Eval {
            ckpt,
            episodes,
            seed,
        } => cmd_eval(&ckpt, episodes, seed),
        Command::Bo {
            ckpt,
            functions,
            iterations,
            seed,
            out,
        } => cmd_bo(&ckpt, functions, iterations, seed, out),
        Command::GenData {
            kind,
            count,
            seed,
            random_hyper,
            out,
        } => cmd_gen_data(&kind, count, seed, random_hyper, &out),
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    Ok(std::io::BufWriter::new(
        std::fs::File::create(path)
            .map_err(|e| Error::io(format!("creating {}", path.display()), e))?,
    ))
}

fn cmd_train(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let mut config = TrainConfig::load(config_path)?;
    if let Some(seed) = seed {
        config.seed = seed;
    }
    let dir = out_dir(out);
    std::fs::create_dir_all(&dir)
        .map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;

    // echo the resolved configuration so the run can be reproduced
    std::fs::write(dir.join("resolved.cfg"), config.to_text())
        .map_err(|e| Error::io("writing resolved.cfg", e))?;

    let metrics_path = dir.join("metrics.csv");
    let mut metrics = create(&metrics_path)?;
    let io = |e| Error::io("writing metrics.csv", e);
    writeln!(metrics, "{METRICS_HEADER}").map_err(io)?;

    let mut trainer = Trainer::new(config)?;
    while trainer.iteration < trainer.config.iterations {
        if let Some(row) = trainer.step_logged()? {
            writeln!(metrics, "{}", row.to_csv()).map_err(io)?;
            println!("{}", row.to_csv());
        }
        let ci = trainer.config.checkpoint_interval;
        if ci > 0 && trainer.iteration % ci == 0 && trainer.iteration < trainer.config.iterations {
            trainer.save_checkpoint(dir.join(format!("iter{:08}.ckpt", trainer.iteration)))?;
        }
    }
    metrics.flush().map_err(io)?;
    trainer.save_checkpoint(dir.join("final.ckpt"))?;
    Ok(())
}

/// Parse a context CSV with header `x0[,x1],y0` into (x, y).
pub fn read_context_csv(path: &Path) -> Result<(Tensor, Tensor)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Config(format!("{}: empty context file", path.display())))?;
    let columns: Vec<&str> = header.split(',').map(str::trim).collect();
    let d_x = columns.iter().take_while(|c| c.starts_with('x')).count();
    let d_y = columns.len() - d_x;
    if d_x == 0 || d_y == 0 || !columns[d_x..].iter().all(|c| c.starts_with('y')) {
        return Err(Error::Config(format!(
            "{}: expected header x0[,x1],y0[,y1,...], got `{header}`",
            path.display()
        )));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != columns.len() {
            return Err(Error::Config(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                i + 2,
                fields.len(),
                columns.len()
            )));
        }
        for (j, f) in fields.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| {
                Error::Config(format!("{}: row {}: bad number `{f}`", path.display(), i + 2))
            })?;
            if j < d_x {
                xs.push(v);
            } else {
                ys.push(v);
            }
        }
    }
    let n = xs.len() / d_x;
    Ok((Tensor::from_vec(n, d_x, xs), Tensor::from_vec(n, d_y, ys)))
}

fn resolve_targets(spec: &str, d_x: usize) -> Result<Tensor> {
    if let Some(n) = spec.strip_prefix("grid:") {
        let n: usize = n
            .parse()
            .map_err(|_| Error::Config(format!("bad grid size in `{spec}`")))?;
        if n == 0 {
            return Err(Error::Config("grid size must be >= 1".into()));
        }
        Ok(match d_x {
            1 => Tensor::from_fn(n, 1, |i, _| {
                if n == 1 {
                    -2.0
                } else {
                    -2.0 + 4.0 * i as f64 / (n - 1) as f64
                }
            }),
            2 => make_grid(n, n),
            _ => return Err(Error::Config(format!("unsupported input dim {d_x}"))),
        })
    } else if let Some(path) = spec.strip_prefix("file:") {
        let (x, _) = read_context_csv(Path::new(path))?;
        Ok(x)
    } else {
        Err(Error::Config(format!(
            "targets must be grid:N or file:PATH, got `{spec}`"
        )))
    }
}

#[derive(Serialize)]
struct PredictionBlock {
    mean: Vec<f64>,
    std: Vec<f64>,
}

#[derive(Serialize)]
struct PredictOutput {
    x: Vec<Vec<f64>>,
    predictions: Vec<PredictionBlock>,
}

fn load_model(ckpt: &Path) -> Result<Model> {
    Ok(Trainer::load_checkpoint(ckpt)?.model)
}

fn cmd_predict(
    ckpt: &Path,
    context: &Path,
    targets: &str,
    z_samples: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<()> {
    let model = load_model(ckpt)?;
    let (x_c, y_c) = if std::fs::metadata(context)
        .map_err(|e| Error::io(format!("reading {}", context.display()), e))?
        .len()
        == 0
    {
        (Tensor::zeros(0, model.config.d_x), Tensor::zeros(0, model.config.d_y))
    } else {
        read_context_csv(context)?
    };
    if x_c.rows() > 0 && (x_c.cols() != model.config.d_x || y_c.cols() != model.config.d_y) {
        return Err(Error::Config(format!(
            "context has {} input / {} output columns but the model expects {} / {}",
            x_c.cols(),
            y_c.cols(),
            model.config.d_x,
            model.config.d_y
        )));
    }
    let x_t = resolve_targets(targets, model.config.d_x)?;
    if z_samples == 0 {
        return Err(Error::Config("z_samples must be >= 1".into()));
    }
    let mut rng = Stream::new(seed);
    let preds = model.predict(&x_c, &y_c, &x_t, z_samples, &mut rng);
    let output = PredictOutput {
        x: (0..x_t.rows()).map(|i| x_t.row(i).to_vec()).collect(),
        predictions: preds
            .iter()
            .map(|p| PredictionBlock {
                mean: p.mean.data().to_vec(),
                std: p.std.data().to_vec(),
            })
            .collect(),
    };
    let path = out.unwrap_or_else(|| out_dir(None).join("predictions.json"));
    let file = create(&path)?;
    serde_json::to_writer_pretty(file, &output)
        .map_err(|e| Error::Config(format!("writing {}: {e}", path.display())))?;
    Ok(())
}

fn cmd_eval(ckpt: &Path, episodes: usize, seed: u64) -> Result<()> {
    let trainer = Trainer::load_checkpoint(ckpt)?;
    let model = &trainer.model;
    let spec = match trainer.config.dataset.hyper_mode() {
        Some(mode) => EpisodeSpec::gp1d(mode),
        None => {
            return Err(Error::Config(
                "eval currently scores GP-dataset checkpoints only".into(),
            ))
        }
    };
    let mut rng = Stream::new(substream_seed(seed, 100));
    let mut recon = Vec::with_capacity(episodes);
    let mut tgt = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let (ep, _) = sample_episode(&spec, &mut rng)?;
        recon.push(context_reconstruction_nll(model, &ep, &mut rng)?);
        tgt.push(target_nll(model, &ep, &mut rng));
    }
    let (rm, rs) = mean_stderr(&recon);
    let (tm, ts) = mean_stderr(&tgt);
    println!("ctx_recon_nll: {rm:.6} +/- {rs:.6}");
    println!("tgt_nll: {tm:.6} +/- {ts:.6}");
    Ok(())
}

pub const BO_HEADER: &str = "function_id,iteration,x_query,y_query,simple_regret,cumulative_regret";
pub const BO_GRID_POINTS: usize = 256;

fn cmd_bo(
    ckpt: &Path,
    functions: usize,
    iterations: usize,
    seed: u64,
    out: Option<PathBuf>,
) -> Result<()> {
    let trainer = Trainer::load_checkpoint(ckpt)?;
    let hyp = GpHyperparams::fixed();
    let grid_x = Tensor::from_fn(BO_GRID_POINTS, 1, |i, _| {
        -2.0 + 4.0 * i as f64 / (BO_GRID_POINTS - 1) as f64
    });
    let path = out.unwrap_or_else(|| out_dir(None).join("bo.csv"));
    let mut file = create(&path)?;
    let io = |e| Error::io(format!("writing {}", path.display()), e);
    writeln!(file, "{BO_HEADER}").map_err(io)?;
    let mut objective_rng = Stream::new(substream_seed(seed, 200));
    for f in 0..functions {
        let grid_y = sample_curve(&hyp, &grid_x, &mut objective_rng)?;
        let mut bo_rng = Stream::new(substream_seed(seed, 300 + f as u64));
        let trace = thompson_bo(
            &Surrogate::Anp(&trainer.model),
            &grid_x,
            &grid_y,
            iterations,
            &mut bo_rng,
        )?;
        for i in 0..trace.iterations() {
            writeln!(
                file,
                "{f},{},{},{},{},{}",
                i + 1,
                trace.x_queries[i],
                trace.y_queries[i],
                trace.simple_regret[i],
                trace.cumulative_regret[i]
            )
            .map_err(io)?;
        }
    }
    file.flush().map_err(io)
}

#[derive(Serialize)]
struct EpisodeDump {
    x_c: Vec<f64>,
    y_c: Vec<f64>,
    x_t: Vec<f64>,
    y_t: Vec<f64>,
    hyperparams: GpHyperparams,
}

fn cmd_gen_data(kind: &str, count: usize, seed: u64, random_hyper: bool, out: &Path) -> Result<()> {
    match kind {
        "episodes" => {
            let mode = if random_hyper {
                HyperMode::Random
            } else {
                HyperMode::Fixed
            };
            let spec = EpisodeSpec::gp1d(mode);
            let mut rng = Stream::new(seed);
            let mut dumps = Vec::with_capacity(count);
            for _ in 0..count {
                let (ep, hyp) = sample_episode(&spec, &mut rng)?;
                dumps.push(EpisodeDump {
                    x_c: ep.x_c.data().to_vec(),
                    y_c: ep.y_c.data().to_vec(),
                    x_t: ep.x_t.data().to_vec(),
                    y_t: ep.y_t.data().to_vec(),
                    hyperparams: hyp,
                });
            }
            let file = create(out)?;
            serde_json::to_writer_pretty(file, &dumps)
                .map_err(|e| Error::Config(format!("writing {}: {e}", out.display())))?;
            Ok(())
        }
        "images" => write_idx(out, &synthetic_shapes(count, seed)),
        other => Err(Error::Config(format!(
            "unknown gen-data kind `{other}` (expected episodes or images)"
        ))),
    }
}
