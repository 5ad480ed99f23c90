//! Training: Adam optimizer, the episode training loop with metric
//! logging, and binary checkpoints that restore runs bit-exactly.

use std::collections::BTreeMap;
use std::io::Read as _;
use std::path::Path;
use std::time::Instant;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::config::{Dataset, TrainConfig};
use crate::error::{Error, Result};
use crate::eval::{context_reconstruction_nll, mean_stderr, target_nll};
use crate::gp::{sample_episode, EpisodeSpec};
use crate::graph::Graph;
use crate::image::{load_idx, sample_pixel_episode, ImageDataset, PixelEpisodeSpec};
use crate::model::{Episode, Model};
use crate::nn::ParamStore;
use crate::rng::{substream_seed, Stream};
use crate::tensor::Tensor;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"ANPC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named CSV columns of the metrics log.
pub const METRICS_HEADER: &str = "iteration,wall_clock_s,train_loss,ctx_recon_nll,tgt_nll,kl";

/// Per-parameter Adam moments plus the shared step counter.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

impl AdamState {
    pub fn new(params: &ParamStore) -> AdamState {
        let zeros = |t: &Tensor| Tensor::zeros(t.rows(), t.cols());
        AdamState {
            step: 0,
            m: params.iter().map(|(n, t)| (n.clone(), zeros(t))).collect(),
            v: params.iter().map(|(n, t)| (n.clone(), zeros(t))).collect(),
        }
    }
}

/// One Adam update with bias correction. Parameters without a gradient
/// entry (unused in this pass) are left untouched, as are their moments.
pub fn adam_step(
    params: &mut ParamStore,
    grads: &BTreeMap<String, Tensor>,
    state: &mut AdamState,
    lr: f64,
) {
    state.step += 1;
    let t = state.step as f64;
    let bias1 = 1.0 - ADAM_BETA1.powi(state.step as i32);
    let bias2 = 1.0 - ADAM_BETA2.powi(state.step as i32);
    debug_assert!(t >= 1.0);
    for (name, grad) in grads {
        let m = state.m.get_mut(name).expect("adam: unknown parameter");
        let v = state.v.get_mut(name).expect("adam: unknown parameter");
        let p = params.get_mut(name).expect("adam: unknown parameter");
        assert_eq!(p.shape(), grad.shape(), "adam: gradient shape mismatch for {name}");
        let (md, vd, pd, gd) = (m.data_mut(), v.data_mut(), p.data_mut(), grad.data());
        for i in 0..gd.len() {
            md[i] = ADAM_BETA1 * md[i] + (1.0 - ADAM_BETA1) * gd[i];
            vd[i] = ADAM_BETA2 * vd[i] + (1.0 - ADAM_BETA2) * gd[i] * gd[i];
            let m_hat = md[i] / bias1;
            let v_hat = vd[i] / bias2;
            pd[i] -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
}

/// One row of the metrics log.
#[derive(Clone, Copy, Debug)]
pub struct MetricsRow {
    pub iteration: u64,
    pub wall_clock_s: f64,
    pub train_loss: f64,
    pub ctx_recon_nll: f64,
    pub tgt_nll: f64,
    pub kl: f64,
}

impl MetricsRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{:.3},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.iteration, self.wall_clock_s, self.train_loss, self.ctx_recon_nll,
            self.tgt_nll, self.kl
        )
    }
}

enum EpisodeSource {
    Gp(EpisodeSpec),
    Image {
        dataset: ImageDataset,
        spec: PixelEpisodeSpec,
    },
}

impl EpisodeSource {
    fn from_config(config: &TrainConfig) -> Result<EpisodeSource> {
        Ok(match &config.dataset {
            Dataset::Image { path } => {
                let dataset = load_idx(path)?;
                let pixels = dataset.height * dataset.width;
                let spec = PixelEpisodeSpec {
                    n_min: 3,
                    n_max: 200.min(pixels / 2),
                    max_points: 200.min(pixels),
                };
                EpisodeSource::Image { dataset, spec }
            }
            other => EpisodeSource::Gp(EpisodeSpec::gp1d(other.hyper_mode().unwrap())),
        })
    }

    fn sample(&self, rng: &mut Stream) -> Result<Episode> {
        match self {
            EpisodeSource::Gp(spec) => Ok(sample_episode(spec, rng)?.0),
            EpisodeSource::Image { dataset, spec } => sample_pixel_episode(dataset, spec, rng),
        }
    }
}

/// Number of held-out episodes scored per evaluation.
pub const EVAL_EPISODES: usize = 64;

/// The training loop state; checkpointable at any iteration boundary.
pub struct Trainer {
    pub config: TrainConfig,
    pub model: Model,
    pub adam: AdamState,
    pub iteration: u64,
    episode_stream: Stream,
    noise_stream: Stream,
    source: EpisodeSource,
    started: Instant,
}

impl Trainer {
    /// Substream indices under the run seed.
    const SUB_INIT: u64 = 0;
    const SUB_EPISODES: u64 = 1;
    const SUB_NOISE: u64 = 2;
    const SUB_EVAL: u64 = 3;

    pub fn new(config: TrainConfig) -> Result<Trainer> {
        config.validate()?;
        let source = EpisodeSource::from_config(&config)?;
        let mut init_rng = Stream::new(substream_seed(config.seed, Self::SUB_INIT));
        let model = Model::init(config.model_config(), &mut init_rng);
        let adam = AdamState::new(&model.params);
        Ok(Trainer {
            episode_stream: Stream::new(substream_seed(config.seed, Self::SUB_EPISODES)),
            noise_stream: Stream::new(substream_seed(config.seed, Self::SUB_NOISE)),
            source,
            config,
            model,
            adam,
            iteration: 0,
            started: Instant::now(),
        })
    }

    /// One optimization step over a fresh batch: averaged negative ELBO,
    /// one backward pass, one Adam update. Returns (loss, recon, kl)
    /// averaged over the batch (kl unnormalized).
    pub fn step(&mut self) -> Result<(f64, f64, f64)> {
        let graph = Graph::new();
        let fwd = self.model.forward(&graph, true);
        let mut losses = Vec::with_capacity(self.config.batch_size);
        let mut recon_sum = 0.0;
        let mut kl_sum = 0.0;
        for _ in 0..self.config.batch_size {
            let ep = self.source.sample(&mut self.episode_stream)?;
            let noise = self.noise_stream.normal_tensor(1, self.config.d);
            let terms = fwd.elbo_loss(&ep, &noise);
            recon_sum += terms.recon_nll.item();
            kl_sum += terms.kl.item();
            losses.push(terms.loss);
        }
        let refs: Vec<&_> = losses.iter().collect();
        let batch = refs.len() as f64;
        let loss = refs
            .iter()
            .skip(1)
            .fold(refs[0].clone(), |acc, l| acc.add(l))
            .scale(1.0 / batch);

        let loss_value = loss.item();
        self.iteration += 1;
        if !loss_value.is_finite() {
            return Err(Error::NonFiniteLoss {
                iteration: self.iteration,
                loss: loss_value,
                recon: recon_sum / batch,
                kl: kl_sum / batch,
            });
        }

        let grads = graph.backward(&loss);
        let mut by_name = BTreeMap::new();
        for (name, var) in fwd.bound.iter() {
            if let Some(g) = grads.get(var) {
                by_name.insert(name.clone(), g.clone());
            }
        }
        drop(grads);
        drop(losses);
        drop(fwd);
        adam_step(&mut self.model.params, &by_name, &mut self.adam, self.config.learning_rate);
        Ok((loss_value, recon_sum / batch, kl_sum / batch))
    }

    /// Score the current model on held-out episodes. The eval stream is
    /// re-derived from (seed, iteration), so resumed runs evaluate on the
    /// same episodes an uninterrupted run would.
    pub fn evaluate(&self) -> Result<(f64, f64)> {
        let base = substream_seed(self.config.seed, Self::SUB_EVAL);
        let mut rng = Stream::new(substream_seed(base, self.iteration));
        let mut recon = Vec::with_capacity(EVAL_EPISODES);
        let mut tgt = Vec::with_capacity(EVAL_EPISODES);
        for _ in 0..EVAL_EPISODES {
            let ep = self.source.sample(&mut rng)?;
            recon.push(context_reconstruction_nll(&self.model, &ep, &mut rng)?);
            tgt.push(target_nll(&self.model, &ep, &mut rng));
        }
        Ok((mean_stderr(&recon).0, mean_stderr(&tgt).0))
    }

    /// One optimization step; at eval boundaries (every eval interval and
    /// at the final iteration) also evaluates and returns a metrics row.
    pub fn step_logged(&mut self) -> Result<Option<MetricsRow>> {
        let (loss, _, kl) = self.step()?;
        let at_interval = self.iteration.is_multiple_of(self.config.eval_interval);
        if !(at_interval || self.iteration == self.config.iterations) {
            return Ok(None);
        }
        let (ctx_recon_nll, tgt_nll) = self.evaluate()?;
        let row = MetricsRow {
            iteration: self.iteration,
            wall_clock_s: self.started.elapsed().as_secs_f64(),
            train_loss: loss,
            ctx_recon_nll,
            tgt_nll,
            kl,
        };
        if !(row.ctx_recon_nll.is_finite() && row.tgt_nll.is_finite() && row.kl.is_finite()) {
            return Err(Error::NonFiniteLoss {
                iteration: self.iteration,
                loss,
                recon: row.ctx_recon_nll,
                kl: row.kl,
            });
        }
        Ok(Some(row))
    }

    /// Run until `config.iterations`, collecting one metrics row per eval
    /// boundary. `on_row` observes each row as it is produced.
    pub fn run(&mut self, mut on_row: impl FnMut(&MetricsRow)) -> Result<Vec<MetricsRow>> {
        let mut rows = Vec::new();
        while self.iteration < self.config.iterations {
            if let Some(row) = self.step_logged()? {
                on_row(&row);
                rows.push(row);
            }
        }
        Ok(rows)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ctx = || format!("writing checkpoint {}", path.display());
        let mut w = std::io::BufWriter::new(
            std::fs::File::create(path).map_err(|e| Error::io(ctx(), e))?,
        );
        self.write_checkpoint(&mut w).map_err(|e| Error::io(ctx(), e))
    }

    fn write_checkpoint(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
        write_text(w, &self.config.to_text())?;
        w.write_u64::<LittleEndian>(self.iteration)?;
        write_tensor_map(w, self.model.params.iter())?;
        w.write_u64::<LittleEndian>(self.adam.step)?;
        write_tensor_map(w, self.adam.m.iter())?;
        write_tensor_map(w, self.adam.v.iter())?;
        write_rng(w, &self.episode_stream)?;
        write_rng(w, &self.noise_stream)?;
        w.flush()
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Trainer> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| Error::io(format!("reading checkpoint {}", path.display()), e))?;
        let mut r = &bytes[..];
        let fail = |what: &str| Error::Checkpoint(format!("{}: {what}", path.display()));

        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| fail("truncated header"))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(fail(&format!("bad magic {magic:02x?}, expected \"ANPC\"")));
        }
        let version = r.read_u32::<LittleEndian>().map_err(|_| fail("truncated header"))?;
        if version != CHECKPOINT_VERSION {
            return Err(fail(&format!(
                "unsupported version {version}, expected {CHECKPOINT_VERSION}"
            )));
        }
        let config_text = read_text(&mut r).map_err(|_| fail("truncated config"))?;
        let config = TrainConfig::parse(&config_text)?;
        let iteration = r.read_u64::<LittleEndian>().map_err(|_| fail("truncated iteration"))?;
        let param_map = read_tensor_map(&mut r).map_err(|_| fail("truncated parameters"))?;
        let step = r.read_u64::<LittleEndian>().map_err(|_| fail("truncated adam step"))?;
        let m = read_tensor_map(&mut r).map_err(|_| fail("truncated adam m"))?;
        let v = read_tensor_map(&mut r).map_err(|_| fail("truncated adam v"))?;
        let episode_stream = read_rng(&mut r).map_err(|_| fail("truncated rng state"))?;
        let noise_stream = read_rng(&mut r).map_err(|_| fail("truncated rng state"))?;
        if !r.is_empty() {
            return Err(fail("trailing bytes"));
        }

        let mut params = ParamStore::new();
        for (name, tensor) in param_map {
            params.insert(name, tensor);
        }
        let source = EpisodeSource::from_config(&config)?;
        let model = Model {
            config: config.model_config(),
            params,
        };
        if m.len() != model.params.len() || v.len() != model.params.len() {
            return Err(fail("adam state does not cover all parameters"));
        }
        Ok(Trainer {
            episode_stream,
            noise_stream,
            source,
            config,
            model,
            adam: AdamState { step, m, v },
            iteration,
            started: Instant::now(),
        })
    }
}

fn write_text(w: &mut impl std::io::Write, text: &str) -> std::io::Result<()> {
    w.write_u64::<LittleEndian>(text.len() as u64)?;
    w.write_all(text.as_bytes())
}

fn read_text(r: &mut impl std::io::Read) -> std::io::Result<String> {
    let len = r.read_u64::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

fn write_tensor_map<'a>(
    w: &mut impl std::io::Write,
    entries: impl Iterator<Item = (&'a String, &'a Tensor)>,
) -> std::io::Result<()> {
    let entries: Vec<_> = entries.collect();
    w.write_u64::<LittleEndian>(entries.len() as u64)?;
    for (name, tensor) in entries {
        write_text(w, name)?;
        w.write_u64::<LittleEndian>(2)?; // rank
        w.write_u64::<LittleEndian>(tensor.rows() as u64)?;
        w.write_u64::<LittleEndian>(tensor.cols() as u64)?;
        for &value in tensor.data() {
            w.write_f64::<LittleEndian>(value)?;
        }
    }
    Ok(())
}

fn read_tensor_map(r: &mut impl std::io::Read) -> std::io::Result<BTreeMap<String, Tensor>> {
    let bad = |msg: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string());
    let count = r.read_u64::<LittleEndian>()?;
    let mut map = BTreeMap::new();
    for _ in 0..count {
        let name = read_text(r)?;
        let rank = r.read_u64::<LittleEndian>()?;
        if rank != 2 {
            return Err(bad("only rank-2 tensors are supported"));
        }
        let rows = r.read_u64::<LittleEndian>()? as usize;
        let cols = r.read_u64::<LittleEndian>()? as usize;
        let mut data = vec![0.0; rows * cols];
        for value in &mut data {
            *value = r.read_f64::<LittleEndian>()?;
        }
        if map.insert(name, Tensor::from_vec(rows, cols, data)).is_some() {
            return Err(bad("duplicate tensor name"));
        }
    }
    Ok(map)
}

fn write_rng(w: &mut impl std::io::Write, stream: &Stream) -> std::io::Result<()> {
    let (seed, word_pos) = stream.state();
    w.write_u64::<LittleEndian>(seed)?;
    w.write_u128::<LittleEndian>(word_pos)
}

fn read_rng(r: &mut impl std::io::Read) -> std::io::Result<Stream> {
    let seed = r.read_u64::<LittleEndian>()?;
    let word_pos = r.read_u128::<LittleEndian>()?;
    Ok(Stream::restore(seed, word_pos))
}
