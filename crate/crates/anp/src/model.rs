//! The (Attentive) Neural Process: deterministic path, latent path,
//! decoder, ELBO, and conditional prediction.
//!
//! Pipeline for one episode (context set `(x_C, y_C)`, target inputs `x_T`):
//!
//! - deterministic path: per-pair MLP on `concat(x_i, y_i)`, optional
//!   stacked self-attention, then cross-attention where each target input
//!   attends to the contexts, giving a query-specific `r_*` per target;
//! - latent path: per-pair MLP, optional self-attention, mean over pairs,
//!   head MLP producing a diagonal Gaussian over the global latent `z`;
//! - decoder: MLP on `concat(x_i, r_*i, z)` producing a factorized Gaussian
//!   over each target output.
//!
//! With uniform cross-attention and zero self-attention layers the model is
//! exactly a plain NP: cross-attention degenerates to mean aggregation.

use crate::attention::{
    add_multihead_params, add_self_attention_params, dot_product_attention, laplace_attention,
    multihead_attention, self_attention_stack, uniform_attention, AttentionKind,
};
use crate::graph::{concat_cols, Graph, Var};
use crate::nn::{BoundParams, ParamStore};
use crate::rng::Stream;
use crate::tensor::Tensor;

pub const LN_2PI: f64 = 1.8378770664093453;

/// A context set plus a target set, with the contexts a subset of the
/// targets (`context_indices[i]` locates context row `i` within the
/// target arrays).
#[derive(Clone, Debug)]
pub struct Episode {
    pub x_c: Tensor,
    pub y_c: Tensor,
    pub x_t: Tensor,
    pub y_t: Tensor,
    pub context_indices: Vec<usize>,
}

impl Episode {
    pub fn num_contexts(&self) -> usize {
        self.x_c.rows()
    }

    pub fn num_targets(&self) -> usize {
        self.x_t.rows()
    }

    /// Check C ⊆ T and basic shape consistency; used by tests and loaders.
    pub fn validate(&self) {
        assert_eq!(self.x_c.rows(), self.y_c.rows(), "episode: x_C/y_C row mismatch");
        assert_eq!(self.x_t.rows(), self.y_t.rows(), "episode: x_T/y_T row mismatch");
        assert!(self.num_targets() >= 1, "episode: empty target set");
        assert_eq!(self.context_indices.len(), self.num_contexts());
        for (i, &t) in self.context_indices.iter().enumerate() {
            assert!(t < self.num_targets());
            assert_eq!(self.x_c.row(i), self.x_t.row(t), "episode: context {i} not among targets");
            assert_eq!(self.y_c.row(i), self.y_t.row(t), "episode: context {i} not among targets");
        }
    }

    /// Reorder the context set (targets untouched); for invariance tests.
    pub fn permute_contexts(&self, perm: &[usize]) -> Episode {
        assert_eq!(perm.len(), self.num_contexts());
        let dx = self.x_c.cols();
        let dy = self.y_c.cols();
        Episode {
            x_c: Tensor::from_fn(perm.len(), dx, |i, j| self.x_c.get(perm[i], j)),
            y_c: Tensor::from_fn(perm.len(), dy, |i, j| self.y_c.get(perm[i], j)),
            x_t: self.x_t.clone(),
            y_t: self.y_t.clone(),
            context_indices: perm.iter().map(|&p| self.context_indices[p]).collect(),
        }
    }
}

/// Architecture hyperparameters. `d` is the bottleneck size: hidden width
/// of every MLP and the dimensionality of `r` and `z`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub d_x: usize,
    pub d_y: usize,
    pub d: usize,
    pub attention: AttentionKind,
    pub self_attention_layers: usize,
}

impl ModelConfig {
    pub fn gp1d(d: usize, attention: AttentionKind) -> Self {
        ModelConfig {
            d_x: 1,
            d_y: 1,
            d,
            attention,
            self_attention_layers: 0,
        }
    }

    /// Heads used by self-attention layers (8 unless cross-attention is
    /// multihead with another count).
    fn self_attention_heads(&self) -> usize {
        match self.attention {
            AttentionKind::MultiHead { heads } => heads,
            _ => 8,
        }
    }
}

/// Diagonal Gaussian over the global latent `z`, with the paper's bounded
/// parametrization `sigma = 0.1 + 0.9 * sigmoid(omega)`.
pub struct LatentDistribution {
    pub mean: Var,
    pub std: Var,
}

/// Per-target factorized Gaussian with `sigma = 0.1 + 0.9 * softplus(omega)`.
#[derive(Clone, Debug)]
pub struct Predictive {
    pub mean: Tensor,
    pub std: Tensor,
}

/// Model = configuration + trainable parameters.
#[derive(Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
}

impl Model {
    /// Fresh model with Glorot-uniform weights, zero biases, and a zero
    /// (but trainable) representation for the empty context set.
    pub fn init(config: ModelConfig, rng: &mut Stream) -> Model {
        let d = config.d;
        let d_in = config.d_x + config.d_y;
        let mut params = ParamStore::new();

        // deterministic path
        params.add_mlp("det.pair", &[d_in, d, d, d, d], rng);
        if config.self_attention_layers > 0 {
            add_self_attention_params(
                &mut params,
                "det",
                config.self_attention_layers,
                d,
                config.self_attention_heads(),
                rng,
            );
        }
        if config.attention.uses_key_embedding() {
            params.add_mlp("det.key", &[config.d_x, d, d], rng);
        }
        if let AttentionKind::MultiHead { heads } = config.attention {
            add_multihead_params(&mut params, "det.cross", d, heads, rng);
        }

        // latent path
        params.add_mlp("lat.pair", &[d_in, d, d, d], rng);
        if config.self_attention_layers > 0 {
            add_self_attention_params(
                &mut params,
                "lat",
                config.self_attention_layers,
                d,
                config.self_attention_heads(),
                rng,
            );
        }
        params.add_mlp("lat.head", &[d, d, 2 * d], rng);

        // decoder
        params.add_mlp("dec", &[config.d_x + 2 * d, d, d, d, 2 * config.d_y], rng);

        // fixed-vector representation for the empty context set
        params.insert("r_empty", Tensor::zeros(1, d));

        Model { config, params }
    }

    /// Bind parameters onto a graph for one pass.
    pub fn forward<'a>(&'a self, graph: &Graph, trainable: bool) -> Forward<'a> {
        Forward {
            graph: graph.clone(),
            bound: BoundParams::bind(graph, &self.params, trainable),
            config: &self.config,
        }
    }

    /// Conditional prediction: one [`Predictive`] per latent sample, each
    /// with `z ~ q(z|s_C)` (the prior when the context set is empty).
    pub fn predict(
        &self,
        x_c: &Tensor,
        y_c: &Tensor,
        x_t: &Tensor,
        z_samples: usize,
        rng: &mut Stream,
    ) -> Vec<Predictive> {
        let graph = Graph::new();
        let fwd = self.forward(&graph, false);
        let m = x_t.rows();
        let x_t_var = graph.constant(x_t.clone());

        let (r_star, latent) = if x_c.rows() == 0 {
            let prior = fwd.prior_latent();
            (fwd.bound.get("r_empty").repeat_rows(m), prior)
        } else {
            let x_c_var = graph.constant(x_c.clone());
            let y_c_var = graph.constant(y_c.clone());
            let r = fwd.encode_deterministic(&x_c_var, &y_c_var, &x_t_var);
            let q = fwd.encode_latent(&x_c_var, &y_c_var);
            (r, q)
        };

        (0..z_samples)
            .map(|_| {
                let noise = graph.constant(rng.normal_tensor(1, self.config.d));
                let z = sample_latent(&latent, &noise);
                let (mean, std) = fwd.decode(&x_t_var, &r_star, &z);
                Predictive {
                    mean: mean.value(),
                    std: std.value(),
                }
            })
            .collect()
    }
}

/// One forward pass of the model over its graph-bound parameters.
pub struct Forward<'a> {
    pub graph: Graph,
    pub bound: BoundParams,
    pub config: &'a ModelConfig,
}

pub struct ElboTerms {
    /// Negative ELBO to minimize: recon NLL + KL / m.
    pub loss: Var,
    /// Mean Gaussian NLL over targets.
    pub recon_nll: Var,
    /// Unnormalized KL(q(z|s_T) || q(z|s_C)).
    pub kl: Var,
}

impl<'a> Forward<'a> {
    /// Query-specific representations `r_*: [m, d]`, one per target input.
    pub fn encode_deterministic(&self, x_c: &Var, y_c: &Var, x_t: &Var) -> Var {
        let n = x_c.shape().0;
        assert!(n >= 1, "encode_deterministic: empty context (use r_empty)");
        let m = x_t.shape().0;
        let pair = concat_cols(&[x_c, y_c]);
        let mut rep = self.bound.mlp("det.pair", &pair, 4);
        if self.config.self_attention_layers > 0 {
            rep = self_attention_stack(
                &self.bound,
                "det",
                self.config.self_attention_layers,
                self.config.self_attention_heads(),
                &rep,
            );
        }
        match self.config.attention {
            AttentionKind::Uniform => uniform_attention(&rep, m),
            // Laplace keys/queries are the raw x-coordinates
            AttentionKind::Laplace => laplace_attention(x_t, x_c, &rep),
            AttentionKind::DotProduct => {
                let keys = self.bound.mlp("det.key", x_c, 2);
                let queries = self.bound.mlp("det.key", x_t, 2);
                dot_product_attention(&queries, &keys, &rep)
            }
            AttentionKind::MultiHead { heads } => {
                let keys = self.bound.mlp("det.key", x_c, 2);
                let queries = self.bound.mlp("det.key", x_t, 2);
                multihead_attention(&self.bound, "det.cross", heads, &queries, &keys, &rep)
            }
        }
    }

    /// Posterior over the global latent from a set of pairs.
    pub fn encode_latent(&self, x: &Var, y: &Var) -> LatentDistribution {
        assert!(x.shape().0 >= 1, "encode_latent: empty set (use prior_latent)");
        let pair = concat_cols(&[x, y]);
        let mut rep = self.bound.mlp("lat.pair", &pair, 3);
        if self.config.self_attention_layers > 0 {
            rep = self_attention_stack(
                &self.bound,
                "lat",
                self.config.self_attention_layers,
                self.config.self_attention_heads(),
                &rep,
            );
        }
        let summary = rep.mean_rows();
        let head = self.bound.mlp("lat.head", &summary, 2);
        let d = self.config.d;
        let mean = head.slice_cols(0, d);
        let omega = head.slice_cols(d, 2 * d);
        LatentDistribution {
            mean,
            std: omega.sigmoid().scale(0.9).offset(0.1),
        }
    }

    /// Standard normal prior on `z`, used for the empty context set.
    pub fn prior_latent(&self) -> LatentDistribution {
        let d = self.config.d;
        LatentDistribution {
            mean: self.graph.constant(Tensor::zeros(1, d)),
            std: self.graph.constant(Tensor::filled(1, d, 1.0)),
        }
    }

    /// Decoder: per-target Gaussian from `concat(x_i, r_*i, z)`.
    pub fn decode(&self, x_t: &Var, r_star: &Var, z: &Var) -> (Var, Var) {
        let m = x_t.shape().0;
        let z_rep = z.repeat_rows(m);
        let input = concat_cols(&[x_t, r_star, &z_rep]);
        let out = self.bound.mlp("dec", &input, 4);
        let d_y = self.config.d_y;
        let mean = out.slice_cols(0, d_y);
        let omega = out.slice_cols(d_y, 2 * d_y);
        (mean, omega.softplus().scale(0.9).offset(0.1))
    }

    /// Negative ELBO for one episode, one latent sample (reparametrized).
    ///
    /// `noise` is a `[1, d]` standard-normal draw supplied by the caller so
    /// training and tests stay deterministic. The KL term is divided by the
    /// target count so reconstruction and regularization scale comparably
    /// across episode sizes; `kl` in the result is unnormalized.
    pub fn elbo_loss(&self, episode: &Episode, noise: &Tensor) -> ElboTerms {
        assert!(episode.num_contexts() >= 1, "elbo_loss: empty context set");
        let g = &self.graph;
        let x_c = g.constant(episode.x_c.clone());
        let y_c = g.constant(episode.y_c.clone());
        let x_t = g.constant(episode.x_t.clone());
        let y_t = g.constant(episode.y_t.clone());

        let q_target = self.encode_latent(&x_t, &y_t);
        let q_context = self.encode_latent(&x_c, &y_c);
        let z = sample_latent(&q_target, &g.constant(noise.clone()));
        let r_star = self.encode_deterministic(&x_c, &y_c, &x_t);
        let (mean, std) = self.decode(&x_t, &r_star, &z);

        let recon_nll = gaussian_nll(&y_t, &mean, &std);
        let kl = kl_diag_gaussians(&q_target, &q_context);
        let m = episode.num_targets() as f64;
        let loss = recon_nll.add(&kl.scale(1.0 / m));
        ElboTerms {
            loss,
            recon_nll,
            kl,
        }
    }
}

/// Reparametrized sample `z = mu + sigma ⊙ noise`.
pub fn sample_latent(dist: &LatentDistribution, noise: &Var) -> Var {
    dist.mean.add(&dist.std.mul(noise))
}

/// Mean over targets and output dimensions of `-log N(y | mean, std^2)`.
pub fn gaussian_nll(y: &Var, mean: &Var, std: &Var) -> Var {
    {
        let s = std.value();
        assert!(
            s.data().iter().all(|&x| x > 0.0),
            "gaussian_nll: non-positive std"
        );
    }
    let diff = y.sub(mean).div(std);
    std.ln().add(&diff.square().scale(0.5)).mean_all().offset(0.5 * LN_2PI)
}

/// Closed-form KL between diagonal Gaussians, summed over dimensions:
/// `sum(ln(s2/s1) + (s1^2 + (m1-m2)^2) / (2 s2^2) - 1/2)`.
pub fn kl_diag_gaussians(q1: &LatentDistribution, q2: &LatentDistribution) -> Var {
    let var_ratio = q1.std.div(&q2.std).square();
    let mean_term = q1.mean.sub(&q2.mean).div(&q2.std).square();
    var_ratio
        .add(&mean_term)
        .sub(&var_ratio.ln())
        .offset(-1.0)
        .scale(0.5)
        .sum_all()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub fn toy_config(attention: AttentionKind) -> ModelConfig {
        ModelConfig {
            d_x: 1,
            d_y: 1,
            d: 8,
            attention,
            self_attention_layers: 0,
        }
    }

    pub fn toy_episode(n: usize, m: usize, seed: u64) -> Episode {
        let mut rng = Stream::new(seed);
        let x_t = rng.normal_tensor(m, 1);
        let y_t = rng.normal_tensor(m, 1);
        let idx = rng.sample_indices(m, n);
        let x_c = Tensor::from_fn(n, 1, |i, j| x_t.get(idx[i], j));
        let y_c = Tensor::from_fn(n, 1, |i, j| y_t.get(idx[i], j));
        Episode {
            x_c,
            y_c,
            x_t,
            y_t,
            context_indices: idx,
        }
    }

    fn all_kinds() -> Vec<AttentionKind> {
        vec![
            AttentionKind::Uniform,
            AttentionKind::Laplace,
            AttentionKind::DotProduct,
            AttentionKind::MultiHead { heads: 2 },
        ]
    }

    #[test]
    fn latent_std_bounds() {
        // omega = 0 -> sigma = 0.1 + 0.9 * 0.5 = 0.55
        let g = Graph::new();
        let omega = g.constant(Tensor::zeros(1, 4));
        let sigma = omega.sigmoid().scale(0.9).offset(0.1).value();
        for &s in sigma.data() {
            assert!((s - 0.55).abs() < 1e-15);
        }
    }

    #[test]
    fn predictive_std_at_zero_omega() {
        // softplus(0) = ln 2 -> sigma = 0.1 + 0.9 ln 2
        let g = Graph::new();
        let omega = g.constant(Tensor::zeros(1, 1));
        let sigma = omega.softplus().scale(0.9).offset(0.1).value();
        let expect = 0.1 + 0.9 * 2.0f64.ln();
        assert!((sigma.item() - expect).abs() < 1e-15);
        assert!((sigma.item() - 0.7238).abs() < 1e-4);
    }

    #[test]
    fn variance_bounds_hold_on_random_forward() {
        let mut rng = Stream::new(1);
        let model = Model::init(toy_config(AttentionKind::MultiHead { heads: 2 }), &mut rng);
        let ep = toy_episode(5, 9, 2);
        let g = Graph::new();
        let fwd = model.forward(&g, false);
        let x_c = g.constant(ep.x_c.clone());
        let y_c = g.constant(ep.y_c.clone());
        let x_t = g.constant(ep.x_t.clone());
        let q = fwd.encode_latent(&x_c, &y_c);
        for &s in q.std.value().data() {
            assert!(s > 0.1 && s < 1.0);
        }
        let r = fwd.encode_deterministic(&x_c, &y_c, &x_t);
        let z = sample_latent(&q, &g.constant(rng.normal_tensor(1, 8)));
        let (_, std) = fwd.decode(&x_t, &r, &z);
        for &s in std.value().data() {
            assert!(s > 0.1);
        }
    }

    #[test]
    fn sample_latent_identities() {
        let g = Graph::new();
        let mean = g.leaf(Tensor::from_vec(1, 3, vec![1.0, -2.0, 0.5]));
        let std = g.constant(Tensor::filled(1, 3, 0.1));
        let dist = LatentDistribution {
            mean: mean.clone(),
            std,
        };
        // zero noise -> z = mean
        let z0 = sample_latent(&dist, &g.constant(Tensor::zeros(1, 3)));
        assert_eq!(z0.value(), mean.value());
        // noise = 1 at the 0.1 std bound -> mean + 0.1
        let z1 = sample_latent(&dist, &g.constant(Tensor::filled(1, 3, 1.0)));
        assert_eq!(z1.value(), mean.value().offset(0.1));
        // gradient of sum(z) wrt mean is ones
        let loss = z1.sum_all();
        let grads = g.backward(&loss);
        assert_eq!(grads.get(&mean).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn gaussian_nll_hand_values() {
        let g = Graph::new();
        let y = g.constant(Tensor::from_vec(2, 1, vec![0.3, -1.2]));
        let std1 = g.constant(Tensor::filled(2, 1, 1.0));
        // y = mean, sigma = 1 -> 0.5 ln(2 pi)
        let nll = gaussian_nll(&y, &y, &std1);
        assert!((nll.item() - 0.5 * LN_2PI).abs() < 1e-12);
        assert!((nll.item() - 0.91894).abs() < 1e-5);
        // y = mean + sigma -> 0.5 ln(2 pi) + ln sigma + 0.5
        let sigma = 0.7;
        let stds = g.constant(Tensor::filled(2, 1, sigma));
        let mean = g.constant(Tensor::from_vec(2, 1, vec![0.3 - sigma, -1.2 - sigma]));
        let nll2 = gaussian_nll(&y, &mean, &stds);
        assert!((nll2.item() - (0.5 * LN_2PI + sigma.ln() + 0.5)).abs() < 1e-12);
    }

    #[test]
    fn gaussian_nll_minimized_at_mean() {
        let g = Graph::new();
        let y = g.constant(Tensor::from_vec(1, 1, vec![0.4]));
        let std = g.constant(Tensor::filled(1, 1, 0.3));
        let at_mean = gaussian_nll(&y, &y, &std).item();
        for delta in [-0.5, -0.01, 0.01, 0.5] {
            let m = g.constant(Tensor::from_vec(1, 1, vec![0.4 + delta]));
            assert!(gaussian_nll(&y, &m, &std).item() > at_mean);
        }
    }

    #[test]
    #[should_panic(expected = "non-positive std")]
    fn gaussian_nll_rejects_nonpositive_std() {
        let g = Graph::new();
        let y = g.constant(Tensor::zeros(1, 1));
        let std = g.constant(Tensor::zeros(1, 1));
        let _ = gaussian_nll(&y, &y, &std);
    }

    #[test]
    fn kl_hand_values_and_nonnegativity() {
        let g = Graph::new();
        let dist = |mean: f64, std: f64| LatentDistribution {
            mean: g.constant(Tensor::from_vec(1, 1, vec![mean])),
            std: g.constant(Tensor::from_vec(1, 1, vec![std])),
        };
        // identical -> 0
        assert_eq!(kl_diag_gaussians(&dist(0.3, 0.7), &dist(0.3, 0.7)).item(), 0.0);
        // unit-variance mean shift -> (m1-m2)^2/2 = 0.5
        assert!((kl_diag_gaussians(&dist(1.0, 1.0), &dist(0.0, 1.0)).item() - 0.5).abs() < 1e-12);
        // nonnegative on random inputs
        let mut rng = Stream::new(9);
        for _ in 0..50 {
            let q1 = dist(rng.normal(), 0.1 + rng.uniform(0.0, 2.0));
            let q2 = dist(rng.normal(), 0.1 + rng.uniform(0.0, 2.0));
            assert!(kl_diag_gaussians(&q1, &q2).item() >= 0.0);
        }
    }

    #[test]
    fn elbo_kl_zero_when_targets_equal_contexts() {
        let mut rng = Stream::new(4);
        for kind in all_kinds() {
            let model = Model::init(toy_config(kind), &mut rng);
            let base = toy_episode(6, 6, 5);
            let ep = Episode {
                x_c: base.x_t.clone(),
                y_c: base.y_t.clone(),
                x_t: base.x_t.clone(),
                y_t: base.y_t.clone(),
                context_indices: (0..6).collect(),
            };
            let g = Graph::new();
            let fwd = model.forward(&g, false);
            let terms = fwd.elbo_loss(&ep, &rng.normal_tensor(1, 8));
            assert_eq!(terms.kl.item(), 0.0, "{kind:?}");
            // with KL = 0 the loss equals the reconstruction term
            assert_eq!(terms.loss.item(), terms.recon_nll.item());
        }
    }

    #[test]
    fn elbo_loss_exceeds_recon_when_kl_positive() {
        let mut rng = Stream::new(6);
        let model = Model::init(toy_config(AttentionKind::Uniform), &mut rng);
        let ep = toy_episode(3, 10, 7);
        let g = Graph::new();
        let fwd = model.forward(&g, false);
        let terms = fwd.elbo_loss(&ep, &rng.normal_tensor(1, 8));
        assert!(terms.kl.item() > 0.0);
        assert!(terms.loss.item() > terms.recon_nll.item());
    }

    #[test]
    fn elbo_gradient_matches_finite_differences() {
        // n in {1, 3, 7}; 10 random coordinates each
        let mut rng = Stream::new(8);
        for kind in all_kinds() {
            for n in [1usize, 3, 7] {
                let model = Model::init(toy_config(kind), &mut rng);
                let ep = toy_episode(n, n + 4, 100 + n as u64);
                let noise = rng.normal_tensor(1, 8);

                let loss_at = |params: &ParamStore| {
                    let m = Model {
                        config: model.config.clone(),
                        params: params.clone(),
                    };
                    let g = Graph::new();
                    let fwd = m.forward(&g, false);
                    fwd.elbo_loss(&ep, &noise).loss.item()
                };

                let g = Graph::new();
                let fwd = model.forward(&g, true);
                let terms = fwd.elbo_loss(&ep, &noise);
                assert!(terms.loss.item().is_finite());
                let grads = g.backward(&terms.loss);

                let names: Vec<String> = model.params.names().cloned().collect();
                for trial in 0..10 {
                    let name = &names[rng.uniform_int(0, names.len() - 1)];
                    let tensor = model.params.get(name).unwrap();
                    let coord = rng.uniform_int(0, tensor.len() - 1);

                    let h = 1e-5;
                    let mut plus = model.params.clone();
                    plus.get_mut(name).unwrap().data_mut()[coord] += h;
                    let mut minus = model.params.clone();
                    minus.get_mut(name).unwrap().data_mut()[coord] -= h;
                    let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * h);

                    let analytic = grads.get(fwd.bound.get(name)).map_or(0.0, |t| t.data()[coord]);
                    let denom = fd.abs().max(analytic.abs()).max(1e-6);
                    assert!(
                        (fd - analytic).abs() / denom < 1e-4,
                        "{kind:?} n={n} trial={trial} {name}[{coord}]: fd={fd} analytic={analytic}"
                    );
                }
            }
        }
    }

    #[test]
    fn predict_deterministic_given_noise() {
        let mut rng = Stream::new(10);
        let model = Model::init(toy_config(AttentionKind::DotProduct), &mut rng);
        let ep = toy_episode(4, 9, 11);
        let a = model.predict(&ep.x_c, &ep.y_c, &ep.x_t, 2, &mut Stream::new(77));
        let b = model.predict(&ep.x_c, &ep.y_c, &ep.x_t, 2, &mut Stream::new(77));
        for (p, q) in a.iter().zip(&b) {
            assert_eq!(p.mean, q.mean);
            assert_eq!(p.std, q.std);
        }
    }

    #[test]
    fn predict_empty_context_uses_prior_path() {
        let mut rng = Stream::new(12);
        let model = Model::init(toy_config(AttentionKind::MultiHead { heads: 2 }), &mut rng);
        let x_t = Stream::new(13).normal_tensor(6, 1);
        let preds = model.predict(
            &Tensor::zeros(0, 1),
            &Tensor::zeros(0, 1),
            &x_t,
            3,
            &mut Stream::new(14),
        );
        assert_eq!(preds.len(), 3);
        for p in preds {
            assert_eq!(p.mean.shape(), (6, 1));
            assert!(p.std.data().iter().all(|&s| s > 0.1));
        }
    }

    #[test]
    fn predict_context_permutation_invariant() {
        let mut rng = Stream::new(15);
        for kind in all_kinds() {
            let model = Model::init(toy_config(kind), &mut rng);
            let ep = toy_episode(7, 11, 16);
            let perm = Stream::new(17).sample_indices(7, 7);
            let ep_perm = ep.permute_contexts(&perm);
            let a = model.predict(&ep.x_c, &ep.y_c, &ep.x_t, 1, &mut Stream::new(18));
            let b = model.predict(&ep_perm.x_c, &ep_perm.y_c, &ep_perm.x_t, 1, &mut Stream::new(18));
            for (p, q) in a.iter().zip(&b) {
                for (x, y) in p.mean.data().iter().zip(q.mean.data()) {
                    assert!((x - y).abs() < 1e-9, "{kind:?}");
                }
                for (x, y) in p.std.data().iter().zip(q.std.data()) {
                    assert!((x - y).abs() < 1e-9, "{kind:?}");
                }
            }
        }
    }

    #[test]
    fn single_context_gives_identical_rstar_rows_for_all_kinds() {
        let mut rng = Stream::new(19);
        for kind in all_kinds() {
            let model = Model::init(toy_config(kind), &mut rng);
            let ep = toy_episode(1, 5, 20);
            let g = Graph::new();
            let fwd = model.forward(&g, false);
            let r = fwd
                .encode_deterministic(
                    &g.constant(ep.x_c.clone()),
                    &g.constant(ep.y_c.clone()),
                    &g.constant(ep.x_t.clone()),
                )
                .value();
            for i in 1..5 {
                for j in 0..8 {
                    assert!(
                        (r.get(i, j) - r.get(0, j)).abs() < 1e-12,
                        "{kind:?}: row {i} differs"
                    );
                }
            }
        }
    }
}
